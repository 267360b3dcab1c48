//! Scalar fields over maze free space and their portable grid file format.
//!
//! A grid file is an ASCII header of `key value` lines ending in `data`,
//! followed by `width * height` little-endian `f32` values in row-major
//! order (row 0 at the bottom, NaN on walls) and then a row-major wall mask
//! packed eight cells per byte, least significant bit first.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::curriculum::{linear_weight, normalize, sample_index, SelectionParams};
use crate::error::{QtaError, Result};
use crate::maze::{MazeEnv, MazeSpec, Rect, Vec2};
use crate::nn::Scalar;
use crate::oracle::OracleField;
use crate::pun::draw_probe_actions;
use crate::rng::{indexed_stream, Rng};

pub const GRID_MAGIC: &str = "QTAGRID 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldLabel {
    Value,
    ValueError,
    Uncertainty,
    GoalProbability,
    OracleValue,
}

impl fmt::Display for FieldLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldLabel::Value => "value",
            FieldLabel::ValueError => "value-error",
            FieldLabel::Uncertainty => "uncertainty",
            FieldLabel::GoalProbability => "goal-probability",
            FieldLabel::OracleValue => "oracle-value",
        })
    }
}

impl FromStr for FieldLabel {
    type Err = QtaError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "value" => FieldLabel::Value,
            "value-error" => FieldLabel::ValueError,
            "uncertainty" => FieldLabel::Uncertainty,
            "goal-probability" => FieldLabel::GoalProbability,
            "oracle-value" => FieldLabel::OracleValue,
            other => return Err(QtaError::format("grid label", other.to_string())),
        })
    }
}

/// Cell layout shared by every field at one resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGeometry {
    pub bounds: Rect,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// `true` on wall cells.
    pub mask: Vec<bool>,
}

impl GridGeometry {
    pub fn new(spec: &MazeSpec, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || resolution > spec.corridor_width / 2.0 {
            return Err(QtaError::invalid(
                "resolution",
                format!("must lie in (0, {}]", spec.corridor_width / 2.0),
            ));
        }
        let b = spec.bounds;
        let width = (b.width() / resolution - 1e-9).ceil() as usize;
        let height = (b.height() / resolution - 1e-9).ceil() as usize;
        let mut geo = Self {
            bounds: b,
            resolution,
            width,
            height,
            mask: Vec::new(),
        };
        geo.mask = (0..width * height).map(|i| !spec.is_free(geo.center(i))).collect();
        Ok(geo)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, index: usize) -> Vec2 {
        let (i, j) = (index % self.width, index / self.width);
        [
            self.bounds.min[0] + (i as f64 + 0.5) * self.resolution,
            self.bounds.min[1] + (j as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn free_cells(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.mask[i]).collect()
    }

    /// Cell containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: Vec2) -> usize {
        let i = ((p[0] - self.bounds.min[0]) / self.resolution).floor().clamp(0.0, (self.width - 1) as f64) as usize;
        let j = ((p[1] - self.bounds.min[1]) / self.resolution).floor().clamp(0.0, (self.height - 1) as f64) as usize;
        j * self.width + i
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub label: FieldLabel,
    pub geometry: GridGeometry,
    pub values: Vec<f32>,
}

impl GridField {
    /// Builds a field from one value per free cell, in `free_cells` order.
    pub fn from_free_values(label: FieldLabel, geometry: GridGeometry, free_values: &[f64]) -> Self {
        let mut values = vec![f32::NAN; geometry.len()];
        for (cell, v) in geometry.free_cells().into_iter().zip(free_values) {
            values[cell] = *v as f32;
        }
        Self {
            label,
            geometry,
            values,
        }
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.geometry.free_cells().iter().map(|&c| f64::from(self.values[c])).collect()
    }

    /// Extremes over unmasked cells.
    pub fn range(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for (v, m) in self.values.iter().zip(&self.geometry.mask) {
            if !m {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        (lo, hi)
    }

    pub fn mean(&self) -> f64 {
        let v = self.free_values();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let (lo, hi) = self.range();
        let mut out = Vec::new();
        let header = format!(
            "{GRID_MAGIC}\nlabel {}\nbounds {:e} {:e} {:e} {:e}\nresolution {:e}\nwidth {}\nheight {}\nmin {:e}\nmax {:e}\ndata\n",
            self.label,
            g.bounds.min[0],
            g.bounds.min[1],
            g.bounds.max[0],
            g.bounds.max[1],
            g.resolution,
            g.width,
            g.height,
            lo,
            hi
        );
        out.extend_from_slice(header.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut bits = vec![0u8; g.len().div_ceil(8)];
        for (i, &m) in g.mask.iter().enumerate() {
            if m {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| QtaError::format("grid file", r.to_string());
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("unterminated header"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not text"))?;
            pos += end + 1;
            Ok(line)
        };
        if next_line()? != GRID_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut label = None;
        let mut bounds = None;
        let mut resolution = None;
        let mut width = None;
        let mut height = None;
        loop {
            let line = next_line()?;
            if line == "data" {
                break;
            }
            let (key, rest) = line.split_once(' ').ok_or_else(|| bad("malformed header line"))?;
            let nums = || -> Result<Vec<f64>> {
                rest.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                    .collect()
            };
            match key {
                "label" => label = Some(rest.parse::<FieldLabel>()?),
                "bounds" => {
                    let v = nums()?;
                    if v.len() != 4 {
                        return Err(bad("bounds needs four numbers"));
                    }
                    bounds = Some(Rect::new([v[0], v[1]], [v[2], v[3]]));
                }
                "resolution" => resolution = Some(nums()?.first().copied().ok_or_else(|| bad("resolution"))?),
                "width" => width = Some(rest.trim().parse::<usize>().map_err(|_| bad("width"))?),
                "height" => height = Some(rest.trim().parse::<usize>().map_err(|_| bad("height"))?),
                "min" | "max" => {}
                _ => return Err(bad("unknown header key")),
            }
        }
        let (label, bounds, resolution, width, height) = match (label, bounds, resolution, width, height) {
            (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
            _ => return Err(bad("incomplete header")),
        };
        let n = width * height;
        let need = n * 4 + n.div_ceil(8);
        if bytes.len() - pos != need {
            return Err(bad("payload size does not match dimensions"));
        }
        let values: Vec<f32> = bytes[pos..pos + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let bits = &bytes[pos + 4 * n..];
        let mask = (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self {
            label,
            geometry: GridGeometry {
                bounds,
                resolution,
                width,
                height,
                mask,
            },
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Goal used for heatmaps: the centre of the goal region.
pub fn canonical_goal(spec: &MazeSpec) -> Vec2 {
    spec.goal_region.center()
}

fn free_centers(geo: &GridGeometry) -> Vec<Vec2> {
    geo.free_cells().into_iter().map(|c| geo.center(c)).collect()
}

fn value_at_cells<F: Scalar>(agent: &Agent<F>, cells: &[Vec2], goal: Vec2) -> Result<Vec<f64>> {
    let goals = vec![goal; cells.len()];
    let actions = agent.actor.actions(cells, &goals)?;
    let actions: Vec<Vec2> = actions
        .rows()
        .into_iter()
        .map(|r| [r[0].to_f64().unwrap_or(f64::NAN), r[1].to_f64().unwrap_or(f64::NAN)])
        .collect();
    agent.ensemble.mean_q_at(cells, &actions, &goals)
}

/// Ensemble-mean value of the policy's action at every free cell.
pub fn field_value<F: Scalar>(agent: &Agent<F>, env: &MazeEnv, goal: Vec2, resolution: f64) -> Result<GridField> {
    let geo = GridGeometry::new(env.spec(), resolution)?;
    let values = value_at_cells(agent, &free_centers(&geo), goal)?;
    Ok(GridField::from_free_values(FieldLabel::Value, geo, &values))
}

/// Discounted optimal value from the geodesic oracle.
pub fn field_oracle(env: &MazeEnv, goal: Vec2, resolution: f64, gamma: f64) -> Result<GridField> {
    let geo = GridGeometry::new(env.spec(), resolution)?;
    let oracle = OracleField::for_goal(env, goal)?;
    let values: Vec<f64> = free_centers(&geo)
        .into_iter()
        .map(|p| oracle.optimal_value(p, gamma))
        .collect();
    Ok(GridField::from_free_values(FieldLabel::OracleValue, geo, &values))
}

/// `|value - optimal value|` per free cell, from two fields on one grid.
pub fn value_error(value: &GridField, oracle: &GridField) -> Result<GridField> {
    if value.geometry != oracle.geometry {
        return Err(QtaError::LayoutMismatch("fields use different grids".into()));
    }
    let v = value.free_values();
    let o = oracle.free_values();
    let err: Vec<f64> = v.iter().zip(&o).map(|(a, b)| (a - b).abs()).collect();
    Ok(GridField::from_free_values(FieldLabel::ValueError, value.geometry.clone(), &err))
}

pub fn field_value_error<F: Scalar>(agent: &Agent<F>, env: &MazeEnv, goal: Vec2, resolution: f64) -> Result<GridField> {
    let gamma = agent.ensemble.config().gamma;
    value_error(
        &field_value(agent, env, goal, resolution)?,
        &field_oracle(env, goal, resolution, gamma)?,
    )
}

/// Raw member disagreement per free cell. Each cell draws its probe actions
/// from its own stream keyed by `(seed, cell index)`.
pub fn field_uncertainty<F: Scalar>(
    agent: &Agent<F>,
    env: &MazeEnv,
    goal: Vec2,
    resolution: f64,
    d: usize,
    seed: u64,
) -> Result<GridField> {
    let geo = GridGeometry::new(env.spec(), resolution)?;
    let cells = geo.free_cells();
    let mut actions = Vec::with_capacity(cells.len() * d);
    for &c in &cells {
        let mut rng = indexed_stream(seed, "cell", c as u64);
        actions.extend(draw_probe_actions(1, d, &mut rng));
    }
    let states = free_centers(&geo);
    let goals = vec![goal; states.len()];
    let values = agent.ensemble.uncertainty_with_actions(&states, &goals, &actions, d)?;
    Ok(GridField::from_free_values(FieldLabel::Uncertainty, geo, &values))
}

/// Selection probability of every free cell when all of them are goal
/// candidates. The flag reports the all-zero-weight uniform fallback.
pub fn field_goal_probability(uncertainty: &GridField, params: &SelectionParams) -> Result<(GridField, bool)> {
    let raw = uncertainty.free_values();
    let normalized = normalize(&raw)?;
    let weights: Vec<f64> = normalized
        .iter()
        .map(|&e| linear_weight(e, params.slope, params.intercept))
        .collect();
    let total: f64 = weights.iter().sum();
    let (probs, flagged) = if total > 0.0 && total.is_finite() {
        (weights.iter().map(|w| w / total).collect::<Vec<_>>(), false)
    } else {
        (vec![1.0 / raw.len() as f64; raw.len()], true)
    };
    Ok((
        GridField::from_free_values(FieldLabel::GoalProbability, uncertainty.geometry.clone(), &probs),
        flagged,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSample {
    pub x: f64,
    pub y: f64,
    pub cell: usize,
    pub epsilon: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalSampleDump {
    pub samples: Vec<GoalSample>,
}

impl GoalSampleDump {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,cell,epsilon,weight")?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{},{}", s.x, s.y, s.cell, s.epsilon, s.weight)?;
        }
        Ok(())
    }
}

/// Draws `n` cell centres with the goal-probability distribution. The
/// probabilities are recomputed in double precision from the raw field.
pub fn dump_goals(uncertainty: &GridField, params: &SelectionParams, n: usize, rng: &mut Rng) -> Result<GoalSampleDump> {
    let cells = uncertainty.geometry.free_cells();
    let raw = uncertainty.free_values();
    let normalized = normalize(&raw)?;
    let weights: Vec<f64> = normalized
        .iter()
        .map(|&e| linear_weight(e, params.slope, params.intercept))
        .collect();
    let probs: Vec<f64> = if weights.iter().sum::<f64>() > 0.0 {
        weights.clone()
    } else {
        vec![1.0; weights.len()]
    };
    let samples = (0..n)
        .map(|_| {
            let k = sample_index(&probs, rng);
            let p = uncertainty.geometry.center(cells[k]);
            GoalSample {
                x: p[0],
                y: p[1],
                cell: cells[k],
                epsilon: raw[k],
                weight: weights[k],
            }
        })
        .collect();
    Ok(GoalSampleDump { samples })
}

/// Average ranks, ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Indices of the `ceil(len / 10)` largest values among `eligible`.
pub fn top_decile(values: &[f64], eligible: &[bool]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| eligible[i]).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let k = values.len().div_ceil(10).min(idx.len());
    idx.truncate(k);
    idx
}

/// Fraction of the goal-probability field's top decile (cells with non-zero
/// probability) that also lies in the uncertainty field's top decile.
pub fn top_decile_overlap(goal_probability: &GridField, uncertainty: &GridField) -> f64 {
    let p = goal_probability.free_values();
    let u = uncertainty.free_values();
    let nonzero: Vec<bool> = p.iter().map(|&v| v > 0.0).collect();
    let top_p = top_decile(&p, &nonzero);
    let top_u: std::collections::HashSet<usize> = top_decile(&u, &vec![true; u.len()]).into_iter().collect();
    if top_p.is_empty() {
        return 0.0;
    }
    top_p.iter().filter(|i| top_u.contains(i)).count() as f64 / top_p.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ObsScale;
    use crate::maze::{EnvConfig, MazeKind};
    use crate::nn::{Activation, Mlp};
    use crate::pun::{CriticEnsemble, EnsembleConfig, Member};
    use crate::rng::stream;

    fn env() -> MazeEnv {
        MazeEnv::new(MazeSpec::generate(MazeKind::MMaze, 4, 1.0).unwrap(), EnvConfig::default()).unwrap()
    }

    fn zero_agent(env: &MazeEnv) -> Agent<f64> {
        let scale = ObsScale::from_bounds(&env.spec().bounds);
        let member = || {
            Member::from_networks(
                Mlp::zeros(&[6, 8, 8, 1], Activation::Identity).unwrap(),
                Mlp::zeros(&[8, 2], Activation::Identity).unwrap(),
            )
        };
        let config = EnsembleConfig {
            hidden_size: 8,
            ..EnsembleConfig::default()
        };
        let ensemble = CriticEnsemble::from_members(vec![member(), member(), member()], config, scale).unwrap();
        let actor = crate::agent::Actor::new(&[8, 8], scale, 1e-3, &mut stream(0, "a")).unwrap();
        Agent { ensemble, actor }
    }

    #[test]
    fn zero_networks_give_zero_fields_and_wall_masks() {
        let env = env();
        let agent = zero_agent(&env);
        let g = canonical_goal(env.spec());
        let v = field_value(&agent, &env, g, 0.1).unwrap();
        assert!(v.free_values().iter().all(|&x| x == 0.0));
        let u = field_uncertainty(&agent, &env, g, 0.1, 4, 1).unwrap();
        assert!(u.free_values().iter().all(|&x| x == 0.0));
        for (i, &m) in v.geometry.mask.iter().enumerate() {
            assert_eq!(m, !env.spec().is_free(v.geometry.center(i)));
            assert_eq!(m, v.values[i].is_nan());
        }
        assert_eq!(v.geometry, u.geometry);
        let e = field_value_error(&agent, &env, g, 0.1).unwrap();
        assert!(e.free_values().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn coarse_resolution_rejected() {
        let env = env();
        assert!(GridGeometry::new(env.spec(), 0.6).is_err());
        assert!(GridGeometry::new(env.spec(), 0.5).is_ok());
    }

    #[test]
    fn dimensions_follow_extent() {
        let env = env();
        let geo = GridGeometry::new(env.spec(), 0.1).unwrap();
        let b = env.spec().bounds;
        assert_eq!(geo.width, (b.width() / 0.1).round() as usize);
        assert_eq!(geo.height, (b.height() / 0.1).round() as usize);
    }

    #[test]
    fn grid_round_trip_is_bitwise() {
        let env = env();
        let o = field_oracle(&env, canonical_goal(env.spec()), 0.1, 0.99).unwrap();
        let bytes = o.to_bytes();
        let back = GridField::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.geometry, o.geometry);
        assert!(back.values.iter().zip(&o.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(GridField::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn goal_probabilities_sum_to_one() {
        let env = env();
        let geo = GridGeometry::new(env.spec(), 0.1).unwrap();
        let n = geo.free_cells().len();
        let raw: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let u = GridField::from_free_values(FieldLabel::Uncertainty, geo, &raw);
        let (p, flagged) = field_goal_probability(&u, &SelectionParams::default()).unwrap();
        assert!(!flagged);
        assert!((p.free_values().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(top_decile_overlap(&p, &u) > 0.8);
    }

    #[test]
    fn uniform_uncertainty_falls_back() {
        let env = env();
        let geo = GridGeometry::new(env.spec(), 0.1).unwrap();
        let n = geo.free_cells().len();
        let u = GridField::from_free_values(FieldLabel::Uncertainty, geo, &vec![0.0; n]);
        let (_, flagged) = field_goal_probability(
            &u,
            &SelectionParams {
                slope: 1.0,
                intercept: -2.0,
                ..SelectionParams::default()
            },
        )
        .unwrap();
        assert!(flagged);
    }

    #[test]
    fn rank_statistics() {
        assert_eq!(ranks(&[10.0, 30.0, 20.0, 20.0]), vec![1.0, 4.0, 2.5, 2.5]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 200.0, 3000.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }
}
