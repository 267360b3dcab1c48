//! Versioned binary checkpoints of the full agent.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` manifest length, the
//! JSON manifest, then every parameter block as little-endian scalars in
//! manifest order. A layer block is its weights row-major followed by its
//! bias; an Adam block is its first moments followed by its second moments.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::agent::{Actor, Agent};
use crate::error::{QtaError, Result};
use crate::features::ObsScale;
use crate::nn::{Activation, AdamConfig, AdamState, Layer, Mlp, Scalar};
use crate::pun::{CriticEnsemble, EnsembleConfig, Member};

pub const MAGIC: &[u8; 8] = b"QTACKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    pub sizes: Vec<usize>,
    pub output: Activation,
    /// Step counters of the Adam states stored after this network.
    pub adam_steps: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub scalar: String,
    pub ensemble: EnsembleConfig,
    pub scale: ObsScale,
    pub actor_lr: f64,
    pub adam: AdamConfig,
    pub networks: Vec<NetworkEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

struct Writer<'a, F> {
    entries: Vec<NetworkEntry>,
    blob: &'a mut Vec<u8>,
    _f: std::marker::PhantomData<F>,
}

impl<F: Scalar> Writer<'_, F> {
    fn layers(&mut self, layers: &[Layer<F>]) {
        for l in layers {
            for &v in l.weight.iter().chain(l.bias.iter()) {
                v.to_le_bytes_vec(self.blob);
            }
        }
    }

    fn net(&mut self, name: String, net: &Mlp<F>, opts: &[&AdamState<F>]) {
        self.layers(net.layers());
        for opt in opts {
            self.layers(&opt.first);
            self.layers(&opt.second);
        }
        self.entries.push(NetworkEntry {
            name,
            sizes: net.sizes(),
            output: net.output_activation(),
            adam_steps: opts.iter().map(|o| o.step).collect(),
        });
    }
}

pub fn to_bytes<F: Scalar>(agent: &Agent<F>, metadata: serde_json::Value) -> Result<Vec<u8>> {
    let mut blob = Vec::new();
    let mut w = Writer::<F> {
        entries: Vec::new(),
        blob: &mut blob,
        _f: std::marker::PhantomData,
    };
    for (i, m) in agent.ensemble.members().iter().enumerate() {
        w.net(format!("critic.{i}"), &m.critic, &[&m.critic_opt, &m.backbone_opt]);
        w.net(format!("critic_target.{i}"), &m.target, &[]);
        w.net(format!("predictor.{i}"), &m.predictor, &[&m.predictor_opt]);
    }
    w.net("actor".into(), &agent.actor.net, &[&agent.actor.opt]);
    w.net("actor_target".into(), &agent.actor.target, &[]);
    let manifest = Manifest {
        version: FORMAT_VERSION,
        scalar: F::TAG.into(),
        ensemble: agent.ensemble.config().clone(),
        scale: *agent.ensemble.scale(),
        actor_lr: agent.actor.lr,
        adam: agent.actor.opt.config,
        networks: w.entries,
        metadata,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| QtaError::format("checkpoint manifest", e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| QtaError::format("checkpoint", "truncated parameter block"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn layers<F: Scalar>(&mut self, sizes: &[usize]) -> Result<Vec<Layer<F>>> {
        let width = std::mem::size_of::<F>();
        sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let raw = self.take((i * o + o) * width)?;
                let vals: Vec<F> = raw.chunks_exact(width).map(F::read_le).collect();
                let weight = Array2::from_shape_vec((i, o), vals[..i * o].to_vec())
                    .map_err(|e| QtaError::format("checkpoint", e.to_string()))?;
                Ok(Layer {
                    weight,
                    bias: Array1::from(vals[i * o..].to_vec()),
                })
            })
            .collect()
    }
}

struct Loaded<F: Scalar> {
    net: Mlp<F>,
    opts: Vec<AdamState<F>>,
}

pub fn read_manifest(bytes: &[u8]) -> Result<(Manifest, usize)> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(QtaError::format("checkpoint", "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(QtaError::format("checkpoint", format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let end = 20usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| QtaError::format("checkpoint", "truncated manifest"))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[20..end]).map_err(|e| QtaError::format("checkpoint manifest", e.to_string()))?;
    Ok((manifest, end))
}

pub fn from_bytes<F: Scalar>(bytes: &[u8]) -> Result<(Agent<F>, Manifest)> {
    let (manifest, start) = read_manifest(bytes)?;
    if manifest.scalar != F::TAG {
        return Err(QtaError::format(
            "checkpoint",
            format!("stored as {}, requested {}", manifest.scalar, F::TAG),
        ));
    }
    let mut reader = Reader { bytes, pos: start };
    let mut loaded = Vec::with_capacity(manifest.networks.len());
    for entry in &manifest.networks {
        let net = Mlp::from_layers(reader.layers(&entry.sizes)?, entry.output)?;
        let mut opts = Vec::new();
        for &step in &entry.adam_steps {
            opts.push(AdamState {
                first: reader.layers(&entry.sizes)?,
                second: reader.layers(&entry.sizes)?,
                step,
                config: manifest.adam,
            });
        }
        loaded.push(Loaded::<F> { net, opts });
    }
    if reader.pos != bytes.len() {
        return Err(QtaError::format("checkpoint", "trailing bytes after parameters"));
    }
    let g = manifest.ensemble.members;
    if loaded.len() != 3 * g + 2 {
        return Err(QtaError::format("checkpoint", "network count does not match ensemble size"));
    }
    let mut it = loaded.into_iter();
    let mut members = Vec::with_capacity(g);
    for _ in 0..g {
        let bad = || QtaError::format("checkpoint", "missing optimizer state");
        let critic = it.next().ok_or_else(bad)?;
        let target = it.next().ok_or_else(bad)?;
        let predictor = it.next().ok_or_else(bad)?;
        let mut copts = critic.opts.into_iter();
        let mut popts = predictor.opts.into_iter();
        members.push(Member {
            critic: critic.net,
            target: target.net,
            predictor: predictor.net,
            critic_opt: copts.next().ok_or_else(bad)?,
            backbone_opt: copts.next().ok_or_else(bad)?,
            predictor_opt: popts.next().ok_or_else(bad)?,
        });
    }
    let ensemble = CriticEnsemble::from_members(members, manifest.ensemble.clone(), manifest.scale)?;
    let actor = it.next().expect("count checked");
    let actor_target = it.next().expect("count checked");
    let mut a = Actor::from_network(actor.net, manifest.scale, manifest.actor_lr)?;
    a.target = actor_target.net;
    a.opt = actor
        .opts
        .into_iter()
        .next()
        .ok_or_else(|| QtaError::format("checkpoint", "missing actor optimizer"))?;
    Ok((Agent { ensemble, actor: a }, manifest))
}

pub fn save<F: Scalar>(path: &Path, agent: &Agent<F>, metadata: serde_json::Value) -> Result<()> {
    let bytes = to_bytes(agent, metadata)?;
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load<F: Scalar>(path: &Path) -> Result<(Agent<F>, Manifest)> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::Transition;
    use crate::rng::stream;

    fn trained_agent() -> Agent<f32> {
        let mut rng = stream(0, "init");
        let config = EnsembleConfig {
            hidden_size: 8,
            ..EnsembleConfig::default()
        };
        let scale = ObsScale::from_bounds(&crate::maze::Rect::new([0.0, 0.0], [5.0, 5.0]));
        let ensemble = CriticEnsemble::new(config, scale, &mut rng).unwrap();
        let actor = Actor::new(&[8, 8], scale, 1e-3, &mut rng).unwrap();
        let mut agent = Agent { ensemble, actor };
        let batch: Vec<Transition> = (0..16)
            .map(|i| Transition {
                obs: [0.2 * i as f64, 1.0],
                action: [0.5, -0.5],
                reward: -1.0,
                next_obs: [0.2 * i as f64 + 0.25, 0.75],
                goal: [4.0, 4.0],
                achieved: [0.2 * i as f64 + 0.25, 0.75],
                terminal: false,
                trajectory: 0,
                index: i,
            })
            .collect();
        for _ in 0..3 {
            agent.update(&batch, None, &mut rng).unwrap();
        }
        agent
    }

    #[test]
    fn round_trip_is_bitwise() {
        let agent = trained_agent();
        let bytes = to_bytes(&agent, serde_json::json!({"step": 3})).unwrap();
        let (back, manifest) = from_bytes::<f32>(&bytes).unwrap();
        assert_eq!(manifest.metadata["step"], 3);
        assert_eq!(to_bytes(&back, manifest.metadata.clone()).unwrap(), bytes);
        for (a, b) in agent.ensemble.members().iter().zip(back.ensemble.members()) {
            assert_eq!(a.critic, b.critic);
            assert_eq!(a.target, b.target);
            assert_eq!(a.predictor, b.predictor);
            assert_eq!(a.backbone_opt, b.backbone_opt);
        }
        assert_eq!(agent.actor.opt, back.actor.opt);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = to_bytes(&trained_agent(), serde_json::Value::Null).unwrap();
        assert!(from_bytes::<f32>(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes::<f64>(&bytes).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes::<f32>(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(from_bytes::<f32>(&extra).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let agent = trained_agent();
        save(&path, &agent, serde_json::Value::Null).unwrap();
        let (back, _) = load::<f32>(&path).unwrap();
        assert_eq!(back.actor.net, agent.actor.net);
    }
}
