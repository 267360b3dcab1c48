#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod analysis;
pub mod checkpoint;
pub mod curriculum;
pub mod error;
pub mod features;
pub mod harness;
pub mod maze;
pub mod nn;
pub mod oracle;
pub mod pun;
pub mod replay;
pub mod rng;

pub use agent::{ActMode, Actor, Agent, ExplorationPolicy};
pub use curriculum::{GoalCandidate, Selection, SelectionParams};
pub use error::{QtaError, Result};
pub use features::ObsScale;
pub use maze::{EnvConfig, EnvState, MazeEnv, MazeKind, MazeSpec, Rect, StepResult, Vec2};
pub use oracle::{OracleField, Target};
pub use pun::{CriticEnsemble, EnsembleConfig, EnsembleMode, TargetPolicy, UncertaintyEstimate, UncertaintySource};
pub use replay::{BufferMode, PrioritizedHindsightBuffer, ReplayConfig, SampledBatch, SumTree, Transition};
