//! Constrained convex generator sets and their calculus.

mod ccg;
mod cmcg;
pub mod conic;
mod interval;
mod norm;
mod probzono;
mod program;
mod reduce;
mod sample;

pub use ccg::{Ccg, CcgData, Constraint, Membership, NONEMPTY_TOL};
pub use cmcg::Cmcg;
pub use interval::IntervalBox;
pub use norm::{Norm, NormGroup};
pub use probzono::{probzono_truncate, ProbabilisticZonotope};
pub use sample::CoefficientSampler;
