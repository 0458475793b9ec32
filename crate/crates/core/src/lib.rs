//! Heat kernels, moment equations and Monte Carlo for the stochastic heat
//! equation `∂ₜu = ½∂²ₓu + μu + λσ(u)Ẇ` on an interval.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod moment;
pub mod noise;
pub mod quadrature;
pub mod sigma;
pub mod simulate;

pub use error::{Error, Result};
pub use kernels::{Boundary, DomainSpec, InitialCondition};
pub use moment::{KernelModel, MomentProblem, VolterraSolution};
pub use noise::{Covariance, NoiseSpec};
pub use sigma::{SigmaKind, SigmaSpec};
pub use simulate::SimConfig;
