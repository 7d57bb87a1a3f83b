//! Maximal daters and tail decay rates for monotone-separable queueing networks.

pub mod analytic;
pub mod axioms;
pub mod dist;
pub mod estimate;
pub mod ext;
pub mod io;
pub mod net;
pub mod rng;
pub mod tailsim;

pub use dist::{Dependence, DistError, DistributionKind, DistributionSpec, MarkLaw};
pub use ext::ExtReal;
pub use net::{BackwardDater, NetError, NetworkModel, PathView, SamplePath, TandemModel};
pub use rng::{SeededStream, StreamKey};
pub use analytic::{AnalyticError, AnalyticRate, ClosedFormLambda, Regime};
pub use estimate::{EstimateConfig, EstimateError, GammaEstimate, LambdaEstimate, ThetaMethod, ThetaResult, ThetaStep};
pub use tailsim::{BatchPlan, HorizonPolicy, SlopeFit, TailError, TailSample};
