//! Gaussian-process QPDF models: one GP regression of q per flipper
//! configuration, with ARD kernels and three ways of handling missing
//! inputs (point prediction after filling, moment matching, Gibbs sampling).

mod gibbs;
pub mod io;
mod kernel;
mod model;
mod uncertain;

pub use gibbs::{
    collapse, gibbs_completions, gibbs_marginalize, mixture_summary, DemPrior, DemSlot, GibbsParams, MixtureSafety,
};
pub use kernel::{kernel_eval, KernelKind, KernelParams};
pub use model::{factorize, gram, lml, lml_and_grad, train_gp, GpModel, GpTrainParams, JITTER_LADDER};
pub use uncertain::{predict_uncertain, predict_uncertain_diag, predict_uncertain_mean_diag};

/// Gaussian predictive distribution of q.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussPred {
    pub mean: f64,
    pub variance: f64,
}
