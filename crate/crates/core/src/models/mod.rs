//! Data generating processes: simulators, conditional predictives and exact
//! likelihood kernels.

pub mod binding;
pub mod inar;
pub mod jumpdiff;
pub mod ma2;
pub mod realized;
pub mod stable;
pub mod sv;

pub use binding::{binding_function, BindingModel};
pub use inar::{inar1_conditional_pmf, inar1_simulate, Inar1Params, TransitionCounts};
pub use jumpdiff::{jumpdiff_simulate, JumpDiffParams, JumpDiffSeries, JumpState};
pub use ma2::{ma2_loglikelihood, ma2_one_step, ma2_simulate, Ma2Params};
pub use realized::{bipower_variation, jump_variation};
pub use stable::alpha_stable_draw;
pub use sv::{sv_simulate, SvParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentKind {
    Variance,
    LogVariance,
    JumpIndicator,
    JumpSize,
    Intensity,
}

/// A latent per-period path of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub(crate) values: Vec<f64>,
    kind: LatentKind,
}

impl LatentPath {
    pub fn new(values: Vec<f64>, kind: LatentKind) -> Self {
        Self { values, kind }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> LatentKind {
        self.kind
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}
