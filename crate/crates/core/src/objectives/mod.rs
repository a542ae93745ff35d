//! Loss functions: Donsker-Varadhan mutual-information bounds, adversarial
//! prior matching, the combined representation objective, the deviation loss
//! for the score network and the classification baselines.

mod baseline;
mod deviation;
mod dim;
mod dv;
mod prior;

pub use baseline::{baseline_loss, baseline_loss_with_grad, BaselineKind, DEFAULT_FOCAL_GAMMA};
pub use deviation::{deviation_loss, deviation_loss_with_grad, DeviationConfig};
pub use dim::{
    dim_gradients, dim_terms, dim_total, global_mi_objective, local_mi_objective, prior_losses,
    prior_losses_from_probabilities, DimLosses, DimTerms, DimWeights, GradientRoute, PriorLosses,
};
pub use dv::{dv_bound, dv_bound_with_grad, local_dv_with_grad};
pub use prior::{PriorSampler, PriorSpec};
