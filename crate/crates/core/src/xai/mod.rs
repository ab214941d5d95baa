//! Explainability: input-ablation saliency and climate-variability subgroup
//! analysis.

pub mod saliency;
pub mod subgroups;

pub use saliency::{
    ablate, ablation_saliency, channel_saliency, dem_saliency, lower_is_better, normalize_saliency_rows, saliency_report, Ablation,
    EvalSample, ModelPredictor, Predictor, SaliencyReport,
};
pub use subgroups::{
    divergence, enumerate_subgroups, format_items, global_shapley, members_of, most_and_least_divergent, score_subgroups, shapley_items,
    tertile_bins, variability_bins, welch_filter, window_std, Bin, Item, ScoredSubgroup, ShapleyAggregation, Subgroup,
};
