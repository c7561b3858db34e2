//! Filtered link-prediction metrics, one-way ANOVA and CPU-time measurement.

mod anova;
mod rank;
mod timing;

pub use anova::{anova_one_way, f_survival, ln_gamma, regularized_incomplete_beta, AnovaResult};
pub use rank::{
    evaluate_link_prediction, filter_set, mrr, precision_at_k, rank_candidates, Direction,
    MetricsReport, MetricsRow, RankQuery, Scorer, PRECISION_KS,
};
pub use timing::{cpu_time_process, cpu_time_thread, time_stage, time_stage_thread, StageTiming};
