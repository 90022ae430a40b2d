pub mod localization;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod roc;

pub use localization::{
    localize, localize_all, score_localization, sweep_localization_threshold, window_verdicts, Interval,
    LocalizationResult, LocalizationSweep, Verdict,
};
pub use metrics::{geometric_mean, sensitivity_specificity, ConfusionMatrix};
pub use report::{EvalReport, LocalizationStats};
pub use roc::{confusion_at, probability_grid, rank_auc, roc_auc, roc_curve, threshold_grid, Decision, RocCurve, RocPoint};
