//! Metrics, ablation conditions, baseline comparison, and plot emission.

pub mod ablate;
pub mod metrics;
pub mod plots;

pub use ablate::{
    evaluate, false_goal_table, targets_of, write_results_csv, AblationCondition,
};
pub use metrics::{compute_metrics, DimMetrics, MetricsReport};
pub use plots::{emit_plots, emit_violin, histogram, kde};
