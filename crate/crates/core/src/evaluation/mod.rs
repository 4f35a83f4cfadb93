//! Ranking agreement, statistics and experiment drivers.

pub mod corrupt;
pub mod experiments;
pub mod metrics;
pub mod stats;

pub use corrupt::{corrupt_annotations, CorruptionReport};
pub use experiments::{
    evaluate_pool, timestep_sweep, token_ablation, AblationReport, AblationRow, Agreement,
    EvalOptions, SweepRow,
};
pub use metrics::{ndcg, overlap_rate, Gain, NdcgOptions, NdcgResult, QualitySet, QualityTable};
pub use stats::{
    format_p_value, ln_gamma, paired_t_test, regularized_incomplete_beta, student_t_cdf,
    student_t_two_sided_p, PairedSamples, TTestResult,
};
