//! MUSHRA listening tests: balanced design, rating statistics and error
//! annotation.

pub mod annotation;
pub mod design;
pub mod stats;

pub use annotation::{
    aggregate_by_domain, aggregate_by_system, parse_flags, read_flags, render_error_report,
    write_flags, DomainErrorRow, ErrorCategory, ErrorFlag, FlagFilter, Severity, SystemErrorRow,
};
pub use design::{
    build_assignment, domain_quota, reference_plan, validate_assignment, Assignment,
    ListenerAssignment, PlanUtterance, Screen, TestPlan, Violation,
};
pub use stats::{
    holm_bonferroni, paired_t_test, parse_ratings, read_ratings, screen_ranks, summarize,
    wilcoxon_normal_approx, wilcoxon_signed_rank, write_ratings, FamilyReport, PairwiseTest,
    Rating, ScreenRow, StatsReport, SystemSummary, TTest, Wilcoxon, WilcoxonMethod, DEFAULT_ALPHA,
};

#[derive(Debug, thiserror::Error)]
pub enum MushraError {
    #[error("plan: {0}")]
    Plan(String),
    #[error("non-integral domain quota: {0}")]
    NonIntegralQuota(String),
    #[error("infeasible design: {0}")]
    Infeasible(String),
    #[error("no conflict-free assignment for domain {domain} after retries (seed {seed})")]
    RetriesExhausted { seed: u64, domain: String },
    #[error("statistics: {0}")]
    Stats(String),
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("ratings: {0}")]
    Ratings(String),
    #[error("flags: {0}")]
    Flags(String),
    #[error("unknown error category `{0}`")]
    UnknownCategory(String),
    #[error("unknown severity `{0}`")]
    UnknownSeverity(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
