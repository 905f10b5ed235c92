//! Research-side analysis: dwell time from interaction logs and the paired
//! statistical tests used on dwell and survey data.

pub mod dwell;
pub mod special;
pub mod stats;

pub use dwell::{compute_dwell, dwell_by_display_position, dwell_csv, DwellReport, PositionPairs, Tab, TabOrder};
pub use stats::{
    paired_t_test, parse_paired_samples, parse_survey, survey_t_tests, wilcoxon_signed_rank,
    wilcoxon_signed_rank_with, StatsError, SurveyResponse, SurveyTest, TestMethod, TestResult,
    WilcoxonMethod,
};
