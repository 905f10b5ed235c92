use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::special::{normal_sf, student_t_quantile, student_t_two_sided};

/// Largest effective sample size for which exact Wilcoxon p-values are used.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} pairs, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("degenerate sample: all differences are zero")]
    Degenerate,
    #[error("zero variance in paired differences")]
    ZeroVariance,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("exact distribution unavailable: {0}")]
    ExactUnavailable(&'static str),
    #[error("line {line}: {reason}")]
    Input { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
    T,
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMethod::Exact => "exact",
            TestMethod::NormalApprox => "normal_approx",
            TestMethod::T => "t",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_two_sided: f64,
    pub n_effective: usize,
    pub method: TestMethod,
    /// t-test only.
    pub ci95: Option<(f64, f64)>,
    /// Mean paired difference (t-test only).
    pub mean_diff: Option<f64>,
}

fn check_pairs(x: &[f64], y: &[f64], min: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(StatsError::TooFew {
            needed: min,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Average ranks (1-based) of `values`, ties sharing the mean of their ranks.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WilcoxonMethod {
    /// Exact when n ≤ [`EXACT_MAX_N`] and there are no tied magnitudes.
    #[default]
    Auto,
    Exact,
    NormalApprox,
}

struct SignedRanks {
    w_plus: f64,
    n: usize,
    tie_groups: Vec<usize>,
}

fn signed_ranks(x: &[f64], y: &[f64]) -> Result<SignedRanks, StatsError> {
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::Degenerate);
    }
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&mags);
    let w_plus = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .fold(0.0, |acc, (_, r)| acc + r);

    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        if j > i {
            tie_groups.push(j - i + 1);
        }
        i = j + 1;
    }
    Ok(SignedRanks {
        w_plus,
        n: diffs.len(),
        tie_groups,
    })
}

/// Null distribution of the positive-rank sum: `counts[w]` sign assignments
/// of ranks 1..=n give sum `w`.
pub fn signed_rank_counts(n: usize) -> Vec<u64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

/// Exact two-sided p-value for an integer positive-rank sum `w` with `n` ranks.
pub fn wilcoxon_exact_p(w: u64, n: usize) -> f64 {
    let counts = signed_rank_counts(n);
    let w = w as usize;
    let lower: u64 = counts[..=w.min(counts.len() - 1)].iter().sum();
    let upper: u64 = counts[w.min(counts.len())..].iter().sum();
    let total = 2f64.powi(n as i32);
    (2.0 * lower.min(upper) as f64 / total).min(1.0)
}

/// Two-sided normal-approximation p-value with tie and continuity correction.
pub fn wilcoxon_normal_p(w: f64, n: usize, tie_groups: &[usize]) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_adj: f64 = tie_groups
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_adj;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * normal_sf(z)).min(1.0)
}

/// Wilcoxon signed-rank test on paired samples, differences taken as `x − y`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(x, y, WilcoxonMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(
    x: &[f64],
    y: &[f64],
    method: WilcoxonMethod,
) -> Result<TestResult, StatsError> {
    check_pairs(x, y, 1)?;
    let sr = signed_ranks(x, y)?;
    let exact_ok = sr.tie_groups.is_empty() && sr.n <= 62;
    let use_exact = match method {
        WilcoxonMethod::Auto => exact_ok && sr.n <= EXACT_MAX_N,
        WilcoxonMethod::Exact if !sr.tie_groups.is_empty() => {
            return Err(StatsError::ExactUnavailable("tied magnitudes"))
        }
        WilcoxonMethod::Exact if !exact_ok => {
            return Err(StatsError::ExactUnavailable("sample too large"))
        }
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::NormalApprox => false,
    };
    let (p, method) = if use_exact {
        (wilcoxon_exact_p(sr.w_plus as u64, sr.n), TestMethod::Exact)
    } else {
        (
            wilcoxon_normal_p(sr.w_plus, sr.n, &sr.tie_groups),
            TestMethod::NormalApprox,
        )
    };
    Ok(TestResult {
        statistic: sr.w_plus,
        p_two_sided: p,
        n_effective: sr.n,
        method,
        ci95: None,
        mean_diff: None,
    })
}

/// Paired t-test on `post − pre` with a 95% confidence interval for the mean difference.
pub fn paired_t_test(pre: &[f64], post: &[f64]) -> Result<TestResult, StatsError> {
    check_pairs(pre, post, 2)?;
    let d: Vec<f64> = post.iter().zip(pre).map(|(b, a)| b - a).collect();
    if d.iter().all(|v| *v == d[0]) {
        return Err(StatsError::ZeroVariance);
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let se = (var / n).sqrt();
    let t = mean / se;
    let df = n - 1.0;
    let q = student_t_quantile(0.975, df);
    let p = student_t_two_sided(t, df).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(TestResult {
        statistic: t,
        p_two_sided: p,
        n_effective: d.len(),
        method: TestMethod::T,
        ci95: Some((mean - q * se, mean + q * se)),
        mean_diff: Some(mean),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Cost,
    Carbon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityItem {
    Instrumental,
    Hedonic,
    Cognitive,
    WantNotKnow,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Option<T> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_string())).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant_id: String,
    pub phase: Phase,
    pub topic: Topic,
    pub item: UtilityItem,
    pub score: i8,
}

pub const SURVEY_HEADER: &str = "participant,phase,topic,item,score";

/// Parses the long-format survey CSV; any malformed line is an error.
pub fn parse_survey(text: &str) -> Result<Vec<SurveyResponse>, StatsError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == SURVEY_HEADER => {}
        _ => {
            return Err(StatsError::Input {
                line: 1,
                reason: format!("expected header `{SURVEY_HEADER}`"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let err = |reason: &str| StatsError::Input {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        let score: i8 = f[4].parse().map_err(|_| err("score is not an integer"))?;
        if !(-3..=3).contains(&score) {
            return Err(err("score outside -3..=3"));
        }
        out.push(SurveyResponse {
            participant_id: f[0].to_string(),
            phase: parse_enum(f[1]).ok_or_else(|| err("unknown phase"))?,
            topic: parse_enum(f[2]).ok_or_else(|| err("unknown topic"))?,
            item: parse_enum(f[3]).ok_or_else(|| err("unknown item"))?,
            score,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyTest {
    pub topic: Topic,
    pub item: UtilityItem,
    pub pairs: usize,
    pub result: Result<TestResult, String>,
}

/// One paired t-test per (topic, item) over participants answering both phases.
pub fn survey_t_tests(responses: &[SurveyResponse]) -> Vec<SurveyTest> {
    type Key = (Topic, UtilityItem);
    let mut by_key: BTreeMap<Key, BTreeMap<&str, (Option<f64>, Option<f64>)>> = BTreeMap::new();
    for r in responses {
        let slot = by_key
            .entry((r.topic, r.item))
            .or_default()
            .entry(r.participant_id.as_str())
            .or_default();
        match r.phase {
            Phase::Pre => slot.0 = Some(r.score as f64),
            Phase::Post => slot.1 = Some(r.score as f64),
        }
    }
    by_key
        .into_iter()
        .map(|((topic, item), people)| {
            let (pre, post): (Vec<f64>, Vec<f64>) = people
                .values()
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .unzip();
            SurveyTest {
                topic,
                item,
                pairs: pre.len(),
                result: paired_t_test(&pre, &post).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

/// Two-column numeric CSV with a header line; returns the columns.
pub fn parse_paired_samples(text: &str) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    if lines.next().is_none() {
        return Err(StatsError::Input {
            line: 1,
            reason: "missing header".into(),
        });
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, line) in lines {
        let err = |reason: &str| StatsError::Input {
            line: i + 1,
            reason: reason.to_string(),
        };
        let (x, y) = line.split_once(',').ok_or_else(|| err("expected two columns"))?;
        let x: f64 = x.trim().parse().map_err(|_| err("first column is not a number"))?;
        let y: f64 = y.trim().parse().map_err(|_| err("second column is not a number"))?;
        a.push(x);
        b.push(y);
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: enumerate every sign assignment of ranks 1..=n.
    fn brute_exact_p(w: f64, n: usize) -> f64 {
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1u64 << n) {
            let s: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| i as u64 + 1).sum();
            if s as f64 <= w {
                le += 1;
            }
            if s as f64 >= w {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn degenerate_sample() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(wilcoxon_signed_rank(&x, &x), Err(StatsError::Degenerate));
    }

    #[test]
    fn three_positive_differences() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.statistic, 6.0);
        assert_eq!(r.method, TestMethod::Exact);
        assert_eq!(r.n_effective, 3);
        assert!((r.p_two_sided - 0.25).abs() < 1e-15);
        assert!((brute_exact_p(6.0, 3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zeros_dropped_and_ties_use_normal() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 2.0, 5.0, 3.0], &[1.0, 0.0, 0.0, 1.0, 4.0]).unwrap();
        // diffs 2, 2, 4, -1 -> ranks 2.5, 2.5, 4, 1
        assert_eq!(r.n_effective, 4);
        assert_eq!(r.statistic, 9.0);
        assert_eq!(r.method, TestMethod::NormalApprox);
        assert!(matches!(
            wilcoxon_signed_rank_with(&[1.0, 2.0], &[0.0, 1.0], WilcoxonMethod::Exact),
            Err(StatsError::ExactUnavailable(_))
        ));
    }

    #[test]
    fn mid_ranks_with_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn exact_matches_enumeration_small_n() {
        for n in 1..=10usize {
            let max = n * (n + 1) / 2;
            for w in 0..=max {
                let a = wilcoxon_exact_p(w as u64, n);
                let b = brute_exact_p(w as f64, n);
                assert!((a - b).abs() < 1e-12, "n={n} w={w}");
            }
        }
    }

    #[test]
    fn normal_close_to_exact_for_moderate_n() {
        // the continuity-corrected approximation is within 0.05 from n = 4 up
        for n in 4..=10usize {
            let max = n * (n + 1) / 2;
            for w in 0..=max {
                let e = wilcoxon_exact_p(w as u64, n);
                let a = wilcoxon_normal_p(w as f64, n, &[]);
                assert!((e - a).abs() < 0.05, "n={n} w={w} exact={e} approx={a}");
            }
        }
    }

    #[test]
    fn rank_sums_complement() {
        let x = [3.1, -2.0, 5.5, 0.7, -9.0, 4.4];
        let y = [0.0; 6];
        let plus = wilcoxon_signed_rank(&x, &y).unwrap().statistic;
        let minus = wilcoxon_signed_rank(&y, &x).unwrap().statistic;
        assert_eq!(plus + minus, 21.0);
    }

    #[test]
    fn t_test_examples() {
        let r = paired_t_test(&[0.0; 4], &[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_two_sided, 1.0);

        let r = paired_t_test(&[0.0; 3], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r.statistic - 3.4641).abs() < 1e-4);
        assert!((r.p_two_sided - 0.0742).abs() < 1e-3);
        // scipy.stats.ttest_rel reference: 0.07417990022744853
        assert!((r.p_two_sided - 0.074_179_900_227_448_53).abs() < 1e-12);
        let (lo, hi) = r.ci95.unwrap();
        let half = 4.302_652_729_696_142 * 2.0 / 3f64.sqrt();
        assert!((lo - (4.0 - half)).abs() < 1e-9 && (hi - (4.0 + half)).abs() < 1e-9);

        assert_eq!(paired_t_test(&[0.0; 3], &[5.0; 3]), Err(StatsError::ZeroVariance));
        assert!(matches!(paired_t_test(&[1.0], &[2.0]), Err(StatsError::TooFew { .. })));
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[2.0]), Err(StatsError::LengthMismatch(2, 1))));
    }

    #[test]
    fn survey_ingestion_and_tests() {
        let csv = "participant,phase,topic,item,score\n\
            p1,pre,cost,cognitive,0\np1,post,cost,cognitive,2\n\
            p2,pre,cost,cognitive,1\np2,post,cost,cognitive,2\n\
            p3,pre,cost,cognitive,-1\np3,post,cost,cognitive,0\n\
            p4,pre,cost,cognitive,1\n\
            p1,pre,carbon,want_not_know,0\np1,post,carbon,want_not_know,0\n";
        let responses = parse_survey(csv).unwrap();
        assert_eq!(responses.len(), 9);
        let tests = survey_t_tests(&responses);
        assert_eq!(tests.len(), 2);
        let cog = tests.iter().find(|t| t.item == UtilityItem::Cognitive).unwrap();
        assert_eq!(cog.pairs, 3);
        let r = cog.result.as_ref().unwrap();
        assert!((r.mean_diff.unwrap() - 4.0 / 3.0).abs() < 1e-12);
        let wnk = tests.iter().find(|t| t.item == UtilityItem::WantNotKnow).unwrap();
        assert!(wnk.result.is_err());

        assert!(parse_survey("participant,phase,topic,item,score\np1,pre,cost,cognitive,4\n").is_err());
        assert!(parse_survey("participant,phase,topic,item,score\np1,during,cost,cognitive,1\n").is_err());
        assert!(parse_survey("bad\n").is_err());
    }

    #[test]
    fn paired_csv() {
        let (a, b) = parse_paired_samples("pre,post\n0,2\n0,4\n0,6\n").unwrap();
        assert_eq!(a, vec![0.0; 3]);
        assert_eq!(b, vec![2.0, 4.0, 6.0]);
        assert!(parse_paired_samples("x,y\n1;2\n").is_err());
    }
}
