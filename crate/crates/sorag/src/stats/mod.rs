//! Evaluation statistics: judge-score handling, agreement and
//! significance tests, coverage, sample sizing, and descriptive
//! summaries. Every test here is two-sided.

mod judging;
mod rank;

pub use judging::{
    judge_cases, read_scored_cases, write_scored_cases, JudgeItem, JudgingOutcome, ScoredCase,
};
pub use rank::{mann_whitney_counts, mann_whitney_u, wilcoxon_counts, wilcoxon_signed_rank};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RetrievalResult;
use crate::llm::LlmError;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("score {0} is outside 1..=10")]
    BadScore(u8),
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Chat(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: bad scored case: {message}")]
    ScoreFile {
        path: String,
        line: usize,
        message: String,
    },
}

/// The outcome of one significance test, with enough context to print
/// or serialize without re-deriving anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_size: Option<f64>,
    /// Group sizes, in argument order.
    pub n: Vec<usize>,
    pub method_notes: String,
}

/// Fraction of retrievals that produced content.
pub fn coverage(results: &[RetrievalResult], total: usize) -> Result<f64, StatsError> {
    if total == 0 {
        return Err(StatsError::BadArgument(
            "coverage needs a positive total".to_string(),
        ));
    }
    let covered = results.iter().filter(|r| !r.hits.is_empty()).count();
    if covered > total {
        return Err(StatsError::BadArgument(format!(
            "{covered} covered results exceed the stated total {total}"
        )));
    }
    Ok(covered as f64 / total as f64)
}

/// Maps a 1 to 10 judge score onto the binary scale: 1 through 5 is 0,
/// 6 through 10 is 1.
pub fn binarize(score: u8) -> Result<u8, StatsError> {
    match score {
        1..=5 => Ok(0),
        6..=10 => Ok(1),
        other => Err(StatsError::BadScore(other)),
    }
}

/// Cohen's kappa over two binary label lists, with chance agreement
/// from the marginal products. Two raters that agree everywhere score
/// 1, even when chance agreement is also perfect.
pub fn cohen_kappa(labels_a: &[u8], labels_b: &[u8]) -> Result<f64, StatsError> {
    if labels_a.is_empty() {
        return Err(StatsError::EmptyInput("labels_a"));
    }
    if labels_a.len() != labels_b.len() {
        return Err(StatsError::LengthMismatch {
            a: labels_a.len(),
            b: labels_b.len(),
        });
    }
    for &label in labels_a.iter().chain(labels_b) {
        if label > 1 {
            return Err(StatsError::BadLabel(label));
        }
    }
    let n = labels_a.len() as f64;
    let agree = labels_a
        .iter()
        .zip(labels_b)
        .filter(|(a, b)| a == b)
        .count() as f64;
    let a_ones = labels_a.iter().filter(|&&l| l == 1).count() as f64;
    let b_ones = labels_b.iter().filter(|&&l| l == 1).count() as f64;
    let p_o = agree / n;
    let p_e = (a_ones / n) * (b_ones / n) + ((n - a_ones) / n) * ((n - b_ones) / n);
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Cliff's delta: the probability a value from `x` exceeds one from `y`
/// minus the reverse.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.is_empty() {
        return Err(StatsError::EmptyInput("x"));
    }
    if y.is_empty() {
        return Err(StatsError::EmptyInput("y"));
    }
    let mut greater = 0i64;
    let mut less = 0i64;
    for a in x {
        for b in y {
            if a > b {
                greater += 1;
            } else if a < b {
                less += 1;
            }
        }
    }
    Ok((greater - less) as f64 / (x.len() as f64 * y.len() as f64))
}

/// Cochran's sample size: the plain estimate, then the finite
/// population correction when a population is given.
pub fn cochran_sample_size(
    confidence: f64,
    margin: f64,
    p: f64,
    population: Option<u64>,
) -> Result<u64, StatsError> {
    if !(0.0..1.0).contains(&confidence) || confidence <= 0.0 {
        return Err(StatsError::BadArgument(format!(
            "confidence must be in (0, 1), got {confidence}"
        )));
    }
    if !(0.0..1.0).contains(&margin) || margin <= 0.0 {
        return Err(StatsError::BadArgument(format!(
            "margin must be in (0, 1), got {margin}"
        )));
    }
    if !(0.0..1.0).contains(&p) || p <= 0.0 {
        return Err(StatsError::BadArgument(format!(
            "p must be in (0, 1), got {p}"
        )));
    }
    let z = normal_quantile(1.0 - (1.0 - confidence) / 2.0);
    let n0 = (z * z * p * (1.0 - p) / (margin * margin)).ceil();
    let n0 = n0.max(1.0);
    match population {
        None => Ok(n0 as u64),
        Some(population) => {
            if population == 0 {
                return Err(StatsError::BadArgument(
                    "population must be positive".to_string(),
                ));
            }
            let n = n0 / (1.0 + (n0 - 1.0) / population as f64);
            Ok(n.ceil().max(1.0) as u64)
        }
    }
}

/// Descriptive summary of a score list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Equals `mean` when no weights were given.
    pub weighted_mean: f64,
}

/// Mean, midpoint median, and (optionally weighted) mean.
pub fn summarize(scores: &[f64], weights: Option<&[f64]>) -> Result<Summary, StatsError> {
    if scores.is_empty() {
        return Err(StatsError::EmptyInput("scores"));
    }
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = match n % 2 {
        1 => sorted[n / 2],
        _ => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    };
    let weighted_mean = match weights {
        None => mean,
        Some(weights) => {
            if weights.len() != n {
                return Err(StatsError::LengthMismatch {
                    a: n,
                    b: weights.len(),
                });
            }
            if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                return Err(StatsError::BadArgument(
                    "weights must be finite and non-negative".to_string(),
                ));
            }
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(StatsError::BadArgument(
                    "weights must sum to a positive value".to_string(),
                ));
            }
            scores.iter().zip(weights).map(|(s, w)| s * w).sum::<f64>() / total
        }
    };
    Ok(Summary {
        n,
        mean,
        median,
        weighted_mean,
    })
}

/// Standard normal quantile.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("unit normal");
    normal.inverse_cdf(p)
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(z: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("unit normal");
    normal.cdf(z)
}

/// Standard normal density.
pub(crate) fn normal_pdf(z: f64) -> f64 {
    use statrs::distribution::Continuous;
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("unit normal");
    normal.pdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{RetrievalResult, ThresholdAttempt};
    use crate::index::Hit;

    fn result_with_hits(count: usize) -> RetrievalResult {
        RetrievalResult {
            hits: (0..count)
                .map(|i| Hit {
                    doc_id: format!("a{i}"),
                    similarity: 0.9,
                    payload_ref: format!("a:{i}"),
                })
                .collect(),
            effective_threshold: 0.9,
            attempts: vec![ThresholdAttempt {
                threshold: 0.9,
                hit_count: count,
            }],
            fell_back_to_zero_shot: count == 0,
        }
    }

    #[test]
    fn coverage_counts_nonempty_results_over_the_total() {
        let mut results: Vec<RetrievalResult> =
            (0..308).map(|_| result_with_hits(1)).collect();
        results.extend((0..77).map(|_| result_with_hits(0)));
        let fraction = coverage(&results, 385).unwrap();
        assert!((fraction - 0.8).abs() < 1e-12);

        let empty: Vec<RetrievalResult> = (0..385).map(|_| result_with_hits(0)).collect();
        assert_eq!(coverage(&empty, 385).unwrap(), 0.0);
        let full: Vec<RetrievalResult> = (0..385).map(|_| result_with_hits(2)).collect();
        assert_eq!(coverage(&full, 385).unwrap(), 1.0);
    }

    #[test]
    fn coverage_rejects_zero_total_and_overcounts() {
        assert!(coverage(&[], 0).is_err());
        let results = vec![result_with_hits(1), result_with_hits(1)];
        assert!(coverage(&results, 1).is_err());
    }

    #[test]
    fn binarize_splits_at_five_and_six() {
        for score in 1..=5u8 {
            assert_eq!(binarize(score).unwrap(), 0);
        }
        for score in 6..=10u8 {
            assert_eq!(binarize(score).unwrap(), 1);
        }
        assert!(binarize(0).is_err());
        assert!(binarize(11).is_err());
    }

    #[test]
    fn binarize_is_monotone() {
        let mapped: Vec<u8> = (1..=10).map(|s| binarize(s).unwrap()).collect();
        for pair in mapped.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
    }

    #[test]
    fn kappa_matches_the_hand_computed_confusion_table() {
        // 20 both-positive, 5 a-only, 10 b-only, 15 both-negative:
        // observed agreement 0.7, chance 0.5, kappa 0.4.
        let mut a = Vec::new();
        let mut b = Vec::new();
        for _ in 0..20 {
            a.push(1);
            b.push(1);
        }
        for _ in 0..5 {
            a.push(1);
            b.push(0);
        }
        for _ in 0..10 {
            a.push(0);
            b.push(1);
        }
        for _ in 0..15 {
            a.push(0);
            b.push(0);
        }
        let kappa = cohen_kappa(&a, &b).unwrap();
        assert!((kappa - 0.4).abs() < 1e-12, "kappa {kappa}");
    }

    #[test]
    fn kappa_is_one_for_identical_lists_even_when_constant() {
        assert_eq!(cohen_kappa(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&[1, 1, 1], &[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn kappa_is_zero_when_agreement_is_pure_chance() {
        let kappa = cohen_kappa(&[1, 1, 1, 1], &[1, 0, 1, 0]).unwrap();
        assert_eq!(kappa, 0.0);
    }

    #[test]
    fn kappa_rejects_bad_shapes() {
        assert!(cohen_kappa(&[], &[]).is_err());
        assert!(cohen_kappa(&[1, 0], &[1]).is_err());
        assert!(cohen_kappa(&[1, 2], &[1, 0]).is_err());
    }

    #[test]
    fn cliffs_delta_enumerates_pairs() {
        let delta = cliffs_delta(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((delta - (-5.0 / 9.0)).abs() < 1e-12, "delta {delta}");
        assert_eq!(cliffs_delta(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), -1.0);
        assert_eq!(cliffs_delta(&[5.0, 6.0], &[5.0, 6.0]).unwrap(), 0.0);
        assert!(cliffs_delta(&[], &[1.0]).is_err());
    }

    #[test]
    fn cochran_gives_the_textbook_385() {
        assert_eq!(cochran_sample_size(0.95, 0.05, 0.5, None).unwrap(), 385);
        assert_eq!(
            cochran_sample_size(0.95, 0.05, 0.5, Some(1_000_000_000)).unwrap(),
            385
        );
        // A small population pulls the estimate down.
        let small = cochran_sample_size(0.95, 0.05, 0.5, Some(1000)).unwrap();
        assert!(small < 385, "fpc estimate {small}");
        // A generous margin needs almost nothing.
        assert_eq!(cochran_sample_size(0.95, 0.99, 0.5, None).unwrap(), 1);
    }

    #[test]
    fn cochran_reports_both_paths_for_the_unclear_pairing() {
        // At 90% confidence and a 10% margin the plain estimate is 68;
        // no finite population in view brings it near 54, so both
        // numbers stay available to report side by side.
        let plain = cochran_sample_size(0.90, 0.10, 0.5, None).unwrap();
        assert_eq!(plain, 68);
        let with_fpc = cochran_sample_size(0.90, 0.10, 0.5, Some(385)).unwrap();
        assert!(with_fpc < plain);
    }

    #[test]
    fn cochran_rejects_out_of_range_arguments() {
        assert!(cochran_sample_size(0.0, 0.05, 0.5, None).is_err());
        assert!(cochran_sample_size(1.0, 0.05, 0.5, None).is_err());
        assert!(cochran_sample_size(0.95, 0.0, 0.5, None).is_err());
        assert!(cochran_sample_size(0.95, 1.0, 0.5, None).is_err());
        assert!(cochran_sample_size(0.95, 0.05, 0.0, None).is_err());
        assert!(cochran_sample_size(0.95, 0.05, 0.5, Some(0)).is_err());
    }

    #[test]
    fn summarize_computes_mean_median_and_weighted_mean() {
        let summary = summarize(&[6.0, 7.0], None).unwrap();
        assert_eq!(summary.mean, 6.5);
        assert_eq!(summary.median, 6.5);
        assert_eq!(summary.weighted_mean, 6.5);

        let weighted = summarize(&[1.0, 3.0], Some(&[3.0, 1.0])).unwrap();
        assert_eq!(weighted.weighted_mean, 1.5);

        let single = summarize(&[4.0], None).unwrap();
        assert_eq!(single.mean, 4.0);
        assert_eq!(single.median, 4.0);

        let odd = summarize(&[9.0, 1.0, 5.0], None).unwrap();
        assert_eq!(odd.median, 5.0);
    }

    #[test]
    fn summarize_validates_weights() {
        assert!(summarize(&[], None).is_err());
        assert!(summarize(&[1.0], Some(&[1.0, 2.0])).is_err());
        assert!(summarize(&[1.0, 2.0], Some(&[1.0, -1.0])).is_err());
        assert!(summarize(&[1.0, 2.0], Some(&[0.0, 0.0])).is_err());
    }

    proptest::proptest! {
        #[test]
        fn kappa_stays_in_range_and_is_one_on_self(
            labels in proptest::collection::vec(0u8..=1, 1..40),
            other in proptest::collection::vec(0u8..=1, 1..40),
        ) {
            let n = labels.len().min(other.len());
            let a = &labels[..n];
            let b = &other[..n];
            let kappa = cohen_kappa(a, b).unwrap();
            proptest::prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&kappa));
            let self_kappa = cohen_kappa(a, a).unwrap();
            proptest::prop_assert!((self_kappa - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cliffs_delta_is_antisymmetric(
            x in proptest::collection::vec(-50.0f64..50.0, 1..20),
            y in proptest::collection::vec(-50.0f64..50.0, 1..20),
        ) {
            let forward = cliffs_delta(&x, &y).unwrap();
            let backward = cliffs_delta(&y, &x).unwrap();
            proptest::prop_assert!((forward + backward).abs() < 1e-12);
            proptest::prop_assert!((-1.0..=1.0).contains(&forward));
        }

        #[test]
        fn cliffs_delta_ignores_a_common_shift(
            // Quarter-grid values keep every sum exact, so the shifted
            // comparisons are bit-identical to the originals.
            x_q in proptest::collection::vec(-80i32..80, 1..12),
            y_q in proptest::collection::vec(-80i32..80, 1..12),
            shift_q in -400i32..400,
        ) {
            let x: Vec<f64> = x_q.iter().map(|v| *v as f64 * 0.25).collect();
            let y: Vec<f64> = y_q.iter().map(|v| *v as f64 * 0.25).collect();
            let shift = shift_q as f64 * 0.25;
            let base = cliffs_delta(&x, &y).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let shifted = cliffs_delta(&xs, &ys).unwrap();
            proptest::prop_assert_eq!(base, shifted);
        }
    }
}
