//! Language-identification metrics over per-language score matrices:
//! equal error rate, average detection cost, and plain accuracy.

use alloc::vec::Vec;

use crate::mat::Mat;
use crate::{Error, Result};

/// Per-trial scores (higher = more likely) with the true language id.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScores {
    scores: Mat,
    true_labels: Vec<usize>,
}

impl TrialScores {
    pub fn new(scores: Mat, true_labels: Vec<usize>) -> Result<Self> {
        if scores.n_rows() == 0 || scores.n_cols() == 0 {
            return Err(Error::DegenerateScores {
                context: "empty score matrix",
            });
        }
        if scores.n_rows() != true_labels.len() {
            return Err(Error::DimMismatch {
                context: "trial labels",
                expected: scores.n_rows(),
                found: true_labels.len(),
            });
        }
        if !scores.is_finite() {
            return Err(Error::DegenerateScores {
                context: "scores must be finite",
            });
        }
        for &l in &true_labels {
            if l >= scores.n_cols() {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    n_classes: scores.n_cols(),
                });
            }
        }
        Ok(TrialScores {
            scores,
            true_labels,
        })
    }

    pub fn scores(&self) -> &Mat {
        &self.scores
    }

    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    pub fn n_trials(&self) -> usize {
        self.scores.n_rows()
    }

    pub fn n_languages(&self) -> usize {
        self.scores.n_cols()
    }

    /// Distinct true labels, ascending.
    pub fn present_languages(&self) -> Vec<usize> {
        let mut langs = self.true_labels.clone();
        langs.sort_unstable();
        langs.dedup();
        langs
    }
}

/// Equal error rate where miss and false-alarm curves cross, pooling
/// every (trial, language) pair: the pair is a target when the language
/// is the trial's true label. Thresholds sweep the pooled score set with
/// `P_miss(t) = frac(target < t)` and `P_fa(t) = frac(nontarget >= t)`;
/// the crossing between adjacent operating points is linearly
/// interpolated.
pub fn eer(trials: &TrialScores) -> Result<f64> {
    let mut targets = Vec::with_capacity(trials.n_trials());
    let mut nontargets =
        Vec::with_capacity(trials.n_trials() * (trials.n_languages().saturating_sub(1)));
    for (i, &label) in trials.true_labels().iter().enumerate() {
        for (j, &s) in trials.scores().row(i).iter().enumerate() {
            if j == label {
                targets.push(s);
            } else {
                nontargets.push(s);
            }
        }
    }
    binary_eer(&targets, &nontargets)
}

/// One-vs-rest EER of each present language's own score column, averaged.
pub fn eer_per_language_mean(trials: &TrialScores) -> Result<f64> {
    let langs = trials.present_languages();
    if langs.len() < 2 {
        return Err(Error::DegenerateScores {
            context: "per-language eer needs at least two languages with trials",
        });
    }
    let mut total = 0.0;
    for &lang in &langs {
        let mut targets = Vec::new();
        let mut nontargets = Vec::new();
        for (i, &label) in trials.true_labels().iter().enumerate() {
            let s = trials.scores()[(i, lang)];
            if label == lang {
                targets.push(s);
            } else {
                nontargets.push(s);
            }
        }
        total += binary_eer(&targets, &nontargets)?;
    }
    Ok(total / langs.len() as f64)
}

/// EER of one pooled target/non-target score split.
fn binary_eer(targets: &[f64], nontargets: &[f64]) -> Result<f64> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::DegenerateScores {
            context: "eer needs at least one target and one non-target pair",
        });
    }
    let mut sorted_t = targets.to_vec();
    let mut sorted_n = nontargets.to_vec();
    sorted_t.sort_unstable_by(f64::total_cmp);
    sorted_n.sort_unstable_by(f64::total_cmp);

    let mut thresholds: Vec<f64> = Vec::with_capacity(sorted_t.len() + sorted_n.len());
    thresholds.extend_from_slice(&sorted_t);
    thresholds.extend_from_slice(&sorted_n);
    thresholds.sort_unstable_by(f64::total_cmp);
    thresholds.dedup();

    let n_t = sorted_t.len() as f64;
    let n_n = sorted_n.len() as f64;
    let op = |t: f64| -> (f64, f64) {
        let miss = sorted_t.partition_point(|&s| s < t) as f64 / n_t;
        let fa = (sorted_n.len() - sorted_n.partition_point(|&s| s < t)) as f64 / n_n;
        (miss, fa)
    };

    // Walk the operating points in threshold order; miss - fa is
    // non-decreasing, ending at the virtual point (miss 1, fa 0) above
    // the max score.
    let mut prev = op(thresholds[0]);
    if prev.0 >= prev.1 {
        return Ok(interp_crossing((0.0, 1.0), prev));
    }
    for &t in &thresholds[1..] {
        let cur = op(t);
        if cur.0 >= cur.1 {
            return Ok(interp_crossing(prev, cur));
        }
        prev = cur;
    }
    Ok(interp_crossing(prev, (1.0, 0.0)))
}

/// Crossing of the linear segments between two adjacent (miss, fa)
/// operating points; the second point has miss >= fa.
fn interp_crossing((m1, f1): (f64, f64), (m2, f2): (f64, f64)) -> f64 {
    if m2 == f2 {
        return m2;
    }
    let denom = (m2 - m1) + (f1 - f2);
    if denom == 0.0 {
        return 0.5 * (m2 + f2);
    }
    let s = (f1 - m1) / denom;
    m1 + s * (m2 - m1)
}

/// Pairwise average detection cost at a fixed decision threshold over
/// the languages that actually have trials:
/// `(1/N) sum_Lt [ p_target * P_miss(Lt)
///                 + (1-p_target)/(N-1) * sum_{Ln != Lt} P_fa(Lt, Ln) ]`.
pub fn cavg(trials: &TrialScores, p_target: f64, decision_threshold: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_target) {
        return Err(Error::InvalidParam {
            context: "p_target must lie in [0, 1]",
        });
    }
    let langs = trials.present_languages();
    let n = langs.len();
    if n < 2 {
        return Err(Error::DegenerateScores {
            context: "cavg needs at least two languages with trials",
        });
    }

    let trials_of = |lang: usize| -> Vec<usize> {
        trials
            .true_labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == lang)
            .map(|(i, _)| i)
            .collect()
    };

    let mut total = 0.0;
    for &lt in &langs {
        let own = trials_of(lt);
        let missed = own
            .iter()
            .filter(|&&i| trials.scores()[(i, lt)] < decision_threshold)
            .count();
        let p_miss = missed as f64 / own.len() as f64;

        let mut fa_sum = 0.0;
        for &ln in &langs {
            if ln == lt {
                continue;
            }
            let others = trials_of(ln);
            let alarms = others
                .iter()
                .filter(|&&i| trials.scores()[(i, lt)] >= decision_threshold)
                .count();
            fa_sum += alarms as f64 / others.len() as f64;
        }
        total += p_target * p_miss + (1.0 - p_target) / (n as f64 - 1.0) * fa_sum;
    }
    Ok(total / n as f64)
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimMismatch {
            context: "accuracy",
            expected: truth.len(),
            found: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidParam {
            context: "accuracy requires at least one trial",
        });
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}
