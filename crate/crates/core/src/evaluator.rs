//! Classification metrics (accuracy, F1, one-vs-rest AUC, confusion) and
//! equal error rate from genuine and impostor score pools.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Mean one-vs-rest AUC over classes present in the truth labels.
    pub macro_auc: f64,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_f1: Vec<f64>,
    /// `None` for classes absent from the truth labels.
    pub per_class_auc: Vec<Option<f64>>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `2 TP / (2 TP + FP + FN)`, zero when the class never occurs in truth or
/// prediction.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Points of the ROC curve for `scores` with binary `positive` flags, from
/// `(0, 0)` to `(1, 1)`, one point per distinct score (ties grouped).
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let fpr = if neg == 0 { 0.0 } else { fp as f64 / neg as f64 };
        let tpr = if pos == 0 { 0.0 } else { tp as f64 / pos as f64 };
        points.push((fpr, tpr));
    }
    points
}

/// Trapezoid area under the ROC curve. `None` unless both classes occur.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos = positive.iter().filter(|&&p| p).count();
    if pos == 0 || pos == positive.len() {
        return None;
    }
    let roc = roc_curve(scores, positive);
    Some(roc.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

/// Metrics over `C = scores[i].len()` classes. Classes missing from `truth`
/// get F1 zero and are left out of the macro AUC.
pub fn classification_metrics(truth: &[usize], pred: &[usize], scores: &[Vec<f64>]) -> Result<EvalReport> {
    if truth.len() != pred.len() || truth.len() != scores.len() {
        return Err(Error::LengthMismatch(format!(
            "{} truth labels, {} predictions, {} score rows",
            truth.len(),
            pred.len(),
            scores.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyList);
    }
    let classes = scores[0].len();
    if let Some(row) = scores.iter().find(|r| r.len() != classes) {
        return Err(Error::LengthMismatch(format!("score rows of width {classes} and {}", row.len())));
    }
    if let Some(&label) = truth.iter().chain(pred).find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class_f1: Vec<f64> = (0..classes)
        .map(|c| {
            let tp = confusion[c][c];
            let fn_ = confusion[c].iter().sum::<usize>() - tp;
            let fp = (0..classes).map(|r| confusion[r][c]).sum::<usize>() - tp;
            f1(tp, fp, fn_)
        })
        .collect();
    let per_class_auc: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            auc(&s, &positive)
        })
        .collect();
    let defined: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::DegenerateClass);
    }
    Ok(EvalReport {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: per_class_f1.iter().sum::<f64>() / classes as f64,
        macro_auc: defined.iter().sum::<f64>() / defined.len() as f64,
        confusion,
        per_class_f1,
        per_class_auc,
    })
}

/// Serialized-mode UIA: unweighted mean of per-gesture accuracies.
pub fn uia_serialized(per_gesture: &[EvalReport]) -> Result<f64> {
    if per_gesture.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(per_gesture.iter().map(|r| r.accuracy).sum::<f64>() / per_gesture.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    /// Scores for the target user on the target user's own samples.
    pub genuine: Vec<f64>,
    /// Scores for the target user on everybody else's samples.
    pub impostor: Vec<f64>,
}

fn fpr_at(impostor: &[f64], t: f64) -> f64 {
    impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64
}

fn fnr_at(genuine: &[f64], t: f64) -> f64 {
    genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64
}

/// Operating points `(threshold, FPR, FNR)` over every distinct score plus
/// one threshold above the maximum, in increasing threshold order.
pub fn det_points(s: &ScoreSet) -> Result<Vec<(f64, f64, f64)>> {
    if s.genuine.is_empty() || s.impostor.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut thresholds: Vec<f64> = s.genuine.iter().chain(&s.impostor).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let top = *thresholds.last().expect("non-empty");
    thresholds.push(if top == 0.0 { 1.0 } else { top + top.abs() });
    Ok(thresholds.into_iter().map(|t| (t, fpr_at(&s.impostor, t), fnr_at(&s.genuine, t))).collect())
}

/// Equal error rate and its threshold. FPR falls and FNR rises as the
/// threshold sweeps upward; the crossing of `FPR - FNR` through zero is
/// taken exactly when a threshold hits it, else interpolated linearly
/// between the bracketing thresholds.
pub fn eer(s: &ScoreSet) -> Result<(f64, f64)> {
    let pts = det_points(s)?;
    let diff = |p: &(f64, f64, f64)| p.1 - p.2;
    for (i, p) in pts.iter().enumerate() {
        let d = diff(p);
        if d == 0.0 {
            return Ok((p.1, p.0));
        }
        if d < 0.0 {
            // first point where FNR exceeds FPR; bracket with the previous one
            let q = &pts[i.checked_sub(1).expect("lowest threshold has FNR = 0")];
            let dq = diff(q);
            let a = dq / (dq - d);
            let rate = q.1 + a * (p.1 - q.1);
            let rate_n = q.2 + a * (p.2 - q.2);
            debug_assert!((rate - rate_n).abs() < 1e-9);
            return Ok((rate, q.0 + a * (p.0 - q.0)));
        }
    }
    unreachable!("the final threshold has FPR = 0 and FNR = 1")
}

/// Genuine and impostor pools for each user from per-sample probability
/// vectors over users.
pub fn user_score_sets(truth: &[usize], scores: &[Vec<f64>]) -> Result<Vec<ScoreSet>> {
    if truth.len() != scores.len() {
        return Err(Error::LengthMismatch(format!("{} labels, {} score rows", truth.len(), scores.len())));
    }
    let users = scores.first().map(Vec::len).ok_or(Error::EmptyList)?;
    let mut sets = vec![ScoreSet::default(); users];
    for (&t, row) in truth.iter().zip(scores) {
        if row.len() != users {
            return Err(Error::LengthMismatch(format!("score rows of width {users} and {}", row.len())));
        }
        if t >= users {
            return Err(Error::LabelOutOfRange { label: t, classes: users });
        }
        for (u, &v) in row.iter().enumerate() {
            if u == t {
                sets[u].genuine.push(v);
            } else {
                sets[u].impostor.push(v);
            }
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EerSummary {
    /// `(eer, threshold)` per user; `None` when a pool is empty.
    pub per_user: Vec<Option<(f64, f64)>>,
    /// Unweighted mean over users with both pools.
    pub mean: f64,
}

pub fn system_eer(truth: &[usize], scores: &[Vec<f64>]) -> Result<EerSummary> {
    let per_user: Vec<Option<(f64, f64)>> = user_score_sets(truth, scores)?
        .iter()
        .map(|s| match eer(s) {
            Ok(v) => Ok(Some(v)),
            Err(Error::EmptyPool) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let defined: Vec<f64> = per_user.iter().flatten().map(|v| v.0).collect();
    if defined.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(EerSummary { mean: defined.iter().sum::<f64>() / defined.len() as f64, per_user })
}

/// `class,threshold_index,fpr,tpr` rows of every class's one-vs-rest ROC.
pub fn roc_csv(truth: &[usize], scores: &[Vec<f64>]) -> String {
    let mut out = String::from("class,point,fpr,tpr\n");
    let classes = scores.first().map(Vec::len).unwrap_or(0);
    for c in 0..classes {
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        if auc(&s, &positive).is_none() {
            continue;
        }
        for (i, (fpr, tpr)) in roc_curve(&s, &positive).into_iter().enumerate() {
            out.push_str(&format!("{c},{i},{fpr},{tpr}\n"));
        }
    }
    out
}

/// `threshold,fpr,fnr` rows for one score set.
pub fn det_csv(s: &ScoreSet) -> Result<String> {
    let mut out = String::from("threshold,fpr,fnr\n");
    for (t, fpr, fnr) in det_points(s)? {
        out.push_str(&format!("{t},{fpr},{fnr}\n"));
    }
    Ok(out)
}
