//! Knockoff selection: the FDR threshold (with optional knockoff+ offset) and
//! the k-FWER threshold calibrated by a negative binomial tail.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datagen::GroundTruth;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Fdr,
    Kfwer,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Fdr => "fdr",
            Rule::Kfwer => "kfwer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// `+∞` when nothing is selected for lack of a feasible threshold.
    pub threshold: f64,
    /// 0-based indices `{j : w_j ≥ threshold}`, ascending.
    pub selected: Vec<usize>,
    pub rule: Rule,
    pub q: f64,
    pub k: Option<usize>,
    pub v: Option<usize>,
    pub offset: Option<u8>,
}

impl SelectionOutcome {
    pub fn n_selected(&self) -> usize {
        self.selected.len()
    }
}

fn check_inputs(w: &[f64], q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("target level q must lie in (0, 1), got {q}")));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("statistics must be finite".into()));
    }
    Ok(())
}

/// Sorted distinct `|w_j|` over `w_j ≠ 0`.
fn candidates(w: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = w.iter().filter(|&&v| v != 0.0).map(|v| v.abs()).collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Counts `#{w_j ≥ t}` and `#{w_j ≤ -t}` by binary search.
struct Counter {
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl Counter {
    fn new(w: &[f64]) -> Self {
        let mut pos: Vec<f64> = w.iter().copied().filter(|&v| v > 0.0).collect();
        let mut neg: Vec<f64> = w.iter().filter(|&&v| v < 0.0).map(|v| -v).collect();
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        Self { pos, neg }
    }

    fn above(&self, t: f64) -> usize {
        self.pos.len() - self.pos.partition_point(|&v| v < t)
    }

    fn below(&self, t: f64) -> usize {
        self.neg.len() - self.neg.partition_point(|&v| v < t)
    }
}

fn select(w: &[f64], threshold: f64) -> Vec<usize> {
    if !threshold.is_finite() {
        return Vec::new();
    }
    (0..w.len()).filter(|&j| w[j] > 0.0 && w[j] >= threshold).collect()
}

/// `T = min{t : (offset + #{w_j ≤ -t}) / max(#{w_j ≥ t}, 1) ≤ q}` over
/// `t ∈ {|w_j| : w_j ≠ 0}`; `T = +∞` when no candidate is feasible.
pub fn fdr_threshold(w: &[f64], q: f64, offset: u8) -> Result<SelectionOutcome> {
    check_inputs(w, q)?;
    if offset > 1 {
        return Err(Error::InvalidParameter(format!("offset must be 0 or 1, got {offset}")));
    }
    let counter = Counter::new(w);
    let threshold = candidates(w)
        .into_iter()
        .find(|&t| (offset as f64 + counter.below(t) as f64) / counter.above(t).max(1) as f64 <= q)
        .unwrap_or(f64::INFINITY);
    Ok(SelectionOutcome {
        threshold,
        selected: select(w, threshold),
        rule: Rule::Fdr,
        q,
        k: None,
        v: None,
        offset: Some(offset),
    })
}

/// `P(L ≥ k)` for `L ~ NB(v, 1/2)`, the number of failures before the `v`-th
/// success with fair coins. `v = 0` gives 0.
pub fn nb_tail(v: usize, k: usize) -> f64 {
    if v == 0 {
        return 0.0;
    }
    // pmf(0) = 2^{-v}, pmf(i+1) = pmf(i) (i + v) / (2 (i + 1)), in log space
    let mut log_pmf = -(v as f64) * std::f64::consts::LN_2;
    let mut head = 0.0;
    for i in 0..k {
        head += log_pmf.exp();
        log_pmf += ((i + v) as f64).ln() - std::f64::consts::LN_2 - ((i + 1) as f64).ln();
    }
    (1.0 - head).max(0.0)
}

/// Largest `v ≥ 0` with `P(NB(v, 1/2) ≥ k) ≤ q`.
pub fn kfwer_v(k: usize, q: f64) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("target level q must lie in (0, 1), got {q}")));
    }
    let mut v = 0;
    while nb_tail(v + 1, k) <= q {
        v += 1;
    }
    Ok(v)
}

/// The k-FWER threshold for a given `v`: the largest candidate `t` with
/// `#{j : -w_j ≥ t} = v`, falling back to the smallest candidate with count
/// `≤ v`, and `+∞` if there is none.
pub fn kfwer_threshold_for_v(w: &[f64], v: usize) -> f64 {
    let counter = Counter::new(w);
    let cands = candidates(w);
    if let Some(&t) = cands.iter().rev().find(|&&t| counter.below(t) == v) {
        return t;
    }
    cands.into_iter().find(|&t| counter.below(t) <= v).unwrap_or(f64::INFINITY)
}

/// k-FWER selection at level `q` with `v = kfwer_v(k, q)`.
pub fn kfwer_threshold(w: &[f64], k: usize, q: f64) -> Result<SelectionOutcome> {
    check_inputs(w, q)?;
    let v = kfwer_v(k, q)?;
    let threshold = kfwer_threshold_for_v(w, v);
    Ok(SelectionOutcome {
        threshold,
        selected: select(w, threshold),
        rule: Rule::Kfwer,
        q,
        k: Some(k),
        v: Some(v),
        offset: None,
    })
}

/// `(FDP, power)`: `|Ŝ ∩ H₀| / max(|Ŝ|, 1)` and `|Ŝ ∩ H₁| / |H₁|` (0 when `H₁` is empty).
pub fn score(outcome: &SelectionOutcome, truth: &GroundTruth) -> (f64, f64) {
    let false_hits = outcome.selected.iter().filter(|&&j| truth.is_null(j)).count();
    let true_hits = outcome.selected.len() - false_hits;
    let fdp = false_hits as f64 / outcome.selected.len().max(1) as f64;
    let power = if truth.support.is_empty() { 0.0 } else { true_hits as f64 / truth.support.len() as f64 };
    (fdp, power)
}

/// Number of selected nulls.
pub fn false_discoveries(outcome: &SelectionOutcome, truth: &GroundTruth) -> usize {
    outcome.selected.iter().filter(|&&j| truth.is_null(j)).count()
}
