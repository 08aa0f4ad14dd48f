//! Agreement statistics between two raters on an ordinal scale.
//!
//! Rank correlations are undefined when either side is constant; that case is
//! `None`, never a silent zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::Score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no pairs")]
    Empty,
    #[error("{n} pair(s) given, at least {needed} required")]
    TooFew { n: usize, needed: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

fn check_lengths<T>(a: &[T], b: &[T], needed: usize) -> Result<usize, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    match a.len() {
        0 => Err(MetricsError::Empty),
        n if n < needed => Err(MetricsError::TooFew { n, needed }),
        n => Ok(n),
    }
}

/// Two experts' consensus: the mean rounded down.
pub fn aggregate_human(e1: Score, e2: Score) -> Score {
    Score::new((e1.get() + e2.get()) / 2).expect("mean of two scores is a score")
}

/// Fraction of positions where both sides are equal.
pub fn concordance_rate<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    let n = check_lengths(a, b, 1)?;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / n as f64)
}

fn is_constant<T: PartialEq>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks<T: Ord>(v: &[T]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Spearman's rho: Pearson correlation of tie-averaged ranks.
pub fn spearman_rho<T: Ord>(a: &[T], b: &[T]) -> Result<Option<f64>, MetricsError> {
    check_lengths(a, b, 2)?;
    if is_constant(a) || is_constant(b) {
        return Ok(None);
    }
    Ok(Some(pearson(&average_ranks(a), &average_ranks(b))))
}

fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort returning the number of inversions (swaps).
fn sort_counting_swaps<T: Ord + Clone>(v: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid]) + sort_counting_swaps(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            merged.push(v[j].clone());
            j += 1;
        } else {
            merged.push(v[i].clone());
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.clone_from_slice(&merged);
    swaps
}

/// Kendall's tau-b, computed in O(n log n) by sorting on the first side and
/// counting inversions on the second.
pub fn kendall_tau_b<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<Option<f64>, MetricsError> {
    let n = check_lengths(a, b, 2)? as u64;
    let mut pairs: Vec<(T, T)> = a.iter().cloned().zip(b.iter().cloned()).collect();
    pairs.sort();

    let n0 = n * (n - 1) / 2;
    let firsts: Vec<T> = pairs.iter().map(|p| p.0.clone()).collect();
    let ties_a = tied_pairs(&firsts);
    let ties_both = tied_pairs(&pairs);
    let mut seconds: Vec<T> = pairs.into_iter().map(|p| p.1).collect();
    let swaps = sort_counting_swaps(&mut seconds);
    let ties_b = tied_pairs(&seconds);

    if ties_a == n0 || ties_b == n0 {
        return Ok(None);
    }
    let numerator = n0 as i128 - ties_a as i128 - ties_b as i128 + ties_both as i128 - 2 * swaps as i128;
    let denominator = ((n0 - ties_a) as f64).sqrt() * ((n0 - ties_b) as f64).sqrt();
    Ok(Some((numerator as f64 / denominator).clamp(-1.0, 1.0)))
}

/// Unweighted Cohen's kappa. `None` when chance agreement is 1 (both raters
/// use one and the same category).
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<Option<f64>, MetricsError> {
    let n = check_lengths(a, b, 1)? as u128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let mut marginals: BTreeMap<&T, (u128, u128)> = BTreeMap::new();
    for x in a {
        marginals.entry(x).or_default().0 += 1;
    }
    for y in b {
        marginals.entry(y).or_default().1 += 1;
    }
    // kappa = (n·agree − Σ c1c2) / (n² − Σ c1c2), exact in integers
    let chance: u128 = marginals.values().map(|(c1, c2)| c1 * c2).sum();
    if chance == n * n {
        return Ok(None);
    }
    let num = (n * agree) as f64 - chance as f64;
    let den = (n * n) as f64 - chance as f64;
    Ok(Some(num / den))
}

/// Paired human/model scores, n ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedScores {
    human: Vec<Score>,
    model: Vec<Score>,
}

impl PairedScores {
    pub fn new(human: Vec<Score>, model: Vec<Score>) -> Result<Self, MetricsError> {
        check_lengths(&human, &model, 1)?;
        Ok(Self { human, model })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Score, Score)>) -> Result<Self, MetricsError> {
        let (human, model) = pairs.into_iter().unzip();
        Self::new(human, model)
    }

    pub fn len(&self) -> usize {
        self.human.len()
    }

    pub fn is_empty(&self) -> bool {
        self.human.is_empty()
    }

    pub fn human(&self) -> &[Score] {
        &self.human
    }

    pub fn model(&self) -> &[Score] {
        &self.model
    }

    pub fn concordance(&self) -> f64 {
        concordance_rate(&self.human, &self.model).expect("n >= 1")
    }

    pub fn spearman(&self) -> Result<Option<f64>, MetricsError> {
        spearman_rho(&self.human, &self.model)
    }

    pub fn kendall(&self) -> Result<Option<f64>, MetricsError> {
        kendall_tau_b(&self.human, &self.model)
    }

    pub fn kappa(&self) -> Option<f64> {
        cohens_kappa(&self.human, &self.model).expect("n >= 1")
    }

    /// Concordance always; correlations `None` when undefined or n < 2.
    pub fn summary(&self) -> AgreementSummary {
        AgreementSummary {
            n: self.len(),
            concordance: self.concordance(),
            spearman: self.spearman().ok().flatten(),
            kendall: self.kendall().ok().flatten(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub n: usize,
    pub concordance: f64,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
}

/// Agreement between two human experts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterRaterAgreement {
    pub n: usize,
    pub agreement: f64,
    pub kappa: Option<f64>,
}

impl InterRaterAgreement {
    pub fn between(a: &[Score], b: &[Score]) -> Result<Self, MetricsError> {
        Ok(Self {
            n: check_lengths(a, b, 1)?,
            agreement: concordance_rate(a, b)?,
            kappa: cohens_kappa(a, b)?,
        })
    }
}
