//! Closed-form dimension equations: the similarity dimension, the nested
//! Moran system of a GL sponge and its per-ordering sweep for Baranski
//! sponges.

use itertools::Itertools;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate, BaranskiSpec, GlSpec, SpongeSpec};
use crate::tree::LevelTree;

/// Plain bisection on a strictly decreasing function.
#[derive(Debug, Clone, Copy)]
pub struct Bisection {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for Bisection {
    fn default() -> Self {
        Self {
            tolerance: 1e-14,
            max_iter: 200,
        }
    }
}

impl Bisection {
    /// Root of a decreasing `f` in `[lo, hi]`, assuming `f(lo) >= 0 >= f(hi)`.
    pub fn decreasing_root<F: Fn(f64) -> f64>(&self, f: F, mut lo: f64, mut hi: f64) -> f64 {
        if f(lo) <= 0.0 {
            return lo;
        }
        while f(hi) > 0.0 {
            hi = lo + 2.0 * (hi - lo);
        }
        for _ in 0..self.max_iter {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= self.tolerance || mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Solution `(s_1, ..., s_d)` of the nested Moran equations. For Baranski
/// systems `permutation` is the maximizing ordering and `per_permutation`
/// lists every ordering's solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionProfile {
    pub values: Vec<f64>,
    pub permutation: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_permutation: Option<Vec<PermutationEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationEntry {
    pub sigma: Vec<usize>,
    pub values: Vec<f64>,
}

impl DimensionProfile {
    /// `s_d`, the box (and packing) dimension.
    pub fn box_dimension(&self) -> f64 {
        *self.values.last().expect("non-empty profile")
    }
}

/// Unique `s` with `sum ratios^s = 1`.
pub fn similarity_dimension(ratios: &[f64]) -> f64 {
    let neg_logs: Vec<f64> = ratios.iter().map(|r| -r.ln()).collect();
    let f = |s: f64| neg_logs.iter().map(|a| (-s * a).exp()).sum::<f64>() - 1.0;
    Bisection::default().decreasing_root(f, 0.0, 2.0)
}

/// Solves level by level. Equation `n` is
/// `sum_{i in I_n} w(parent(i)) * lambda_n(i)^(s_n - s_{n-1}) = 1`, where
/// `w` are the already fixed weights of level `n-1`.
pub fn solve_tree(tree: &LevelTree) -> Vec<f64> {
    let bisect = Bisection::default();
    let mut values = Vec::with_capacity(tree.dimension());
    let mut weights: Vec<f64> = vec![1.0];
    let mut prev = 0.0;
    for (n, level) in tree.levels().iter().enumerate() {
        let own: Vec<f64> = level.neg_log.iter().map(|nl| nl[n]).collect();
        let base: Vec<f64> = level.parent.iter().map(|&p| weights[p]).collect();
        let f = |s: f64| {
            base.iter()
                .zip(&own)
                .map(|(w, a)| w * (-(s - prev) * a).exp())
                .sum::<f64>()
                - 1.0
        };
        let s = bisect.decreasing_root(f, prev, (n + 2) as f64);
        weights = base
            .iter()
            .zip(&own)
            .map(|(w, a)| w * (-(s - prev) * a).exp())
            .collect();
        values.push(s);
        prev = s;
    }
    values
}

/// Left-hand side minus one of every equation, each term written out as the
/// full product over coordinates.
pub fn residuals(tree: &LevelTree, values: &[f64]) -> Vec<f64> {
    tree.levels()
        .iter()
        .enumerate()
        .map(|(n, level)| {
            level
                .neg_log
                .iter()
                .map(|nl| {
                    let mut exponent = 0.0;
                    let mut prev = 0.0;
                    for l in 0..=n {
                        exponent -= (values[l] - prev) * nl[l];
                        prev = values[l];
                    }
                    exponent.exp()
                })
                .sum::<f64>()
                - 1.0
        })
        .collect()
}

pub fn gl_profile(spec: &GlSpec) -> Result<DimensionProfile> {
    let tree = LevelTree::from_gl(spec)?;
    Ok(DimensionProfile {
        values: solve_tree(&tree),
        permutation: (1..=spec.dimension).collect(),
        per_permutation: None,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PermutationBudget {
    /// Largest dimension whose `d!` orderings are swept.
    pub max_dimension: usize,
}

impl Default for PermutationBudget {
    fn default() -> Self {
        Self { max_dimension: 8 }
    }
}

/// Sweeps all `d!` coordinate orderings and keeps the largest `s_d`; ties go
/// to the lexicographically smallest ordering.
pub fn baranski_dimension(
    spec: &BaranskiSpec,
    budget: PermutationBudget,
) -> Result<DimensionProfile> {
    validate(&SpongeSpec::Baranski(spec.clone())).into_result()?;
    let d = spec.dimension;
    if d > budget.max_dimension {
        return Err(Error::PermutationBudget {
            dimension: d,
            cap: budget.max_dimension,
        });
    }
    // itertools yields permutations of a sorted input in lexicographic order
    let sigmas: Vec<Vec<usize>> = (1..=d).permutations(d).collect();
    let entries: Vec<PermutationEntry> = sigmas
        .into_par_iter()
        .map(|sigma| {
            let tree = LevelTree::from_baranski(spec, &sigma)?;
            Ok(PermutationEntry {
                values: solve_tree(&tree),
                sigma,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, e) in entries.iter().enumerate() {
        let top = *entries[best].values.last().unwrap();
        if *e.values.last().unwrap() > top + 1e-12 {
            best = k;
        }
    }
    Ok(DimensionProfile {
        values: entries[best].values.clone(),
        permutation: entries[best].sigma.clone(),
        per_permutation: Some(entries),
    })
}

/// Closed-form profile of any supported spec.
pub fn dimension_profile(spec: &SpongeSpec, budget: PermutationBudget) -> Result<DimensionProfile> {
    match spec {
        SpongeSpec::SelfSimilar(s) => {
            validate(spec).into_result()?;
            let ratios: Vec<f64> = s.ratios.iter().map(|r| r.value()).collect();
            Ok(DimensionProfile {
                values: vec![similarity_dimension(&ratios)],
                permutation: vec![1],
                per_permutation: None,
            })
        }
        SpongeSpec::GatzourasLalley(gl) => gl_profile(gl),
        SpongeSpec::Baranski(b) => baranski_dimension(b, budget),
    }
}
