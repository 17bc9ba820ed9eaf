//! Hausdorff dimension of planar Gatzouras-Lalley carpets through the
//! variational formula over Bernoulli measures, and the uniform fibre test.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GlSpec, SpongeSpec};
use crate::moran::solve_tree;
use crate::tree::LevelTree;
use crate::variational::{dominant_type, random_interior_profile, OptimizeOptions, ProbVector};

fn planar_tree(spec: &SpongeSpec) -> Result<(LevelTree, GlSpec)> {
    match spec {
        SpongeSpec::GatzourasLalley(gl) if gl.dimension == 2 => {
            Ok((LevelTree::from_gl(gl)?, gl.clone()))
        }
        other => Err(Error::Unsupported {
            operation: "the Hausdorff formula",
            expected: "a two-dimensional gatzouras-lalley carpet",
            found: format!("{} in dimension {}", other.kind(), other.dimension()),
        }),
    }
}

/// Column sums `q_i = sum_{j in I(i)} p_(i,j)`.
pub fn column_marginal(tree: &LevelTree, p2: &ProbVector) -> Result<ProbVector> {
    if tree.dimension() != 2 {
        return Err(Error::Unsupported {
            operation: "the column marginal",
            expected: "dimension 2",
            found: tree.dimension().to_string(),
        });
    }
    let level = tree.level(2);
    if p2.support() != level.keys.as_slice() {
        return Err(Error::SupportMismatch {
            expected: level.len(),
            found: p2.len(),
        });
    }
    ProbVector::normalized(tree.level(1).keys.clone(), marginal(tree, p2.masses()))
}

fn marginal(tree: &LevelTree, p: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; tree.level(1).len()];
    for (m, &parent) in p.iter().zip(&tree.level(2).parent) {
        q[parent] += m;
    }
    q
}

fn h(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

struct Carpet {
    a1: Vec<f64>,
    a2: Vec<f64>,
    col: Vec<usize>,
    columns: usize,
}

impl Carpet {
    fn new(tree: &LevelTree) -> Self {
        let level = tree.level(2);
        Self {
            a1: level.neg_log.iter().map(|nl| nl[0]).collect(),
            a2: level.neg_log.iter().map(|nl| nl[1]).collect(),
            col: level.parent.clone(),
            columns: tree.level(1).len(),
        }
    }

    fn q(&self, p: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.columns];
        for (m, &c) in p.iter().zip(&self.col) {
            q[c] += m;
        }
        q
    }

    fn value(&self, p: &[f64]) -> f64 {
        let c1: f64 = p.iter().zip(&self.a1).map(|(p, a)| p * a).sum();
        let c2: f64 = p.iter().zip(&self.a2).map(|(p, a)| p * a).sum();
        h(p) / c2 + (1.0 - c1 / c2) * h(&self.q(p)) / c1
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let q = self.q(p);
        let c1: f64 = p.iter().zip(&self.a1).map(|(p, a)| p * a).sum();
        let c2: f64 = p.iter().zip(&self.a2).map(|(p, a)| p * a).sum();
        let hp = h(p);
        let hq = h(&q);
        p.iter()
            .enumerate()
            .map(|(i, &pi)| {
                let dh = -pi.max(1e-300).ln() - 1.0;
                let dq = -q[self.col[i]].max(1e-300).ln() - 1.0;
                dh / c2 - hp * self.a2[i] / (c2 * c2) + dq / c1
                    - hq * self.a1[i] / (c1 * c1)
                    - dq / c2
                    + hq * self.a2[i] / (c2 * c2)
            })
            .collect()
    }
}

fn kkt(p: &[f64], g: &[f64]) -> f64 {
    let mean: f64 = p.iter().zip(g).map(|(p, g)| p * g).sum();
    g.iter().map(|g| (g - mean).abs()).fold(0.0, f64::max)
}

struct Ascent {
    p: Vec<f64>,
    value: f64,
    kkt: f64,
    converged: bool,
}

fn ascend(c: &Carpet, mut p: Vec<f64>, opts: &OptimizeOptions) -> Ascent {
    let mut value = c.value(&p);
    let mut step = 1.0;
    let mut res = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let g = c.gradient(&p);
        res = kkt(&p, &g);
        if res <= opts.tolerance {
            return Ascent {
                p,
                value,
                kkt: res,
                converged: true,
            };
        }
        let mean: f64 = p.iter().zip(&g).map(|(p, g)| p * g).sum();
        loop {
            let w: Vec<f64> = p
                .iter()
                .zip(&g)
                .map(|(p, g)| (p * (step * (g - mean)).exp()).max(1e-300))
                .collect();
            let total: f64 = w.iter().sum();
            let trial: Vec<f64> = w.into_iter().map(|x| x / total).collect();
            let v = c.value(&trial);
            if v >= value {
                let stalled = trial == p;
                p = trial;
                value = v;
                step = (step * 1.5).min(1e6);
                if stalled {
                    return Ascent {
                        p,
                        value,
                        kkt: res,
                        converged: res <= opts.tolerance.sqrt(),
                    };
                }
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return Ascent {
                    p,
                    value,
                    kkt: res,
                    converged: res <= opts.tolerance.sqrt(),
                };
            }
        }
    }
    Ascent {
        p,
        value,
        kkt: res,
        converged: false,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HausdorffReport {
    pub value: f64,
    pub p: ProbVector,
    pub q: ProbVector,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Largest minus smallest value over all starts.
    pub spread: f64,
    /// `s_2` of the same carpet.
    pub box_dimension: f64,
}

/// Maximizes `H(p)/chi_2(p) + (1 - chi_1(p)/chi_2(p)) H(q_p)/chi_1(q_p)`
/// over probability vectors on `I_2`.
pub fn hausdorff_dim_2d(spec: &SpongeSpec, opts: &OptimizeOptions) -> Result<HausdorffReport> {
    let (tree, _) = planar_tree(spec)?;
    let carpet = Carpet::new(&tree);
    let n = tree.level(2).len();
    let mut starts = vec![vec![1.0 / n as f64; n]];
    for k in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
        starts.push(random_interior_profile(&tree, &mut rng, 1e-3).masses()[1].clone());
    }
    let runs: Vec<Ascent> = starts
        .into_par_iter()
        .map(|p| ascend(&carpet, p, opts))
        .collect();
    let lo = runs.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let best = runs
        .into_iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    let q = carpet.q(&best.p);
    Ok(HausdorffReport {
        value: best.value,
        p: ProbVector::normalized(tree.level(2).keys.clone(), best.p)?,
        q: ProbVector::normalized(tree.level(1).keys.clone(), q)?,
        kkt_residual: best.kkt,
        converged: best.converged,
        spread: best.value - lo,
        box_dimension: *solve_tree(&tree).last().unwrap(),
    })
}

/// Largest alphabet accepted by [`hausdorff_grid_search`].
pub const GRID_MAX_SYMBOLS: usize = 4;

fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(rest);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in 0..=rest {
            cur.push(c);
            rec(rest - c, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, parts, &mut Vec::new(), &mut out);
    out
}

/// Dense search over the simplex on `I_2` at spacing `0.01`, refined around
/// the best point at spacings `1e-3` and `1e-4`. Independent of any gradient.
pub fn hausdorff_grid_search(spec: &SpongeSpec) -> Result<(f64, Vec<f64>)> {
    let (tree, _) = planar_tree(spec)?;
    let carpet = Carpet::new(&tree);
    let n = tree.level(2).len();
    if n > GRID_MAX_SYMBOLS {
        return Err(Error::Unsupported {
            operation: "the grid search",
            expected: "at most 4 cells",
            found: n.to_string(),
        });
    }
    let coarse = 100;
    let (mut best_v, mut best_p) = compositions(coarse, n)
        .into_par_iter()
        .map(|c| {
            let p: Vec<f64> = c.iter().map(|&k| k as f64 / coarse as f64).collect();
            (carpet.value(&p), p)
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec::new()),
            |a, b| if b.0 > a.0 { b } else { a },
        );
    for step in [1e-3, 1e-4] {
        let reach = 10i64;
        let free = n - 1;
        let offsets: Vec<Vec<i64>> = (0..(2 * reach + 1).pow(free as u32))
            .map(|mut k| {
                (0..free)
                    .map(|_| {
                        let o = k % (2 * reach + 1) - reach;
                        k /= 2 * reach + 1;
                        o
                    })
                    .collect()
            })
            .collect();
        let centre = best_p.clone();
        let (v, p) = offsets
            .into_par_iter()
            .filter_map(|off| {
                let mut p: Vec<f64> = centre[..free]
                    .iter()
                    .zip(&off)
                    .map(|(c, &o)| c + o as f64 * step)
                    .collect();
                let last = 1.0 - p.iter().sum::<f64>();
                p.push(last);
                if p.iter().any(|&x| x < -1e-15) {
                    return None;
                }
                let p: Vec<f64> = p.into_iter().map(|x| x.max(0.0)).collect();
                Some((carpet.value(&p), p))
            })
            .reduce(
                || (f64::NEG_INFINITY, Vec::new()),
                |a, b| if b.0 > a.0 { b } else { a },
            );
        if v > best_v {
            best_v = v;
            best_p = p;
        }
    }
    Ok((best_v, best_p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FibreReport {
    pub is_uniform: bool,
    /// `sum_{j in I(i)} lambda(i,j)^(s_2 - s_1) - 1` for each column `i`.
    pub residuals: Vec<f64>,
    /// Sup-norm distance between `q` of the optimal `p_2` and the optimal `p_1`.
    pub marginal_gap: f64,
}

pub fn uniform_fibre_check(spec: &SpongeSpec) -> Result<FibreReport> {
    let (tree, _) = planar_tree(spec)?;
    let s = solve_tree(&tree);
    let level = tree.level(2);
    let mut residuals = vec![-1.0; tree.level(1).len()];
    for (nl, &c) in level.neg_log.iter().zip(&level.parent) {
        residuals[c] += (-(s[1] - s[0]) * nl[1]).exp();
    }
    let star = dominant_type(&tree, &s)?;
    let q = marginal(&tree, star.block(2).masses());
    let marginal_gap = q
        .iter()
        .zip(star.block(1).masses())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(FibreReport {
        is_uniform: residuals.iter().all(|r| r.abs() <= 1e-10),
        residuals,
        marginal_gap,
    })
}
