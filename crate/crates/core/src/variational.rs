//! Entropy and Lyapunov machinery on a [`LevelTree`]: stopping constants,
//! the variational objective `sum C_n H(p_n)`, its gradient and maximizer,
//! and the closed-form dominant type.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::LevelTree;

/// Probability masses on an explicit support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    support: Vec<Vec<usize>>,
    masses: Vec<f64>,
}

impl ProbVector {
    pub fn new(support: Vec<Vec<usize>>, masses: Vec<f64>) -> Result<Self> {
        if support.len() != masses.len() {
            return Err(Error::SupportMismatch {
                expected: support.len(),
                found: masses.len(),
            });
        }
        if let Some(m) = masses.iter().find(|m| m.is_nan() || **m < 0.0) {
            return Err(Error::NotProbability(format!("negative mass {m}")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotProbability(format!("masses sum to {total}")));
        }
        Ok(Self { support, masses })
    }

    /// Rescales arbitrary nonnegative weights to unit mass.
    pub fn normalized(support: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::NotProbability(format!("weights sum to {total}")));
        }
        Self::new(support, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(support: Vec<Vec<usize>>) -> Self {
        let n = support.len();
        Self {
            support,
            masses: vec![1.0 / n as f64; n],
        }
    }

    pub fn support(&self) -> &[Vec<usize>] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Mass of `key`, zero off the support.
    pub fn get(&self, key: &[usize]) -> f64 {
        self.support
            .iter()
            .position(|k| k.as_slice() == key)
            .map_or(0.0, |i| self.masses[i])
    }
}

/// `(p_d; ...; p_1)`, stored by level: `block(n)` is `p_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeProfile {
    levels: Vec<ProbVector>,
}

impl TypeProfile {
    /// Blocks listed by level `1..=d`.
    pub fn from_levels(levels: Vec<ProbVector>) -> Self {
        Self { levels }
    }

    /// Builds a profile on `tree` from per-level masses.
    pub fn on_tree(tree: &LevelTree, masses: Vec<Vec<f64>>) -> Result<Self> {
        if masses.len() != tree.dimension() {
            return Err(Error::DimensionMismatch {
                expected: tree.dimension(),
                found: masses.len(),
                context: "type profile".into(),
            });
        }
        let levels = tree
            .levels()
            .iter()
            .zip(masses)
            .map(|(level, m)| ProbVector::new(level.keys.clone(), m))
            .collect::<Result<_>>()?;
        Ok(Self { levels })
    }

    pub fn uniform(tree: &LevelTree) -> Self {
        Self {
            levels: tree
                .levels()
                .iter()
                .map(|l| ProbVector::uniform(l.keys.clone()))
                .collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.levels.len()
    }

    /// `p_n`, 1-based.
    pub fn block(&self, n: usize) -> &ProbVector {
        &self.levels[n - 1]
    }

    pub fn levels(&self) -> &[ProbVector] {
        &self.levels
    }

    /// Blocks in stage order `p_d, p_{d-1}, ..., p_1`.
    pub fn stage_order(&self) -> impl Iterator<Item = &ProbVector> {
        self.levels.iter().rev()
    }

    pub fn masses(&self) -> Vec<Vec<f64>> {
        self.levels.iter().map(|p| p.masses.clone()).collect()
    }

    /// Largest mass difference over all blocks.
    pub fn sup_distance(&self, other: &TypeProfile) -> f64 {
        self.levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.masses.iter().zip(&b.masses).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Errors unless every block lives on the matching level of `tree`.
    pub fn check(&self, tree: &LevelTree) -> Result<()> {
        if self.levels.len() != tree.dimension() {
            return Err(Error::DimensionMismatch {
                expected: tree.dimension(),
                found: self.levels.len(),
                context: "type profile".into(),
            });
        }
        for (p, level) in self.levels.iter().zip(tree.levels()) {
            if p.support != level.keys {
                return Err(Error::SupportMismatch {
                    expected: level.len(),
                    found: p.len(),
                });
            }
        }
        Ok(())
    }
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.max(1e-300).ln()
    } else {
        0.0
    }
}

fn entropy_of(masses: &[f64]) -> f64 {
    -masses.iter().map(|&p| xlogx(p)).sum::<f64>()
}

/// Shannon entropy in nats.
pub fn entropy(p: &ProbVector) -> f64 {
    entropy_of(&p.masses)
}

fn chi(tree: &LevelTree, masses: &[f64], m: usize, n: usize) -> f64 {
    tree.level(m)
        .neg_log
        .iter()
        .zip(masses)
        .map(|(nl, p)| p * nl[n - 1])
        .sum()
}

/// `chi_n(p_m)`, the mean `-ln` of the coordinate-`n` ratio under `p_m`.
pub fn lyapunov(tree: &LevelTree, p_m: &ProbVector, m: usize, n: usize) -> Result<f64> {
    if m == 0 || m > tree.dimension() {
        return Err(Error::CoordinateOutOfRange {
            coordinate: m,
            dimension: tree.dimension(),
        });
    }
    if n == 0 || n > m {
        return Err(Error::LevelMismatch {
            coordinate: n,
            level: m,
        });
    }
    if p_m.support != tree.level(m).keys {
        return Err(Error::SupportMismatch {
            expected: tree.level(m).len(),
            found: p_m.len(),
        });
    }
    Ok(chi(tree, &p_m.masses, m, n))
}

/// `chis[n-1][m-1] = chi_n(p_m)` for `n <= m`.
fn chi_table(tree: &LevelTree, masses: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = tree.dimension();
    (1..=d)
        .map(|n| {
            (1..=d)
                .map(|m| {
                    if m >= n {
                        chi(tree, &masses[m - 1], m, n)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn constants_from(chis: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = chis.len();
    let mut c = vec![0.0; d];
    for n in (1..=d).rev() {
        let own = chis[n - 1][n - 1];
        if own.is_nan() || own <= 0.0 {
            return Err(Error::ZeroLyapunov(n));
        }
        let later: f64 = (n + 1..=d).map(|m| c[m - 1] * chis[n - 1][m - 1]).sum();
        c[n - 1] = (1.0 - later) / own;
    }
    Ok(c)
}

/// `(C_1, ..., C_d)`: `C_d = 1/chi_d(p_d)` and
/// `C_n = (1 - sum_{m>n} C_m chi_n(p_m)) / chi_n(p_n)`.
pub fn stopping_constants(tree: &LevelTree, profile: &TypeProfile) -> Result<Vec<f64>> {
    profile.check(tree)?;
    constants_from(&chi_table(tree, &profile.masses()))
}

fn objective_raw(tree: &LevelTree, masses: &[Vec<f64>]) -> Result<f64> {
    let c = constants_from(&chi_table(tree, masses))?;
    Ok(c.iter().zip(masses).map(|(c, p)| c * entropy_of(p)).sum())
}

/// `sum_n C_n H(p_n)`.
pub fn objective(tree: &LevelTree, profile: &TypeProfile) -> Result<f64> {
    profile.check(tree)?;
    objective_raw(tree, &profile.masses())
}

fn gradient_raw(tree: &LevelTree, masses: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = tree.dimension();
    let chis = chi_table(tree, masses);
    let c = constants_from(&chis)?;
    let h: Vec<f64> = masses.iter().map(|p| entropy_of(p)).collect();
    // adjoints of C_n, accounting for every C_k (k < n) that reads C_n
    let mut bar = vec![0.0; d];
    for n in 1..=d {
        bar[n - 1] = h[n - 1]
            - (1..n)
                .map(|k| bar[k - 1] * chis[k - 1][n - 1] / chis[k - 1][k - 1])
                .sum::<f64>();
    }
    Ok((1..=d)
        .map(|m| {
            let level = tree.level(m);
            masses[m - 1]
                .iter()
                .zip(&level.neg_log)
                .map(|(&p, nl)| {
                    let mut g = c[m - 1] * (-p.max(1e-300).ln() - 1.0);
                    for n in 1..=m {
                        g -= bar[n - 1] * c[m - 1] * nl[n - 1] / chis[n - 1][n - 1];
                    }
                    g
                })
                .collect()
        })
        .collect())
}

/// Gradient of [`objective`] in the ambient coordinates `p_m(i)`.
pub fn gradient(tree: &LevelTree, profile: &TypeProfile) -> Result<Vec<Vec<f64>>> {
    profile.check(tree)?;
    gradient_raw(tree, &profile.masses())
}

/// Central differences of [`objective`] in the ambient coordinates.
pub fn finite_difference_gradient(
    tree: &LevelTree,
    profile: &TypeProfile,
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    profile.check(tree)?;
    let base = profile.masses();
    let mut out = base.clone();
    for m in 0..base.len() {
        for i in 0..base[m].len() {
            let mut plus = base.clone();
            plus[m][i] += h;
            let mut minus = base.clone();
            minus[m][i] -= h;
            out[m][i] = (objective_raw(tree, &plus)? - objective_raw(tree, &minus)?) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Largest deviation of the gradient from its `p`-weighted mean inside each
/// block. Vanishes at interior critical points on the product of simplices.
pub fn kkt_residual(tree: &LevelTree, profile: &TypeProfile) -> Result<f64> {
    let g = gradient(tree, profile)?;
    Ok(kkt_of(&profile.masses(), &g))
}

fn kkt_of(masses: &[Vec<f64>], g: &[Vec<f64>]) -> f64 {
    masses
        .iter()
        .zip(g)
        .map(|(p, g)| {
            let mean: f64 = p.iter().zip(g).map(|(p, g)| p * g).sum();
            g.iter().map(|g| (g - mean).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Closed form of the maximizer:
/// `p_n(i) = prod_{l<=n} lambda_l(i)^(s_l - s_{l-1})` with `s_0 = 0`.
pub fn dominant_type(tree: &LevelTree, values: &[f64]) -> Result<TypeProfile> {
    if values.len() != tree.dimension() {
        return Err(Error::DimensionMismatch {
            expected: tree.dimension(),
            found: values.len(),
            context: "dimension profile".into(),
        });
    }
    let masses = tree
        .levels()
        .iter()
        .enumerate()
        .map(|(n, level)| {
            level
                .neg_log
                .iter()
                .map(|nl| {
                    let mut prev = 0.0;
                    let mut e = 0.0;
                    for l in 0..=n {
                        e -= (values[l] - prev) * nl[l];
                        prev = values[l];
                    }
                    e.exp()
                })
                .collect()
        })
        .collect();
    TypeProfile::on_tree(tree, masses)
}

/// The objective written out through Lyapunov exponents, for `d = 2, 3`.
pub fn evaluate_ly_formula(tree: &LevelTree, profile: &TypeProfile) -> Result<f64> {
    profile.check(tree)?;
    let m = profile.masses();
    let x = |n: usize, k: usize| chi(tree, &m[k - 1], k, n);
    let h = |k: usize| entropy_of(&m[k - 1]);
    match tree.dimension() {
        2 => Ok(h(2) / x(2, 2) + (1.0 - x(1, 2) / x(2, 2)) * h(1) / x(1, 1)),
        3 => {
            let a = 1.0 - x(2, 3) / x(3, 3);
            Ok(h(3) / x(3, 3)
                + a * h(2) / x(2, 2)
                + (1.0 - x(1, 3) / x(3, 3) - a * x(1, 2) / x(2, 2)) * h(1) / x(1, 1))
        }
        d => Err(Error::Unsupported {
            operation: "the Lyapunov form",
            expected: "dimension 2 or 3",
            found: d.to_string(),
        }),
    }
}

/// Independent uniform (Dirichlet(1,...,1)) draw for every block.
pub fn random_profile<R: Rng + ?Sized>(tree: &LevelTree, rng: &mut R) -> TypeProfile {
    random_interior_profile(tree, rng, 0.0)
}

/// Like [`random_profile`] but mixed with the uniform vector so every mass is
/// at least `margin / #I_n`.
pub fn random_interior_profile<R: Rng + ?Sized>(
    tree: &LevelTree,
    rng: &mut R,
    margin: f64,
) -> TypeProfile {
    let levels = tree
        .levels()
        .iter()
        .map(|level| {
            let n = level.len();
            let w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = w.iter().sum();
            let masses = w
                .into_iter()
                .map(|x| (1.0 - margin) * x / total + margin / n as f64)
                .collect();
            ProbVector {
                support: level.keys.clone(),
                masses,
            }
        })
        .collect();
    TypeProfile { levels }
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Target [`kkt_residual`].
    pub tolerance: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0x5eed,
            max_iter: 200_000,
            tolerance: 1e-11,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub profile: TypeProfile,
    pub value: f64,
    /// Largest minus smallest converged value over all starts.
    pub spread: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub starts: usize,
}

struct Run {
    masses: Vec<Vec<f64>>,
    value: f64,
    kkt: f64,
    converged: bool,
    iterations: usize,
}

fn ascend(tree: &LevelTree, mut p: Vec<Vec<f64>>, opts: &OptimizeOptions) -> Result<Run> {
    let mut value = objective_raw(tree, &p)?;
    let mut step = 1.0;
    let mut kkt = f64::INFINITY;
    for it in 0..opts.max_iter {
        let g = gradient_raw(tree, &p)?;
        kkt = kkt_of(&p, &g);
        if kkt <= opts.tolerance {
            return Ok(Run {
                masses: p,
                value,
                kkt,
                converged: true,
                iterations: it,
            });
        }
        loop {
            let trial: Vec<Vec<f64>> = p
                .iter()
                .zip(&g)
                .map(|(p, g)| {
                    let mean: f64 = p.iter().zip(g).map(|(p, g)| p * g).sum();
                    let w: Vec<f64> = p
                        .iter()
                        .zip(g)
                        .map(|(p, g)| (p * (step * (g - mean)).exp()).max(1e-300))
                        .collect();
                    let total: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / total).collect()
                })
                .collect();
            let v = objective_raw(tree, &trial)?;
            if v >= value {
                let stalled = trial == p;
                p = trial;
                value = v;
                step = (step * 1.5).min(1e6);
                if stalled {
                    return Ok(Run {
                        masses: p,
                        value,
                        kkt,
                        converged: kkt <= opts.tolerance.sqrt(),
                        iterations: it,
                    });
                }
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return Ok(Run {
                    masses: p,
                    value,
                    kkt,
                    converged: kkt <= opts.tolerance.sqrt(),
                    iterations: it,
                });
            }
        }
    }
    Ok(Run {
        masses: p,
        value,
        kkt,
        converged: false,
        iterations: opts.max_iter,
    })
}

fn lex_cmp(a: &[Vec<f64>], b: &[Vec<f64>]) -> Ordering {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Multi-start exponentiated-gradient ascent of [`objective`]. The first
/// start is `start` (usually the closed-form dominant type); the others are
/// seeded random profiles.
pub fn maximize_objective(
    tree: &LevelTree,
    start: Option<&TypeProfile>,
    opts: &OptimizeOptions,
) -> Result<OptimizeReport> {
    let mut starts: Vec<Vec<Vec<f64>>> = Vec::with_capacity(opts.restarts + 1);
    match start {
        Some(p) => {
            p.check(tree)?;
            starts.push(p.masses());
        }
        None => starts.push(TypeProfile::uniform(tree).masses()),
    }
    for k in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
        starts.push(random_interior_profile(tree, &mut rng, 1e-3).masses());
    }
    let n_starts = starts.len();
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|p| ascend(tree, p, opts))
        .collect::<Result<_>>()?;
    let lo = runs.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let hi = runs
        .iter()
        .map(|r| r.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let best = runs
        .iter()
        .filter(|r| r.value >= hi - 1e-9)
        .min_by(|a, b| lex_cmp(&a.masses, &b.masses))
        .expect("at least one start");
    Ok(OptimizeReport {
        profile: TypeProfile::on_tree(tree, best.masses.clone())?,
        value: best.value,
        spread: hi - lo,
        kkt_residual: best.kkt,
        converged: best.converged,
        iterations: best.iterations,
        starts: n_starts,
    })
}
