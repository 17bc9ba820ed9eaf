//! Method of types: empirical types of words, exact type-class sizes and
//! their entropy bounds, and delta-stoppings of symbol streams.

use num_bigint::BigUint;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use serde::Serialize;

use crate::boxcount::{sigma_order, CubeRecord, SymbolicSystem};
use crate::error::{Error, Result};
use crate::number::{Lattice, Scalar};
use crate::tree::LevelTree;
use crate::variational::TypeProfile;

/// Symbol counts of a word of length `n` over `1..=N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LevelType {
    pub n: u64,
    pub counts: Vec<u64>,
}

impl LevelType {
    pub fn new(counts: Vec<u64>) -> Self {
        Self {
            n: counts.iter().sum(),
            counts,
        }
    }

    pub fn alphabet(&self) -> usize {
        self.counts.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.n as f64)
            .collect()
    }

    /// Entropy of the frequencies, in nats.
    pub fn entropy(&self) -> f64 {
        let n = self.n as f64;
        -self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }
}

pub fn type_of(word: &[usize], alphabet: usize) -> Result<LevelType> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    let mut counts = vec![0u64; alphabet];
    for &s in word {
        if s == 0 || s > alphabet {
            return Err(Error::SymbolOutOfRange {
                symbol: s,
                alphabet,
            });
        }
        counts[s - 1] += 1;
    }
    Ok(LevelType::new(counts))
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Number of types of length `n` over `N` symbols, `C(n+N-1, N-1)`.
pub fn type_count(n: u64, alphabet: usize) -> BigUint {
    if alphabet == 0 {
        return BigUint::zero();
    }
    binomial(n + alphabet as u64 - 1, alphabet as u64 - 1)
}

/// Every composition of `n` into `N` parts, first count descending.
pub fn enumerate_types(n: u64, alphabet: usize, cap: u64) -> Result<Vec<LevelType>> {
    let total = type_count(n, alphabet);
    if total > BigUint::from(cap) {
        return Err(Error::TypeCap { count: total, cap });
    }
    let mut out = Vec::with_capacity(total.to_usize().unwrap_or(0));
    let mut counts = vec![0u64; alphabet];
    compositions(n, 0, &mut counts, &mut out);
    Ok(out)
}

fn compositions(rest: u64, at: usize, counts: &mut Vec<u64>, out: &mut Vec<LevelType>) {
    if at + 1 == counts.len() {
        counts[at] = rest;
        out.push(LevelType::new(counts.clone()));
        return;
    }
    for c in (0..=rest).rev() {
        counts[at] = c;
        compositions(rest - c, at + 1, counts, out);
    }
}

/// Exact multinomial `n! / prod counts!`.
pub fn type_class_size(t: &LevelType) -> BigUint {
    let mut acc = BigUint::one();
    let mut placed = 0u64;
    for &c in &t.counts {
        placed += c;
        acc *= binomial(placed, c);
    }
    acc
}

/// Natural logarithm of a big integer, accurate to about `1e-15` relative.
pub fn ln_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    let top: BigUint = x >> shift;
    top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// The entropy sandwich `(n+1)^{-N} e^{nH} <= #T_n(p) <= e^{nH}` evaluated
/// for one type.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyBounds {
    pub size: String,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Checks the sandwich with the exact size on one side and bounds rounded
/// outward on the other.
pub fn entropy_bounds(t: &LevelType) -> EntropyBounds {
    let size = type_class_size(t);
    let n_h = t.n as f64 * t.entropy();
    let poly = (t.alphabet() as f64) * ((t.n + 1) as f64).ln();
    let upper = n_h.exp();
    let lower = (n_h - poly).exp();
    let slack = 1e-12;
    let holds = if upper < 9e15 {
        let hi = BigUint::from_f64((upper * (1.0 + slack)).ceil()).unwrap_or_default();
        let lo = BigUint::from_f64((lower * (1.0 - slack)).floor()).unwrap_or_default();
        lo <= size && size <= hi
    } else {
        let ln = ln_big(&size);
        ln <= n_h * (1.0 + slack) + slack && ln >= (n_h - poly) * (1.0 - slack) - slack
    };
    EntropyBounds {
        size: size.to_string(),
        lower,
        upper,
        holds,
    }
}

/// Running state of one coordinate's product of ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Acc {
    pub exact: u64,
    pub float: f64,
}

#[derive(Debug, Clone)]
enum Mode {
    Exact { exps: Vec<u64>, threshold: u64 },
    Float { target: f64 },
}

/// Decides when `prod lambda(i_l)` first drops to `delta` for ratios drawn
/// from a fixed list. Exact integer arithmetic is used when all ratios are
/// powers of one base.
#[derive(Debug, Clone)]
pub struct Stopper {
    neg_logs: Vec<f64>,
    mode: Mode,
}

impl Stopper {
    pub fn new(ratios: &[Scalar], delta: &Scalar) -> Result<Self> {
        let dv = delta.value();
        if !(dv > 0.0 && dv < 1.0) {
            return Err(Error::ScaleOutOfRange(dv));
        }
        for r in ratios {
            if !(r.value() > 0.0 && r.value() < 1.0) {
                return Err(Error::RatioOutOfRange {
                    value: r.value(),
                    context: "stopping ratios".into(),
                });
            }
        }
        let mode = match Lattice::detect(ratios) {
            Some(l) => Mode::Exact {
                threshold: l.threshold(delta),
                exps: l.exponents,
            },
            None => Mode::Float {
                target: -delta.ln(),
            },
        };
        Ok(Self {
            neg_logs: ratios.iter().map(|r| -r.ln()).collect(),
            mode,
        })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, Mode::Exact { .. })
    }

    /// Lattice exponent of ratio `i` (0-based), when exact.
    pub fn exponent(&self, i: usize) -> Option<u64> {
        match &self.mode {
            Mode::Exact { exps, .. } => Some(exps[i]),
            Mode::Float { .. } => None,
        }
    }

    pub fn threshold(&self) -> Option<u64> {
        match &self.mode {
            Mode::Exact { threshold, .. } => Some(*threshold),
            Mode::Float { .. } => None,
        }
    }

    pub fn neg_log(&self, i: usize) -> f64 {
        self.neg_logs[i]
    }

    /// Adds ratio `i` (0-based) and reports whether the product is now `<= delta`.
    pub fn push(&self, acc: &mut Acc, i: usize) -> bool {
        acc.float += self.neg_logs[i];
        match &self.mode {
            Mode::Exact { exps, threshold } => {
                acc.exact += exps[i];
                acc.exact >= *threshold
            }
            Mode::Float { target } => acc.float >= target - crate::LOG_TOLERANCE,
        }
    }

    /// Stopping of a word whose symbols are 1-based indices into the ratios.
    pub fn stopping<I: IntoIterator<Item = usize>>(&self, word: I) -> Result<usize> {
        let mut acc = Acc::default();
        for (l, s) in word.into_iter().enumerate() {
            if s == 0 || s > self.neg_logs.len() {
                return Err(Error::SymbolOutOfRange {
                    symbol: s,
                    alphabet: self.neg_logs.len(),
                });
            }
            if self.push(&mut acc, s - 1) {
                return Ok(l + 1);
            }
        }
        Err(Error::WordExhausted)
    }
}

/// Smallest `L` with `prod_{l<=L} ratios[word_l - 1] <= delta`.
pub fn delta_stopping(ratios: &[Scalar], word: &[usize], delta: &Scalar) -> Result<usize> {
    Stopper::new(ratios, delta)?.stopping(word.iter().copied())
}

/// Empirical distribution of one stage block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeBlock {
    pub axes: Vec<usize>,
    pub support: Vec<Vec<usize>>,
    pub counts: LevelType,
    pub empty: bool,
}

/// Multidimensional type of a cube, blocks in stage order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubeType {
    pub sigma: Vec<usize>,
    pub blocks: Vec<TypeBlock>,
}

impl CubeType {
    /// Frequencies per block; empty blocks give zeros.
    pub fn frequencies(&self) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                if b.empty {
                    vec![0.0; b.counts.alphabet()]
                } else {
                    b.counts.frequencies()
                }
            })
            .collect()
    }

    /// The type as a profile on `tree` (the level tree of `sigma`), unless a
    /// block is empty.
    pub fn to_profile(&self, tree: &LevelTree) -> Option<TypeProfile> {
        if self.blocks.iter().any(|b| b.empty) {
            return None;
        }
        let masses = self
            .blocks
            .iter()
            .rev()
            .map(|b| b.counts.frequencies())
            .collect();
        TypeProfile::on_tree(tree, masses).ok()
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedCube(msg.into())
}

/// Tabulates each block of `cube` after re-deriving its stoppings at `delta`.
pub fn cube_type(cube: &CubeRecord, sys: &SymbolicSystem, delta: &Scalar) -> Result<CubeType> {
    let d = sys.dimension();
    if cube.stoppings.len() != d || cube.blocks.len() != d || cube.sigma.len() != d {
        return Err(malformed(format!(
            "expected {d} blocks, stoppings and ordering entries"
        )));
    }
    if sigma_order(&cube.stoppings) != (cube.sigma.clone(), cube.tie) {
        return Err(malformed("ordering does not match the stoppings"));
    }
    let stoppers = sys.stoppers(delta)?;
    let mut accs = vec![Acc::default(); d];
    let mut stopped = vec![0usize; d];
    let mut pos = 0usize;
    let mut blocks = Vec::with_capacity(d);
    for (k, block) in cube.blocks.iter().enumerate() {
        let mut axes = cube.sigma[..d - k].to_vec();
        axes.sort_unstable();
        if block.axes != axes {
            return Err(malformed(format!(
                "block {} has axes {:?}, expected {axes:?}",
                k + 1,
                block.axes
            )));
        }
        let top = cube.stoppings[cube.sigma[d - 1 - k] - 1];
        let below = if k == 0 {
            0
        } else {
            cube.stoppings[cube.sigma[d - k] - 1]
        };
        if block.symbols.len() != top - below {
            return Err(malformed(format!(
                "block {} has length {}",
                k + 1,
                block.symbols.len()
            )));
        }
        let alphabet = sys
            .alphabet(&axes)
            .ok_or_else(|| malformed(format!("no alphabet for axes {axes:?}")))?;
        let mut counts = vec![0u64; alphabet.len()];
        for sym in &block.symbols {
            let i = alphabet.position(sym).ok_or_else(|| {
                malformed(format!("symbol {sym:?} not in the alphabet of {axes:?}"))
            })?;
            counts[i] += 1;
            pos += 1;
            for (j, &a) in axes.iter().enumerate() {
                if stopped[a - 1] != 0 {
                    return Err(malformed(format!("axis {a} read after stopping")));
                }
                if stoppers[a - 1].push(&mut accs[a - 1], alphabet.ratio_index[i][j]) {
                    stopped[a - 1] = pos;
                }
            }
            // axes that stop inside this block must be the block's last one
            for &a in &axes {
                if stopped[a - 1] != 0 && stopped[a - 1] != cube.stoppings[a - 1] {
                    return Err(malformed(format!(
                        "axis {a} stops at {} but the record says {}",
                        stopped[a - 1],
                        cube.stoppings[a - 1]
                    )));
                }
            }
        }
        blocks.push(TypeBlock {
            axes,
            support: alphabet.keys.clone(),
            empty: block.symbols.is_empty(),
            counts: LevelType::new(counts),
        });
        // coordinates leaving after this block must have stopped
        let leaving = cube.sigma[d - 1 - k];
        if stopped[leaving - 1] != cube.stoppings[leaving - 1] {
            return Err(malformed(format!(
                "axis {leaving} has not stopped by position {pos}"
            )));
        }
    }
    Ok(CubeType {
        sigma: cube.sigma.clone(),
        blocks,
    })
}
