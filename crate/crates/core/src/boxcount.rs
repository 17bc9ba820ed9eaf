//! Exact symbolic box counting by enumeration of delta-approximate cubes.
//!
//! A cube is the sequence of symbols read until every coordinate's product of
//! ratios has dropped to `delta`. While a set `M` of coordinates is still
//! unresolved, each symbol is projected onto `M`; cubes are therefore words
//! over a changing alphabet, one alphabet per coordinate mask.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{project_alphabet, validate, SpongeSpec};
use crate::moran::{dimension_profile, solve_tree, PermutationBudget};
use crate::number::Scalar;
use crate::tree::LevelTree;
use crate::type_counting::{entropy_bounds, ln_big, LevelType, Stopper};
use crate::variational::{dominant_type, stopping_constants, TypeProfile};

/// Largest dimension the counter accepts (coordinate masks are `u32`).
pub const MAX_COUNT_DIMENSION: usize = 16;

pub const DEFAULT_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    SelfSimilar,
    GatzourasLalley,
    Baranski,
}

/// Symbols available while the coordinates in one mask are unresolved.
#[derive(Debug, Clone)]
pub struct Alphabet {
    /// Unresolved coordinates, 1-based and increasing.
    pub axes: Vec<usize>,
    pub keys: Vec<Vec<usize>>,
    /// `ratio_index[k][j]`: index of the ratio of `keys[k]` along `axes[j]`
    /// in the list of that axis' ratios.
    pub(crate) ratio_index: Vec<Vec<usize>>,
}

impl Alphabet {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn position(&self, key: &[usize]) -> Option<usize> {
        self.keys.binary_search_by(|k| k.as_slice().cmp(key)).ok()
    }
}

/// A sponge reduced to what box counting needs.
#[derive(Debug, Clone)]
pub struct SymbolicSystem {
    kind: SystemKind,
    dimension: usize,
    alphabets: BTreeMap<u32, Alphabet>,
    axis_ratios: Vec<Vec<Scalar>>,
}

fn mask_of(axes: &[usize]) -> u32 {
    axes.iter().fold(0, |m, a| m | (1 << (a - 1)))
}

fn axes_of(mask: u32) -> Vec<usize> {
    (0..32)
        .filter(|b| mask >> b & 1 == 1)
        .map(|b| b + 1)
        .collect()
}

fn full_mask(d: usize) -> u32 {
    ((1u64 << d) - 1) as u32
}

fn index_of(list: &mut Vec<Scalar>, r: Scalar) -> usize {
    match list.iter().position(|x| *x == r) {
        Some(i) => i,
        None => {
            list.push(r);
            list.len() - 1
        }
    }
}

impl SymbolicSystem {
    pub fn new(spec: &SpongeSpec) -> Result<Self> {
        validate(spec).into_result()?;
        let d = spec.dimension();
        if d > MAX_COUNT_DIMENSION {
            return Err(Error::Unsupported {
                operation: "box counting",
                expected: "dimension at most 16",
                found: d.to_string(),
            });
        }
        let mut alphabets = BTreeMap::new();
        let mut axis_ratios: Vec<Vec<Scalar>> = vec![Vec::new(); d];
        match spec {
            SpongeSpec::SelfSimilar(s) => {
                let mut keys = Vec::new();
                let mut ratio_index = Vec::new();
                for (i, r) in s.ratios.iter().enumerate() {
                    keys.push(vec![i + 1]);
                    ratio_index.push(vec![index_of(&mut axis_ratios[0], *r)]);
                }
                alphabets.insert(
                    1,
                    Alphabet {
                        axes: vec![1],
                        keys,
                        ratio_index,
                    },
                );
            }
            SpongeSpec::GatzourasLalley(gl) => {
                let tree = LevelTree::from_gl(gl)?;
                // per level: ratio index of each key along its own coordinate
                let mut own: Vec<Vec<usize>> = Vec::with_capacity(d);
                for (n, level) in tree.levels().iter().enumerate() {
                    own.push(
                        level
                            .ratio
                            .iter()
                            .map(|r| index_of(&mut axis_ratios[n], *r))
                            .collect(),
                    );
                }
                for m in 1..=d {
                    let level = tree.level(m);
                    let ratio_index = (0..level.len())
                        .map(|k| {
                            let mut chain = vec![0; m];
                            let mut at = k;
                            for l in (1..=m).rev() {
                                chain[l - 1] = own[l - 1][at];
                                at = tree.level(l).parent[at];
                            }
                            chain
                        })
                        .collect();
                    alphabets.insert(
                        full_mask(m),
                        Alphabet {
                            axes: (1..=m).collect(),
                            keys: level.keys.clone(),
                            ratio_index,
                        },
                    );
                }
            }
            SpongeSpec::Baranski(b) => {
                axis_ratios = b.axes.clone();
                for mask in 1..=full_mask(d) {
                    let axes = axes_of(mask);
                    let keys = project_alphabet(&b.alphabet, &axes)?;
                    let ratio_index = keys
                        .iter()
                        .map(|k| k.iter().map(|&s| s - 1).collect())
                        .collect();
                    alphabets.insert(
                        mask,
                        Alphabet {
                            axes,
                            keys,
                            ratio_index,
                        },
                    );
                }
            }
        }
        Ok(Self {
            kind: match spec {
                SpongeSpec::SelfSimilar(_) => SystemKind::SelfSimilar,
                SpongeSpec::GatzourasLalley(_) => SystemKind::GatzourasLalley,
                SpongeSpec::Baranski(_) => SystemKind::Baranski,
            },
            dimension: d,
            alphabets,
            axis_ratios,
        })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Alphabet for the unresolved coordinates `axes` (1-based).
    pub fn alphabet(&self, axes: &[usize]) -> Option<&Alphabet> {
        self.alphabets.get(&mask_of(axes))
    }

    /// One stopper per axis at scale `delta`.
    pub fn stoppers(&self, delta: &Scalar) -> Result<Vec<Stopper>> {
        self.axis_ratios
            .iter()
            .map(|r| Stopper::new(r, delta))
            .collect()
    }
}

/// Stage block of a cube: the symbols read while `axes` were unresolved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeBlock {
    pub axes: Vec<usize>,
    pub symbols: Vec<Vec<usize>>,
}

/// One delta-approximate cube. `blocks` are in stage order: the first block
/// projects onto all coordinates, the last onto `sigma_1` alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub blocks: Vec<CubeBlock>,
    /// `L_delta(., a)` for axes `a = 1..=d`.
    pub stoppings: Vec<usize>,
    pub sigma: Vec<usize>,
    pub tie: bool,
}

/// Orders coordinates by decreasing stopping; equal stoppings keep increasing
/// axis order and set the tie flag.
pub fn sigma_order(stoppings: &[usize]) -> (Vec<usize>, bool) {
    let mut sigma: Vec<usize> = (1..=stoppings.len()).collect();
    sigma.sort_by(|&a, &b| stoppings[b - 1].cmp(&stoppings[a - 1]).then(a.cmp(&b)));
    let mut sorted = stoppings.to_vec();
    sorted.sort_unstable();
    let tie = sorted.windows(2).any(|w| w[0] == w[1]);
    (sigma, tie)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMethod {
    /// Memoized recursion when every axis is exact and no histogram is asked
    /// for, enumeration otherwise.
    Auto,
    Memoized,
    Enumerate,
}

#[derive(Debug, Clone, Copy)]
pub struct CountOptions {
    pub budget: u64,
    pub types: bool,
    pub method: CountMethod,
}

impl Default for CountOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            types: false,
            method: CountMethod::Auto,
        }
    }
}

mod big_string {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaCount {
    pub sigma: Vec<usize>,
    pub tie: bool,
    #[serde(with = "big_string")]
    pub count: BigUint,
}

/// A type class: per stage block, symbol counts over that block's alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCount {
    pub sigma: Vec<usize>,
    pub blocks: Vec<Vec<u64>>,
    #[serde(with = "big_string")]
    pub count: BigUint,
}

impl TypeCount {
    pub fn block_lengths(&self) -> Vec<u64> {
        self.blocks.iter().map(|b| b.iter().sum()).collect()
    }

    /// The class as a [`TypeProfile`] on `tree`, which must be the level tree
    /// for `sigma`. `None` when a block is empty.
    pub fn to_profile(&self, tree: &LevelTree) -> Option<TypeProfile> {
        if self.blocks.iter().any(|b| b.iter().sum::<u64>() == 0) {
            return None;
        }
        let masses = self
            .blocks
            .iter()
            .rev()
            .map(|b| LevelType::new(b.clone()).frequencies())
            .collect();
        TypeProfile::on_tree(tree, masses).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub delta: Scalar,
    #[serde(with = "big_string")]
    pub total: BigUint,
    pub per_sigma: Vec<SigmaCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_type: Option<Vec<TypeCount>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant_type: Option<TypeCount>,
    #[serde(with = "big_string")]
    pub ties: BigUint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinct_types: Option<usize>,
}

impl CountReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

// ---------------------------------------------------------------------------
// engine

#[derive(Clone, Copy)]
struct State {
    mask: u32,
    exact: [u64; MAX_COUNT_DIMENSION],
    float: [f64; MAX_COUNT_DIMENSION],
}

struct PreparedAlphabet {
    axes: Vec<usize>,
    exps: Vec<Vec<u64>>,
    neg_logs: Vec<Vec<f64>>,
}

struct Engine<'a> {
    sys: &'a SymbolicSystem,
    d: usize,
    alph: HashMap<u32, PreparedAlphabet>,
    exact: Vec<bool>,
    thresholds: Vec<u64>,
    targets: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(sys: &'a SymbolicSystem, delta: &Scalar) -> Result<Self> {
        let stoppers = sys.stoppers(delta)?;
        let mut alph = HashMap::new();
        for (&mask, a) in &sys.alphabets {
            let axes: Vec<usize> = a.axes.iter().map(|x| x - 1).collect();
            let exps = a
                .ratio_index
                .iter()
                .map(|ri| {
                    ri.iter()
                        .zip(&axes)
                        .map(|(&i, &ax)| stoppers[ax].exponent(i).unwrap_or(0))
                        .collect()
                })
                .collect();
            let neg_logs = a
                .ratio_index
                .iter()
                .map(|ri| {
                    ri.iter()
                        .zip(&axes)
                        .map(|(&i, &ax)| stoppers[ax].neg_log(i))
                        .collect()
                })
                .collect();
            alph.insert(
                mask,
                PreparedAlphabet {
                    axes,
                    exps,
                    neg_logs,
                },
            );
        }
        Ok(Self {
            sys,
            d: sys.dimension,
            alph,
            exact: stoppers.iter().map(Stopper::is_exact).collect(),
            thresholds: stoppers
                .iter()
                .map(|s| s.threshold().unwrap_or(0))
                .collect(),
            targets: stoppers.iter().map(|_| -delta.ln()).collect(),
        })
    }

    fn all_exact(&self) -> bool {
        self.exact.iter().all(|&e| e)
    }

    fn root(&self) -> State {
        State {
            mask: full_mask(self.d),
            exact: [0; MAX_COUNT_DIMENSION],
            float: [0.0; MAX_COUNT_DIMENSION],
        }
    }

    fn prepared(&self, mask: u32) -> Result<&PreparedAlphabet> {
        self.alph.get(&mask).ok_or_else(|| {
            Error::MalformedCube(format!(
                "no alphabet for unresolved coordinates {:?}",
                axes_of(mask)
            ))
        })
    }

    /// Reads symbol `sym`; returns the set of coordinates that stop here.
    fn advance(&self, st: &mut State, a: &PreparedAlphabet, sym: usize) -> u32 {
        let mut crossed = 0;
        for (j, &ax) in a.axes.iter().enumerate() {
            st.float[ax] += a.neg_logs[sym][j];
            let hit = if self.exact[ax] {
                st.exact[ax] += a.exps[sym][j];
                st.exact[ax] >= self.thresholds[ax]
            } else {
                st.float[ax] >= self.targets[ax] - crate::LOG_TOLERANCE
            };
            if hit {
                crossed |= 1 << ax;
            }
        }
        crossed
    }

    fn alphabet_len(&self, mask: u32) -> usize {
        self.sys.alphabets.get(&mask).map_or(0, Alphabet::len)
    }
}

fn sigma_from_events(events: &[(u32, usize)]) -> (Vec<usize>, bool) {
    let mut sigma = Vec::new();
    let mut tie = false;
    for &(e, _) in events.iter().rev() {
        let axes = axes_of(e);
        tie |= axes.len() > 1;
        sigma.extend(axes);
    }
    (sigma, tie)
}

fn encode_sigma(sigma: &[usize]) -> u64 {
    sigma.iter().fold(0, |acc, &a| acc << 4 | (a as u64 - 1))
}

fn decode_sigma(code: u64, d: usize) -> Vec<usize> {
    (0..d)
        .rev()
        .map(|k| ((code >> (4 * k)) & 15) as usize + 1)
        .collect()
}

/// Stage masks for `sigma`: all axes, then without `sigma_d`, and so on.
fn stage_masks(sigma: &[usize]) -> Vec<u32> {
    let d = sigma.len();
    (0..d).map(|k| mask_of(&sigma[..d - k])).collect()
}

trait Sink {
    fn leaf(&mut self, path: &[(u32, u32)], events: &[(u32, usize)]) -> Result<()>;
}

#[derive(Default)]
struct Tally {
    total: u64,
    ties: u64,
    per_sigma: HashMap<(u64, bool), u64>,
    per_type: HashMap<Vec<u32>, u64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.total += other.total;
        self.ties += other.ties;
        for (k, v) in other.per_sigma {
            *self.per_sigma.entry(k).or_default() += v;
        }
        for (k, v) in other.per_type {
            *self.per_type.entry(k).or_default() += v;
        }
        self
    }
}

struct TallySink<'e, 'a> {
    engine: &'e Engine<'a>,
    tally: Tally,
    types: bool,
    seen: &'e AtomicU64,
    budget: u64,
    scratch: Vec<u32>,
}

impl Sink for TallySink<'_, '_> {
    fn leaf(&mut self, path: &[(u32, u32)], events: &[(u32, usize)]) -> Result<()> {
        let n = self.seen.fetch_add(1, Ordering::Relaxed) + 1;
        if n > self.budget {
            return Err(Error::BudgetExceeded {
                partial: BigUint::from(self.budget),
                budget: self.budget,
            });
        }
        let (sigma, tie) = sigma_from_events(events);
        self.tally.total += 1;
        if tie {
            self.tally.ties += 1;
        }
        *self
            .tally
            .per_sigma
            .entry((encode_sigma(&sigma), tie))
            .or_default() += 1;
        if self.types {
            let masks = stage_masks(&sigma);
            self.scratch.clear();
            self.scratch.extend(sigma.iter().map(|&a| a as u32));
            let mut offsets = Vec::with_capacity(masks.len());
            for &m in &masks {
                offsets.push((m, self.scratch.len()));
                let len = self.engine.alphabet_len(m);
                self.scratch.extend(std::iter::repeat_n(0, len));
            }
            for &(m, s) in path {
                let off = offsets
                    .iter()
                    .find(|(mm, _)| *mm == m)
                    .map(|(_, o)| *o)
                    .expect("path masks are stage masks");
                self.scratch[off + s as usize] += 1;
            }
            match self.tally.per_type.get_mut(self.scratch.as_slice()) {
                Some(c) => *c += 1,
                None => {
                    self.tally.per_type.insert(self.scratch.clone(), 1);
                }
            }
        }
        Ok(())
    }
}

struct RecordSink<'e, 'a, F> {
    engine: &'e Engine<'a>,
    f: F,
    seen: u64,
    budget: u64,
}

impl<F: FnMut(&CubeRecord)> Sink for RecordSink<'_, '_, F> {
    fn leaf(&mut self, path: &[(u32, u32)], events: &[(u32, usize)]) -> Result<()> {
        self.seen += 1;
        if self.seen > self.budget {
            return Err(Error::BudgetExceeded {
                partial: BigUint::from(self.budget),
                budget: self.budget,
            });
        }
        let (sigma, tie) = sigma_from_events(events);
        let d = self.engine.d;
        let mut stoppings = vec![0; d];
        for &(e, at) in events {
            for a in axes_of(e) {
                stoppings[a - 1] = at;
            }
        }
        let blocks = stage_masks(&sigma)
            .into_iter()
            .map(|m| {
                let alphabet = &self.engine.sys.alphabets[&m];
                CubeBlock {
                    axes: alphabet.axes.clone(),
                    symbols: path
                        .iter()
                        .filter(|(pm, _)| *pm == m)
                        .map(|&(_, s)| alphabet.keys[s as usize].clone())
                        .collect(),
                }
            })
            .collect();
        (self.f)(&CubeRecord {
            blocks,
            stoppings,
            sigma,
            tie,
        });
        Ok(())
    }
}

#[derive(Clone)]
struct Node {
    state: State,
    path: Vec<(u32, u32)>,
    events: Vec<(u32, usize)>,
}

impl Engine<'_> {
    fn dfs<S: Sink>(
        &self,
        st: &State,
        path: &mut Vec<(u32, u32)>,
        events: &mut Vec<(u32, usize)>,
        sink: &mut S,
    ) -> Result<()> {
        let a = self.prepared(st.mask)?;
        for sym in 0..a.exps.len() {
            let mut next = *st;
            let crossed = self.advance(&mut next, a, sym);
            path.push((st.mask, sym as u32));
            if crossed == 0 {
                self.dfs(&next, path, events, sink)?;
            } else {
                events.push((crossed, path.len()));
                next.mask &= !crossed;
                if next.mask == 0 {
                    sink.leaf(path, events)?;
                } else {
                    self.dfs(&next, path, events, sink)?;
                }
                events.pop();
            }
            path.pop();
        }
        Ok(())
    }

    /// Expands the root breadth-first until there are at least `want`
    /// pending subtrees; leaves met on the way go to `sink`.
    fn frontier<S: Sink>(&self, want: usize, sink: &mut S) -> Result<Vec<Node>> {
        let mut level = vec![Node {
            state: self.root(),
            path: Vec::new(),
            events: Vec::new(),
        }];
        while !level.is_empty() && level.len() < want {
            let mut next_level = Vec::new();
            for node in level {
                let a = self.prepared(node.state.mask)?;
                for sym in 0..a.exps.len() {
                    let mut child = node.clone();
                    let crossed = self.advance(&mut child.state, a, sym);
                    child.path.push((node.state.mask, sym as u32));
                    if crossed != 0 {
                        child.events.push((crossed, child.path.len()));
                        child.state.mask &= !crossed;
                        if child.state.mask == 0 {
                            sink.leaf(&child.path, &child.events)?;
                            continue;
                        }
                    }
                    next_level.push(child);
                }
            }
            level = next_level;
        }
        Ok(level)
    }

    fn enumerate(&self, types: bool, budget: u64) -> Result<Tally> {
        let seen = AtomicU64::new(0);
        let mut head = TallySink {
            engine: self,
            tally: Tally::default(),
            types,
            seen: &seen,
            budget,
            scratch: Vec::new(),
        };
        let nodes = self.frontier(4 * rayon::current_num_threads().max(1) * 8, &mut head)?;
        let head = head.tally;
        let rest = nodes
            .into_par_iter()
            .map(|mut node| {
                let mut sink = TallySink {
                    engine: self,
                    tally: Tally::default(),
                    types,
                    seen: &seen,
                    budget,
                    scratch: Vec::new(),
                };
                self.dfs(&node.state, &mut node.path, &mut node.events, &mut sink)?;
                Ok(sink.tally)
            })
            .try_reduce(Tally::default, |a, b| Ok(a.merge(b)));
        match rest {
            Ok(t) => Ok(head.merge(t)),
            Err(Error::BudgetExceeded { budget, .. }) => Err(Error::BudgetExceeded {
                partial: BigUint::from(seen.load(Ordering::Relaxed).min(budget)),
                budget,
            }),
            Err(e) => Err(e),
        }
    }
}

type EventCounts = Rc<BTreeMap<Vec<u32>, BigUint>>;

struct Memo<'e, 'a> {
    engine: &'e Engine<'a>,
    table: HashMap<(u32, [u64; MAX_COUNT_DIMENSION]), EventCounts>,
    budget: u64,
}

impl Memo<'_, '_> {
    /// Number of completions from `st`, keyed by the sequence of stopping
    /// events still to come.
    fn count(&mut self, st: &State) -> Result<EventCounts> {
        let key = (st.mask, st.exact);
        if let Some(v) = self.table.get(&key) {
            return Ok(v.clone());
        }
        if self.table.len() as u64 >= self.budget {
            return Err(Error::BudgetExceeded {
                partial: BigUint::zero(),
                budget: self.budget,
            });
        }
        let engine = self.engine;
        let a = engine.prepared(st.mask)?;
        let mut out: BTreeMap<Vec<u32>, BigUint> = BTreeMap::new();
        for sym in 0..a.exps.len() {
            let mut next = *st;
            let crossed = engine.advance(&mut next, a, sym);
            next.float = [0.0; MAX_COUNT_DIMENSION];
            if crossed == 0 {
                for (k, v) in self.count(&next)?.iter() {
                    *out.entry(k.clone()).or_default() += v;
                }
                continue;
            }
            next.mask &= !crossed;
            for b in 0..engine.d {
                if next.mask >> b & 1 == 0 {
                    next.exact[b] = 0;
                }
            }
            if next.mask == 0 {
                *out.entry(vec![crossed]).or_default() += 1u32;
            } else {
                for (k, v) in self.count(&next)?.iter() {
                    let mut seq = Vec::with_capacity(k.len() + 1);
                    seq.push(crossed);
                    seq.extend_from_slice(k);
                    *out.entry(seq).or_default() += v;
                }
            }
        }
        let out = Rc::new(out);
        self.table.insert(key, out.clone());
        Ok(out)
    }
}

fn sigma_of_masks(events: &[u32]) -> (Vec<usize>, bool) {
    let pairs: Vec<(u32, usize)> = events.iter().map(|&e| (e, 0)).collect();
    sigma_from_events(&pairs)
}

type SigmaTable = BTreeMap<(Vec<usize>, bool), BigUint>;

fn memoized(engine: &Engine, budget: u64) -> Result<(BigUint, SigmaTable)> {
    let mut memo = Memo {
        engine,
        table: HashMap::new(),
        budget,
    };
    let counts = memo.count(&engine.root())?;
    let mut total = BigUint::zero();
    let mut per_sigma: BTreeMap<(Vec<usize>, bool), BigUint> = BTreeMap::new();
    for (events, c) in counts.iter() {
        total += c;
        *per_sigma.entry(sigma_of_masks(events)).or_default() += c;
    }
    Ok((total, per_sigma))
}

fn decode_type(sys: &SymbolicSystem, key: &[u32], count: u64) -> TypeCount {
    let d = sys.dimension;
    let sigma: Vec<usize> = key[..d].iter().map(|&a| a as usize).collect();
    let mut at = d;
    let blocks = stage_masks(&sigma)
        .into_iter()
        .map(|m| {
            let len = sys.alphabets.get(&m).map_or(0, Alphabet::len);
            let b = key[at..at + len].iter().map(|&c| c as u64).collect();
            at += len;
            b
        })
        .collect();
    TypeCount {
        sigma,
        blocks,
        count: BigUint::from(count),
    }
}

fn type_order(a: &TypeCount, b: &TypeCount) -> std::cmp::Ordering {
    a.sigma.cmp(&b.sigma).then_with(|| a.blocks.cmp(&b.blocks))
}

/// Exact number of delta-approximate cubes, with per-ordering counts and an
/// optional type histogram.
pub fn count_cubes(spec: &SpongeSpec, delta: &Scalar, opts: &CountOptions) -> Result<CountReport> {
    let sys = SymbolicSystem::new(spec)?;
    count_system(&sys, delta, opts)
}

pub fn count_system(
    sys: &SymbolicSystem,
    delta: &Scalar,
    opts: &CountOptions,
) -> Result<CountReport> {
    let engine = Engine::new(sys, delta)?;
    let memo_ok = engine.all_exact() && !opts.types;
    let use_memo = match opts.method {
        CountMethod::Auto => memo_ok,
        CountMethod::Memoized => {
            if !memo_ok {
                return Err(Error::Unsupported {
                    operation: "memoized counting",
                    expected: "lattice ratios and no type histogram",
                    found: "floating ratios or a histogram request".into(),
                });
            }
            true
        }
        CountMethod::Enumerate => false,
    };
    if use_memo {
        let (total, per_sigma) = memoized(&engine, opts.budget)?;
        let ties = per_sigma
            .iter()
            .filter(|((_, tie), _)| *tie)
            .map(|(_, c)| c.clone())
            .sum();
        return Ok(CountReport {
            delta: *delta,
            total,
            per_sigma: per_sigma
                .into_iter()
                .map(|((sigma, tie), count)| SigmaCount { sigma, tie, count })
                .collect(),
            per_type: None,
            dominant_type: None,
            ties,
            distinct_types: None,
        });
    }
    if engine.all_exact() {
        // refuse up front instead of enumerating past the budget
        let (total, _) = memoized(&engine, opts.budget)?;
        if total > BigUint::from(opts.budget) {
            return Err(Error::BudgetExceeded {
                partial: total,
                budget: opts.budget,
            });
        }
    }
    let tally = engine.enumerate(opts.types, opts.budget)?;
    let mut per_sigma: Vec<SigmaCount> = tally
        .per_sigma
        .iter()
        .map(|(&(code, tie), &c)| SigmaCount {
            sigma: decode_sigma(code, sys.dimension),
            tie,
            count: BigUint::from(c),
        })
        .collect();
    per_sigma.sort_by(|a, b| (&a.sigma, a.tie).cmp(&(&b.sigma, b.tie)));
    let (per_type, dominant, distinct) = if opts.types {
        let mut types: Vec<TypeCount> = tally
            .per_type
            .iter()
            .map(|(k, &c)| decode_type(sys, k, c))
            .collect();
        types.sort_by(type_order);
        let dominant = types
            .iter()
            .max_by(|a, b| a.count.cmp(&b.count).then_with(|| type_order(b, a)))
            .cloned();
        let n = types.len();
        (Some(types), dominant, Some(n))
    } else {
        (None, None, None)
    };
    Ok(CountReport {
        delta: *delta,
        total: BigUint::from(tally.total),
        per_sigma,
        per_type,
        dominant_type: dominant,
        ties: BigUint::from(tally.ties),
        distinct_types: distinct,
    })
}

/// Streams every cube, sequentially and in depth-first order, to `f`.
pub fn for_each_cube<F: FnMut(&CubeRecord)>(
    sys: &SymbolicSystem,
    delta: &Scalar,
    budget: u64,
    f: F,
) -> Result<u64> {
    let engine = Engine::new(sys, delta)?;
    let mut sink = RecordSink {
        engine: &engine,
        f,
        seen: 0,
        budget,
    };
    engine.dfs(&engine.root(), &mut Vec::new(), &mut Vec::new(), &mut sink)?;
    Ok(sink.seen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub delta: Scalar,
    #[serde(with = "big_string")]
    pub count: BigUint,
    pub log_count: f64,
    pub neg_log_delta: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalFit {
    pub slope: f64,
    pub intercept: f64,
    pub table: Vec<ScaleRow>,
    /// Largest `|ratio - slope|` over the table.
    pub residual: f64,
}

/// Least-squares slope of `ln N_delta` against `-ln delta`.
pub fn empirical_dimension(
    spec: &SpongeSpec,
    deltas: &[Scalar],
    budget: u64,
) -> Result<EmpiricalFit> {
    if deltas.len() < 3 {
        return Err(Error::TooFewScales {
            needed: 3,
            found: deltas.len(),
        });
    }
    let sys = SymbolicSystem::new(spec)?;
    let opts = CountOptions {
        budget,
        ..CountOptions::default()
    };
    let table = deltas
        .iter()
        .map(|delta| {
            let count = count_system(&sys, delta, &opts)?.total;
            let log_count = ln_big(&count);
            let neg_log_delta = -delta.ln();
            Ok(ScaleRow {
                delta: *delta,
                log_count,
                neg_log_delta,
                ratio: log_count / neg_log_delta,
                count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = table.len() as f64;
    let mx = table.iter().map(|r| r.neg_log_delta).sum::<f64>() / n;
    let my = table.iter().map(|r| r.log_count).sum::<f64>() / n;
    let sxy: f64 = table
        .iter()
        .map(|r| (r.neg_log_delta - mx) * (r.log_count - my))
        .sum();
    let sxx: f64 = table.iter().map(|r| (r.neg_log_delta - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let residual = table
        .iter()
        .map(|r| (r.ratio - slope).abs())
        .fold(0.0, f64::max);
    Ok(EmpiricalFit {
        slope,
        intercept: my - slope * mx,
        table,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantReport {
    pub delta: Scalar,
    #[serde(with = "big_string")]
    pub total: BigUint,
    pub dominant: TypeCount,
    pub distinct_types: usize,
    /// `#T* <= N <= #T* * #types`.
    pub sandwich: bool,
    /// `prod_n (l_n + 1)^{#I_n} * max l_n` with the largest block lengths,
    /// summed over orderings.
    #[serde(with = "big_string")]
    pub type_bound: BigUint,
    pub type_bound_holds: bool,
    /// `ln #T*`.
    pub log_count: f64,
    /// `ln #T* / -ln delta`.
    pub ratio: f64,
    /// Box dimension from the closed form.
    pub dimension: f64,
    /// `sum_n C_n(P) H(p_n)` at the dominant type, when no block is empty.
    pub exponent: Option<f64>,
    /// `ln` of both sides of `delta^{-E} (-ln delta)^{-sum #I_n} <= #T* <= delta^{-E}`.
    pub scale_bounds: Option<(f64, f64)>,
    pub scale_bounds_hold: Option<bool>,
    /// `ln` of both sides of `prod (l_n+1)^{-#I_n} e^{l_n H_n} <= #T* <= prod e^{l_n H_n}`.
    pub block_bounds: (f64, f64),
    pub block_bounds_hold: bool,
    /// Sup-norm distance from the dominant type to the closed-form maximizer.
    pub distance_to_optimum: Option<f64>,
}

/// Histogram argmax at scale `delta`, compared with the closed-form
/// dominant type.
pub fn dominant_class_report(
    spec: &SpongeSpec,
    delta: &Scalar,
    budget: u64,
) -> Result<DominantReport> {
    let sys = SymbolicSystem::new(spec)?;
    let report = count_system(
        &sys,
        delta,
        &CountOptions {
            budget,
            types: true,
            method: CountMethod::Enumerate,
        },
    )?;
    let types = report.per_type.as_ref().expect("histogram requested");
    let dominant = report.dominant_type.clone().expect("at least one cube");
    let distinct = types.len();
    let total = report.total.clone();
    let sandwich = dominant.count <= total && total <= &dominant.count * BigUint::from(distinct);

    let mut by_sigma: BTreeMap<Vec<usize>, Vec<u64>> = BTreeMap::new();
    for t in types {
        let lens = t.block_lengths();
        let max = by_sigma
            .entry(t.sigma.clone())
            .or_insert(vec![0; lens.len()]);
        for (m, l) in max.iter_mut().zip(lens) {
            *m = (*m).max(l);
        }
    }
    let mut type_bound = BigUint::zero();
    for (sigma, lens) in &by_sigma {
        let mut b = BigUint::one();
        for (m, l) in stage_masks(sigma).into_iter().zip(lens) {
            let size = sys.alphabets.get(&m).map_or(0, Alphabet::len);
            b *= BigUint::from(l + 1).pow(size as u32);
        }
        b *= lens.iter().copied().max().unwrap_or(0);
        type_bound += b;
    }
    let type_bound_holds = BigUint::from(distinct) <= type_bound;

    let log_count = ln_big(&dominant.count);
    let neg_log_delta = -delta.ln();
    let tol = 1e-9;
    let mut upper = 0.0;
    let mut lower = 0.0;
    for b in &dominant.blocks {
        let t = LevelType::new(b.clone());
        if t.n > 0 {
            let eb = entropy_bounds(&t);
            upper += eb.upper.ln();
            lower += eb.lower.ln();
        }
    }
    let block_bounds_hold = log_count <= upper + tol && log_count >= lower - tol;

    let tree = match spec {
        SpongeSpec::Baranski(b) => LevelTree::from_baranski(b, &dominant.sigma)?,
        other => LevelTree::from_spec(other)?,
    };
    let profile = dominant.to_profile(&tree);
    let exponent = match &profile {
        Some(p) => {
            let c = stopping_constants(&tree, p)?;
            Some(
                c.iter()
                    .zip(p.levels())
                    .map(|(c, b)| c * crate::variational::entropy(b))
                    .sum::<f64>(),
            )
        }
        None => None,
    };
    let sizes: usize = tree.sizes().iter().sum();
    let scale_bounds = exponent.map(|e| {
        (
            e * neg_log_delta - sizes as f64 * neg_log_delta.ln(),
            e * neg_log_delta,
        )
    });
    let scale_bounds_hold =
        scale_bounds.map(|(lo, hi)| log_count >= lo - tol && log_count <= hi + tol);
    let optimum = dominant_type(&tree, &solve_tree(&tree))?;
    let distance_to_optimum = profile.as_ref().map(|p| p.sup_distance(&optimum));
    let dimension = dimension_profile(spec, PermutationBudget::default())?.box_dimension();
    Ok(DominantReport {
        delta: *delta,
        total,
        distinct_types: distinct,
        sandwich,
        type_bound,
        type_bound_holds,
        log_count,
        ratio: log_count / neg_log_delta,
        dimension,
        exponent,
        scale_bounds,
        scale_bounds_hold,
        block_bounds: (lower, upper),
        block_bounds_hold,
        distance_to_optimum,
        dominant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    fn q(n: u64, d: u64) -> Scalar {
        Scalar::fraction(n, d)
    }

    fn total(spec: SpongeSpec, delta: Scalar, method: CountMethod) -> BigUint {
        count_cubes(
            &spec,
            &delta,
            &CountOptions {
                method,
                ..CountOptions::default()
            },
        )
        .unwrap()
        .total
    }

    #[test]
    fn gl_a_counts() {
        assert_eq!(
            total(gallery::gl_a().into(), q(1, 4), CountMethod::Auto),
            BigUint::from(6u32)
        );
        assert_eq!(
            total(gallery::gl_a().into(), q(1, 16), CountMethod::Auto),
            BigUint::from(36u32)
        );
        for k in 1..=5u32 {
            let delta = q(1, 4u64.pow(k));
            let a = total(gallery::gl_a().into(), delta, CountMethod::Memoized);
            let b = total(gallery::gl_a().into(), delta, CountMethod::Enumerate);
            assert_eq!(a, BigUint::from(6u32).pow(k));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn self_similar_counts() {
        let spec: SpongeSpec = gallery::self_similar(&[q(1, 2), q(1, 2)]).into();
        for k in 1..=10u32 {
            assert_eq!(
                total(spec.clone(), q(1, 2u64.pow(k)), CountMethod::Auto),
                BigUint::from(2u32).pow(k)
            );
        }
    }

    #[test]
    fn sigma_order_examples() {
        assert_eq!(sigma_order(&[2, 1]), (vec![1, 2], false));
        assert_eq!(sigma_order(&[3, 3]), (vec![1, 2], true));
        assert_eq!(sigma_order(&[1, 2, 3]), (vec![3, 2, 1], false));
    }

    #[test]
    fn records_have_consistent_blocks() {
        let sys = SymbolicSystem::new(&gallery::gl_a().into()).unwrap();
        let mut seen = Vec::new();
        let n = for_each_cube(&sys, &q(1, 16), 1000, |c| seen.push(c.clone())).unwrap();
        assert_eq!(n, 36);
        for c in &seen {
            assert_eq!(c.stoppings, vec![4, 2]);
            assert_eq!(c.sigma, vec![1, 2]);
            assert!(!c.tie);
            assert_eq!(c.blocks[0].symbols.len(), 2);
            assert_eq!(c.blocks[1].symbols.len(), 2);
        }
        seen.sort_by(|a, b| a.blocks.cmp(&b.blocks));
        seen.dedup();
        assert_eq!(seen.len(), 36);
    }

    #[test]
    fn baranski_orderings() {
        let sys = SymbolicSystem::new(&gallery::bar_a().into()).unwrap();
        let mut recs = Vec::new();
        for_each_cube(&sys, &q(1, 3), 100, |c| recs.push(c.clone())).unwrap();
        for r in &recs {
            assert_eq!(r.stoppings, vec![2, 1]);
            assert_eq!(r.sigma, vec![1, 2]);
        }
        // 3 full symbols then 2 x-symbols
        assert_eq!(recs.len(), 6);

        let report = count_cubes(
            &gallery::bar_gl_a().into(),
            &q(1, 256),
            &CountOptions::default(),
        )
        .unwrap();
        assert_eq!(report.total, BigUint::from(6u32).pow(4));
        for s in &report.per_sigma {
            assert!(s.tie || s.sigma == vec![1, 2]);
        }
    }

    #[test]
    fn histogram_and_budget() {
        let spec: SpongeSpec = gallery::gl_a().into();
        let report = count_cubes(
            &spec,
            &q(1, 4),
            &CountOptions {
                types: true,
                ..CountOptions::default()
            },
        )
        .unwrap();
        let types = report.per_type.as_ref().unwrap();
        assert_eq!(types.len(), 6);
        assert!(types.iter().all(|t| t.count == BigUint::one()));
        let dom = report.dominant_type.unwrap();
        assert_eq!(dom.blocks, vec![vec![0, 0, 1], vec![0, 1]]);

        let err = count_cubes(
            &spec,
            &q(1, 4096),
            &CountOptions {
                budget: 1000,
                method: CountMethod::Enumerate,
                ..CountOptions::default()
            },
        )
        .unwrap_err();
        match err {
            Error::BudgetExceeded { partial, budget } => {
                assert_eq!(budget, 1000);
                assert_eq!(partial, BigUint::from(46656u32));
            }
            e => panic!("{e}"),
        }

        let float = gallery::grid_sponge(
            &[Scalar::float(0.5), Scalar::float(0.25)],
            &[vec![1, 1], vec![2, 2], vec![2, 4]],
        );
        let err = count_cubes(
            &float.into(),
            &Scalar::float(0.25f64.powi(6)),
            &CountOptions {
                budget: 1000,
                ..CountOptions::default()
            },
        )
        .unwrap_err();
        match err {
            Error::BudgetExceeded { partial, .. } => assert_eq!(partial, BigUint::from(1000u32)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn report_round_trips() {
        let report = count_cubes(
            &gallery::gl_a().into(),
            &q(1, 16),
            &CountOptions {
                types: true,
                ..CountOptions::default()
            },
        )
        .unwrap();
        let json = report.to_json();
        let back: CountReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["total"], "36");
        assert_eq!(v["delta"], "1/16");
    }

    #[test]
    fn float_ratios_match_exact_ones() {
        let spec = gallery::grid_sponge(
            &[Scalar::float(0.5), Scalar::float(0.25)],
            &[vec![1, 1], vec![2, 2], vec![2, 4]],
        );
        for k in 1..=4u32 {
            let delta = Scalar::float(0.25f64.powi(k as i32));
            assert_eq!(
                total(spec.clone().into(), delta, CountMethod::Auto),
                BigUint::from(6u32).pow(k)
            );
        }
    }

    #[test]
    fn empirical_slope_is_exact_on_grid_scales() {
        let deltas: Vec<Scalar> = (1..=6).map(|k| q(1, 4u64.pow(k))).collect();
        let fit = empirical_dimension(&gallery::gl_a().into(), &deltas, DEFAULT_BUDGET).unwrap();
        assert!((fit.slope - 6f64.ln() / 4f64.ln()).abs() < 1e-12);
        let fit = empirical_dimension(&gallery::gl_u().into(), &deltas, DEFAULT_BUDGET).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!(
            empirical_dimension(&gallery::gl_u().into(), &deltas[..2], DEFAULT_BUDGET).is_err()
        );
    }

    #[test]
    fn dominant_class_examples() {
        let r =
            dominant_class_report(&gallery::gl_a().into(), &q(1, 4096), DEFAULT_BUDGET).unwrap();
        assert_eq!(r.total, BigUint::from(46656u32));
        assert_eq!(r.dominant.blocks, vec![vec![2, 2, 2], vec![3, 3]]);
        assert_eq!(r.dominant.count, BigUint::from(1800u32));
        assert!(r.sandwich && r.type_bound_holds && r.block_bounds_hold);
        assert_eq!(r.scale_bounds_hold, Some(true));
        assert!(r.distance_to_optimum.unwrap() < 1e-12);

        let ss: SpongeSpec = gallery::self_similar(&[q(1, 2), q(1, 2)]).into();
        let r = dominant_class_report(&ss, &q(1, 1024), DEFAULT_BUDGET).unwrap();
        assert_eq!(r.dominant.blocks, vec![vec![5, 5]]);
        assert_eq!(r.dominant.count, BigUint::from(252u32));
    }
}
