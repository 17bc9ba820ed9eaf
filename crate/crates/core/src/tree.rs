//! Nested index sets `I_1, ..., I_d` with per-coordinate contraction ratios.
//!
//! A GL sponge gives this structure directly through index prefixes. A
//! Baranski sponge gives one per coordinate ordering `sigma`: level `n` is the
//! alphabet projected onto `{sigma_1, ..., sigma_n}` and "coordinate `l`" of
//! the tree means axis `sigma_l`. A self-similar system is the `d = 1` case.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{validate, BaranskiSpec, GlSpec, SelfSimilarSpec, SpongeSpec};
use crate::number::Scalar;

#[derive(Debug, Clone)]
pub struct Level {
    /// Symbols of this level, sorted. GL: index prefixes. Baranski: projected
    /// tuples listed in increasing axis order.
    pub keys: Vec<Vec<usize>>,
    /// Position of each symbol's parent in the previous level.
    pub parent: Vec<usize>,
    /// `neg_log[i][l] = -ln` of the coordinate-`(l+1)` ratio of symbol `i`.
    pub neg_log: Vec<Vec<f64>>,
    /// Ratio of this level's own coordinate for each symbol.
    pub ratio: Vec<Scalar>,
}

impl Level {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct LevelTree {
    levels: Vec<Level>,
    /// Axis (1-based) carried by each tree coordinate.
    axes: Vec<usize>,
}

impl LevelTree {
    pub fn dimension(&self) -> usize {
        self.levels.len()
    }

    /// Level `n`, 1-based.
    pub fn level(&self, n: usize) -> &Level {
        &self.levels[n - 1]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// The coordinate ordering: tree coordinate `l` is axis `axes()[l-1]`.
    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    /// Level sizes `#I_1, ..., #I_d`.
    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Level::len).collect()
    }

    pub fn from_self_similar(spec: &SelfSimilarSpec) -> Result<Self> {
        validate(&SpongeSpec::SelfSimilar(spec.clone())).into_result()?;
        let n = spec.ratios.len();
        Ok(LevelTree {
            levels: vec![Level {
                keys: (1..=n).map(|i| vec![i]).collect(),
                parent: vec![0; n],
                neg_log: spec.ratios.iter().map(|r| vec![-r.ln()]).collect(),
                ratio: spec.ratios.clone(),
            }],
            axes: vec![1],
        })
    }

    /// Builds the prefix tree of a GL sponge; the spec must validate.
    pub fn from_gl(spec: &GlSpec) -> Result<Self> {
        validate(&SpongeSpec::GatzourasLalley(spec.clone())).into_result()?;
        let d = spec.dimension;
        let mut levels: Vec<Level> = Vec::with_capacity(d);
        for n in 1..=d {
            // prefix -> ratio of coordinate n (consistent by validation)
            let mut nodes: BTreeMap<Vec<usize>, Scalar> = BTreeMap::new();
            for m in &spec.maps {
                nodes
                    .entry(m.index[..n].to_vec())
                    .or_insert(m.ratios[n - 1]);
            }
            let mut level = Level {
                keys: Vec::with_capacity(nodes.len()),
                parent: Vec::with_capacity(nodes.len()),
                neg_log: Vec::with_capacity(nodes.len()),
                ratio: Vec::with_capacity(nodes.len()),
            };
            for (key, ratio) in nodes {
                let (parent, mut neg_log) = match levels.last() {
                    None => (0, Vec::new()),
                    Some(prev) => {
                        let p = prev
                            .keys
                            .binary_search_by(|k| k.as_slice().cmp(&key[..n - 1]))
                            .expect("parent prefix present");
                        (p, prev.neg_log[p].clone())
                    }
                };
                neg_log.push(-ratio.ln());
                level.keys.push(key);
                level.parent.push(parent);
                level.neg_log.push(neg_log);
                level.ratio.push(ratio);
            }
            levels.push(level);
        }
        Ok(LevelTree {
            levels,
            axes: (1..=d).collect(),
        })
    }

    /// Tree of a Baranski sponge under the coordinate ordering `sigma`
    /// (a permutation of `1..=d`).
    pub fn from_baranski(spec: &BaranskiSpec, sigma: &[usize]) -> Result<Self> {
        validate(&SpongeSpec::Baranski(spec.clone())).into_result()?;
        let d = spec.dimension;
        check_permutation(sigma, d)?;
        let mut levels: Vec<Level> = Vec::with_capacity(d);
        for n in 1..=d {
            let mut axes: Vec<usize> = sigma[..n].to_vec();
            axes.sort_unstable();
            let keys = crate::model::project_alphabet(&spec.alphabet, &axes)?;
            let newest = sigma[n - 1];
            let pos_newest = axes.iter().position(|&a| a == newest).unwrap();
            let mut level = Level {
                keys: Vec::with_capacity(keys.len()),
                parent: Vec::with_capacity(keys.len()),
                neg_log: Vec::with_capacity(keys.len()),
                ratio: Vec::with_capacity(keys.len()),
            };
            for key in keys {
                let ratio = spec.axes[newest - 1][key[pos_newest] - 1];
                let (parent, mut neg_log) = match levels.last() {
                    None => (0, Vec::new()),
                    Some(prev) => {
                        let mut pk = key.clone();
                        pk.remove(pos_newest);
                        let p = prev
                            .keys
                            .binary_search(&pk)
                            .expect("projected parent present");
                        (p, prev.neg_log[p].clone())
                    }
                };
                neg_log.push(-ratio.ln());
                level.keys.push(key);
                level.parent.push(parent);
                level.neg_log.push(neg_log);
                level.ratio.push(ratio);
            }
            levels.push(level);
        }
        Ok(LevelTree {
            levels,
            axes: sigma.to_vec(),
        })
    }

    /// Tree for GL or self-similar specs; Baranski needs an ordering.
    pub fn from_spec(spec: &SpongeSpec) -> Result<Self> {
        match spec {
            SpongeSpec::SelfSimilar(s) => Self::from_self_similar(s),
            SpongeSpec::GatzourasLalley(gl) => Self::from_gl(gl),
            SpongeSpec::Baranski(_) => Err(Error::Unsupported {
                operation: "a level tree",
                expected: "a coordinate ordering for baranski systems",
                found: "none".into(),
            }),
        }
    }
}

pub(crate) fn check_permutation(sigma: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    if sigma.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: sigma.len(),
            context: "coordinate ordering".into(),
        });
    }
    for &a in sigma {
        if a == 0 || a > d || seen[a - 1] {
            return Err(Error::CoordinateOutOfRange {
                coordinate: a,
                dimension: d,
            });
        }
        seen[a - 1] = true;
    }
    Ok(())
}
