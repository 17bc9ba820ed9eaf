//! Sponge specifications: the three supported IFS families, their document
//! format, and validation of the geometric conditions each family needs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::number::Scalar;

/// Coordinate tolerance for the cuboid overlap test.
pub const COSC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarSpec {
    pub ratios: Vec<Scalar>,
}

/// One map of a Gatzouras-Lalley system. Coordinate `n` of the ratios and
/// translations may only depend on the first `n` entries of `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlMap {
    pub index: Vec<usize>,
    pub ratios: Vec<Scalar>,
    pub translations: Vec<Scalar>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlSpec {
    pub dimension: usize,
    pub maps: Vec<GlMap>,
}

/// Per-axis interval systems plus the alphabet of cells that are kept.
/// Translations are implied: cell `i` of an axis starts at the sum of the
/// ratios before it.
#[derive(Debug, Clone, PartialEq)]
pub struct BaranskiSpec {
    pub dimension: usize,
    pub axes: Vec<Vec<Scalar>>,
    pub alphabet: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpongeSpec {
    SelfSimilar(SelfSimilarSpec),
    GatzourasLalley(GlSpec),
    Baranski(BaranskiSpec),
}

impl SpongeSpec {
    pub fn dimension(&self) -> usize {
        match self {
            SpongeSpec::SelfSimilar(_) => 1,
            SpongeSpec::GatzourasLalley(gl) => gl.dimension,
            SpongeSpec::Baranski(b) => b.dimension,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SpongeSpec::SelfSimilar(_) => "self-similar",
            SpongeSpec::GatzourasLalley(_) => "gatzouras-lalley",
            SpongeSpec::Baranski(_) => "baranski",
        }
    }

    /// Number of maps in the IFS.
    pub fn len(&self) -> usize {
        match self {
            SpongeSpec::SelfSimilar(s) => s.ratios.len(),
            SpongeSpec::GatzourasLalley(gl) => gl.maps.len(),
            SpongeSpec::Baranski(b) => b.alphabet.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<SelfSimilarSpec> for SpongeSpec {
    fn from(s: SelfSimilarSpec) -> Self {
        SpongeSpec::SelfSimilar(s)
    }
}

impl From<GlSpec> for SpongeSpec {
    fn from(s: GlSpec) -> Self {
        SpongeSpec::GatzourasLalley(s)
    }
}

impl From<BaranskiSpec> for SpongeSpec {
    fn from(s: BaranskiSpec) -> Self {
        SpongeSpec::Baranski(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    SelfSimilar,
    GatzourasLalley,
    Baranski,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratios: Option<Vec<Scalar>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maps: Option<Vec<MapDocument>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axes: Option<Vec<AxisDocument>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alphabet: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDocument {
    index: Vec<usize>,
    ratios: Vec<Scalar>,
    translations: Vec<Scalar>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisDocument {
    ratios: Vec<Scalar>,
    #[serde(default, skip_serializing)]
    translations: Option<serde_json::Value>,
}

fn check_ratio(r: &Scalar, context: impl FnOnce() -> String) -> Result<()> {
    let v = r.value();
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::RatioOutOfRange {
            value: v,
            context: context(),
        })
    }
}

fn check_translation(t: &Scalar, context: impl FnOnce() -> String) -> Result<()> {
    let v = t.value();
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::TranslationOutOfRange {
            value: v,
            context: context(),
        })
    }
}

fn check_len(expected: usize, found: usize, context: impl FnOnce() -> String) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            found,
            context: context(),
        })
    }
}

fn reject_field<T>(field: &Option<T>, name: &str, kind: &str) -> Result<()> {
    if field.is_some() {
        return Err(Error::Schema(format!(
            "field \"{name}\" is not allowed for kind \"{kind}\""
        )));
    }
    Ok(())
}

fn require<T>(field: Option<T>, name: &str, kind: &str) -> Result<T> {
    field.ok_or_else(|| Error::Schema(format!("kind \"{kind}\" requires field \"{name}\"")))
}

/// Parses a specification document. Only syntax, ranges and tuple lengths
/// are checked here; geometric conditions belong to [`validate`].
pub fn parse_spec(text: &str) -> Result<SpongeSpec> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    match doc.kind {
        Kind::SelfSimilar => {
            let kind = "self-similar";
            reject_field(&doc.maps, "maps", kind)?;
            reject_field(&doc.axes, "axes", kind)?;
            reject_field(&doc.alphabet, "alphabet", kind)?;
            if let Some(d) = doc.dimension {
                if d == 0 {
                    return Err(Error::Schema("dimension must be at least 1".into()));
                }
            }
            let ratios = require(doc.ratios, "ratios", kind)?;
            for (i, r) in ratios.iter().enumerate() {
                check_ratio(r, || format!("ratios[{i}]"))?;
            }
            Ok(SpongeSpec::SelfSimilar(SelfSimilarSpec { ratios }))
        }
        Kind::GatzourasLalley => {
            let kind = "gatzouras-lalley";
            reject_field(&doc.ratios, "ratios", kind)?;
            reject_field(&doc.axes, "axes", kind)?;
            reject_field(&doc.alphabet, "alphabet", kind)?;
            let dimension = require(doc.dimension, "dimension", kind)?;
            if dimension == 0 {
                return Err(Error::Schema("dimension must be at least 1".into()));
            }
            let raw = require(doc.maps, "maps", kind)?;
            let mut maps = Vec::with_capacity(raw.len());
            for (k, m) in raw.into_iter().enumerate() {
                check_len(dimension, m.index.len(), || format!("maps[{k}].index"))?;
                check_len(dimension, m.ratios.len(), || format!("maps[{k}].ratios"))?;
                check_len(dimension, m.translations.len(), || {
                    format!("maps[{k}].translations")
                })?;
                for (c, r) in m.ratios.iter().enumerate() {
                    check_ratio(r, || format!("maps[{k}].ratios[{c}]"))?;
                }
                for (c, t) in m.translations.iter().enumerate() {
                    check_translation(t, || format!("maps[{k}].translations[{c}]"))?;
                }
                maps.push(GlMap {
                    index: m.index,
                    ratios: m.ratios,
                    translations: m.translations,
                });
            }
            Ok(SpongeSpec::GatzourasLalley(GlSpec { dimension, maps }))
        }
        Kind::Baranski => {
            let kind = "baranski";
            reject_field(&doc.ratios, "ratios", kind)?;
            reject_field(&doc.maps, "maps", kind)?;
            let dimension = require(doc.dimension, "dimension", kind)?;
            if dimension == 0 {
                return Err(Error::Schema("dimension must be at least 1".into()));
            }
            let raw_axes = require(doc.axes, "axes", kind)?;
            check_len(dimension, raw_axes.len(), || "axes".to_string())?;
            let mut axes = Vec::with_capacity(dimension);
            for (n, axis) in raw_axes.into_iter().enumerate() {
                if axis.translations.is_some() {
                    return Err(Error::Schema(format!(
                        "axes[{n}]: translations are implied for baranski systems and must not be given"
                    )));
                }
                for (i, r) in axis.ratios.iter().enumerate() {
                    check_ratio(r, || format!("axes[{n}].ratios[{i}]"))?;
                }
                axes.push(axis.ratios);
            }
            let alphabet = require(doc.alphabet, "alphabet", kind)?;
            for (k, t) in alphabet.iter().enumerate() {
                check_len(dimension, t.len(), || format!("alphabet[{k}]"))?;
            }
            Ok(SpongeSpec::Baranski(BaranskiSpec {
                dimension,
                axes,
                alphabet,
            }))
        }
    }
}

/// Renders a specification in the document format accepted by [`parse_spec`].
pub fn emit_spec(spec: &SpongeSpec) -> String {
    let doc = match spec {
        SpongeSpec::SelfSimilar(s) => Document {
            kind: Kind::SelfSimilar,
            dimension: None,
            ratios: Some(s.ratios.clone()),
            maps: None,
            axes: None,
            alphabet: None,
        },
        SpongeSpec::GatzourasLalley(gl) => Document {
            kind: Kind::GatzourasLalley,
            dimension: Some(gl.dimension),
            ratios: None,
            maps: Some(
                gl.maps
                    .iter()
                    .map(|m| MapDocument {
                        index: m.index.clone(),
                        ratios: m.ratios.clone(),
                        translations: m.translations.clone(),
                    })
                    .collect(),
            ),
            axes: None,
            alphabet: None,
        },
        SpongeSpec::Baranski(b) => Document {
            kind: Kind::Baranski,
            dimension: Some(b.dimension),
            ratios: None,
            maps: None,
            axes: Some(
                b.axes
                    .iter()
                    .map(|r| AxisDocument {
                        ratios: r.clone(),
                        translations: None,
                    })
                    .collect(),
            ),
            alphabet: Some(b.alphabet.clone()),
        },
    };
    serde_json::to_string_pretty(&doc).expect("specification documents always serialize")
}

fn fmt_tuple(t: &[usize]) -> String {
    let parts: Vec<String> = t.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(","))
}

/// One violated invariant. Coordinates and indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    EmptySystem,
    ZeroDimension,
    RatioOutOfRange {
        location: String,
        value: f64,
    },
    TranslationOutOfRange {
        location: String,
        value: f64,
    },
    TupleLength {
        index: Vec<usize>,
        expected: usize,
        found: usize,
    },
    DuplicateIndex {
        index: Vec<usize>,
    },
    PrefixInconsistent {
        first: Vec<usize>,
        second: Vec<usize>,
        coordinate: usize,
    },
    IncompleteTree {
        prefix: Vec<usize>,
        children: Vec<usize>,
    },
    Ordering {
        index: Vec<usize>,
        coordinate: usize,
    },
    OutsideUnitCube {
        index: Vec<usize>,
        coordinate: usize,
    },
    Cosc {
        first: Vec<usize>,
        second: Vec<usize>,
    },
    AxisCount {
        expected: usize,
        found: usize,
    },
    AxisSumExceedsOne {
        axis: usize,
        sum: f64,
    },
    SymbolOutOfRange {
        index: Vec<usize>,
        coordinate: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySystem => write!(f, "no maps given"),
            Violation::ZeroDimension => write!(f, "dimension must be at least 1"),
            Violation::RatioOutOfRange { location, value } => {
                write!(f, "ratio out of range: {value} at {location}")
            }
            Violation::TranslationOutOfRange { location, value } => {
                write!(f, "translation out of range: {value} at {location}")
            }
            Violation::TupleLength {
                index,
                expected,
                found,
            } => write!(
                f,
                "tuple {} has length {found}, expected {expected}",
                fmt_tuple(index)
            ),
            Violation::DuplicateIndex { index } => {
                write!(f, "duplicate index {}", fmt_tuple(index))
            }
            Violation::PrefixInconsistent {
                first,
                second,
                coordinate,
            } => write!(
                f,
                "prefix inconsistency in coordinate {coordinate}: {} and {} share a prefix but differ",
                fmt_tuple(first),
                fmt_tuple(second)
            ),
            Violation::IncompleteTree { prefix, children } => write!(
                f,
                "children of prefix {} are {}, expected 1..={}",
                fmt_tuple(prefix),
                fmt_tuple(children),
                children.len()
            ),
            Violation::Ordering { index, coordinate } => write!(
                f,
                "ordering violation on index {}: ratio of coordinate {coordinate} is not below coordinate {}",
                fmt_tuple(index),
                coordinate - 1
            ),
            Violation::OutsideUnitCube { index, coordinate } => write!(
                f,
                "image of {} leaves the unit cube in coordinate {coordinate}",
                fmt_tuple(index)
            ),
            Violation::Cosc { first, second } => write!(
                f,
                "COSC violation: open images of {} and {} overlap",
                fmt_tuple(first),
                fmt_tuple(second)
            ),
            Violation::AxisCount { expected, found } => {
                write!(f, "expected {expected} axes, found {found}")
            }
            Violation::AxisSumExceedsOne { axis, sum } => {
                write!(f, "axis ratios sum exceeds 1 on axis {axis} (sum {sum})")
            }
            Violation::SymbolOutOfRange { index, coordinate } => write!(
                f,
                "alphabet tuple {} out of range in coordinate {coordinate}",
                fmt_tuple(index)
            ),
        }
    }
}

/// Violations found by [`validate`]; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// `Ok(())` when valid, otherwise the report wrapped in an error.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

pub fn validate(spec: &SpongeSpec) -> ValidationReport {
    let mut violations = Vec::new();
    match spec {
        SpongeSpec::SelfSimilar(s) => validate_self_similar(s, &mut violations),
        SpongeSpec::GatzourasLalley(gl) => validate_gl(gl, &mut violations),
        SpongeSpec::Baranski(b) => validate_baranski(b, &mut violations),
    }
    ValidationReport { violations }
}

fn ratio_in_range(r: &Scalar) -> bool {
    r.value() > 0.0 && r.value() < 1.0
}

fn validate_self_similar(s: &SelfSimilarSpec, out: &mut Vec<Violation>) {
    if s.ratios.is_empty() {
        out.push(Violation::EmptySystem);
    }
    for (i, r) in s.ratios.iter().enumerate() {
        if !ratio_in_range(r) {
            out.push(Violation::RatioOutOfRange {
                location: format!("ratios[{i}]"),
                value: r.value(),
            });
        }
    }
}

fn validate_gl(gl: &GlSpec, out: &mut Vec<Violation>) {
    let d = gl.dimension;
    if d == 0 {
        out.push(Violation::ZeroDimension);
        return;
    }
    if gl.maps.is_empty() {
        out.push(Violation::EmptySystem);
        return;
    }
    let mut shaped = true;
    for m in &gl.maps {
        for found in [m.index.len(), m.ratios.len(), m.translations.len()] {
            if found != d {
                out.push(Violation::TupleLength {
                    index: m.index.clone(),
                    expected: d,
                    found,
                });
                shaped = false;
            }
        }
    }
    if !shaped {
        return;
    }

    for m in &gl.maps {
        for c in 0..d {
            if !ratio_in_range(&m.ratios[c]) {
                out.push(Violation::RatioOutOfRange {
                    location: format!("{} coordinate {}", fmt_tuple(&m.index), c + 1),
                    value: m.ratios[c].value(),
                });
            }
            let t = m.translations[c].value();
            if !(0.0..1.0).contains(&t) {
                out.push(Violation::TranslationOutOfRange {
                    location: format!("{} coordinate {}", fmt_tuple(&m.index), c + 1),
                    value: t,
                });
            }
        }
    }

    let mut seen = HashSet::new();
    for m in &gl.maps {
        if !seen.insert(m.index.clone()) {
            out.push(Violation::DuplicateIndex {
                index: m.index.clone(),
            });
        }
    }

    // prefix consistency: coordinate l is a function of the first l entries
    for l in 1..=d {
        let mut first_with: BTreeMap<&[usize], &GlMap> = BTreeMap::new();
        for m in &gl.maps {
            let prefix = &m.index[..l];
            match first_with.get(prefix) {
                None => {
                    first_with.insert(prefix, m);
                }
                Some(other) => {
                    let c = l - 1;
                    if other.ratios[c] != m.ratios[c] || other.translations[c] != m.translations[c]
                    {
                        out.push(Violation::PrefixInconsistent {
                            first: other.index.clone(),
                            second: m.index.clone(),
                            coordinate: l,
                        });
                    }
                }
            }
        }
    }

    // tree completeness: children of every present prefix are 1..=N
    for l in 1..=d {
        let mut children: BTreeMap<&[usize], BTreeSet<usize>> = BTreeMap::new();
        for m in &gl.maps {
            children
                .entry(&m.index[..l - 1])
                .or_default()
                .insert(m.index[l - 1]);
        }
        for (prefix, kids) in children {
            let n = kids.len();
            if !kids.iter().copied().eq(1..=n) {
                out.push(Violation::IncompleteTree {
                    prefix: prefix.to_vec(),
                    children: kids.into_iter().collect(),
                });
            }
        }
    }

    for m in &gl.maps {
        for c in 1..d {
            if m.ratios[c].value() >= m.ratios[c - 1].value() {
                out.push(Violation::Ordering {
                    index: m.index.clone(),
                    coordinate: c + 1,
                });
            }
        }
        for c in 0..d {
            if m.translations[c].value() + m.ratios[c].value() > 1.0 + COSC_TOLERANCE {
                out.push(Violation::OutsideUnitCube {
                    index: m.index.clone(),
                    coordinate: c + 1,
                });
            }
        }
    }

    for (a, ma) in gl.maps.iter().enumerate() {
        for mb in &gl.maps[a + 1..] {
            if ma.index == mb.index {
                continue;
            }
            let overlap = (0..d).all(|c| {
                let lo = ma.translations[c].value().max(mb.translations[c].value());
                let hi = (ma.translations[c].value() + ma.ratios[c].value())
                    .min(mb.translations[c].value() + mb.ratios[c].value());
                hi - lo > COSC_TOLERANCE
            });
            if overlap {
                out.push(Violation::Cosc {
                    first: ma.index.clone(),
                    second: mb.index.clone(),
                });
            }
        }
    }
}

fn validate_baranski(b: &BaranskiSpec, out: &mut Vec<Violation>) {
    let d = b.dimension;
    if d == 0 {
        out.push(Violation::ZeroDimension);
        return;
    }
    if b.axes.len() != d {
        out.push(Violation::AxisCount {
            expected: d,
            found: b.axes.len(),
        });
        return;
    }
    for (n, axis) in b.axes.iter().enumerate() {
        for (i, r) in axis.iter().enumerate() {
            if !ratio_in_range(r) {
                out.push(Violation::RatioOutOfRange {
                    location: format!("axis {} ratio {}", n + 1, i + 1),
                    value: r.value(),
                });
            }
        }
        let sum: f64 = axis.iter().map(|r| r.value()).sum();
        if sum > 1.0 + COSC_TOLERANCE {
            out.push(Violation::AxisSumExceedsOne { axis: n + 1, sum });
        }
    }
    if b.alphabet.is_empty() {
        out.push(Violation::EmptySystem);
    }
    let mut seen = HashSet::new();
    for t in &b.alphabet {
        if t.len() != d {
            out.push(Violation::TupleLength {
                index: t.clone(),
                expected: d,
                found: t.len(),
            });
            continue;
        }
        for (n, &i) in t.iter().enumerate() {
            if i == 0 || i > b.axes[n].len() {
                out.push(Violation::SymbolOutOfRange {
                    index: t.clone(),
                    coordinate: n + 1,
                });
            }
        }
        if !seen.insert(t.clone()) {
            out.push(Violation::DuplicateIndex { index: t.clone() });
        }
    }
}

/// First `len` entries of `index`.
pub fn project_prefix(index: &[usize], len: usize) -> Result<Vec<usize>> {
    if len == 0 || len > index.len() {
        return Err(Error::ProjectionOutOfRange {
            len: index.len(),
            requested: len,
        });
    }
    Ok(index[..len].to_vec())
}

/// Distinct restrictions of the alphabet to the 1-based coordinates in
/// `coords`, each tuple listing entries in the order of `coords`. The result
/// is sorted.
pub fn project_alphabet(alphabet: &[Vec<usize>], coords: &[usize]) -> Result<Vec<Vec<usize>>> {
    if coords.is_empty() {
        return Err(Error::EmptyCoordinateSet);
    }
    let mut out = BTreeSet::new();
    for t in alphabet {
        let mut projected = Vec::with_capacity(coords.len());
        for &c in coords {
            if c == 0 || c > t.len() {
                return Err(Error::CoordinateOutOfRange {
                    coordinate: c,
                    dimension: t.len(),
                });
            }
            projected.push(t[c - 1]);
        }
        out.insert(projected);
    }
    Ok(out.into_iter().collect())
}
