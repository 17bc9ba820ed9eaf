//! Reference systems with hand-checked dimensions, and random generators of
//! valid Gatzouras-Lalley sponges.

use std::collections::BTreeMap;

use rand::Rng;

use crate::model::{BaranskiSpec, GlMap, GlSpec, SelfSimilarSpec};
use crate::number::Scalar;

/// Grid sponge with the same ratio in every cell. `cells` are 1-based grid
/// positions; indices are relabelled so that children of each prefix are
/// `1..=N`.
pub fn grid_sponge(ratios: &[Scalar], cells: &[Vec<usize>]) -> GlSpec {
    let d = ratios.len();
    let mut cells = cells.to_vec();
    cells.sort();
    cells.dedup();
    // rank each grid coordinate among its siblings
    let mut rank: Vec<BTreeMap<Vec<usize>, BTreeMap<usize, usize>>> = vec![BTreeMap::new(); d];
    for c in &cells {
        for l in 0..d {
            rank[l].entry(c[..l].to_vec()).or_default().insert(c[l], 0);
        }
    }
    for level in rank.iter_mut() {
        for kids in level.values_mut() {
            for (r, slot) in kids.values_mut().enumerate() {
                *slot = r + 1;
            }
        }
    }
    let maps = cells
        .iter()
        .map(|c| {
            let index = (0..d).map(|l| rank[l][&c[..l]][&c[l]]).collect();
            let translations = (0..d)
                .map(|l| match ratios[l].exact() {
                    Some(f) => Scalar::fraction((c[l] as u64 - 1) * f.numer(), f.denom()),
                    None => Scalar::float((c[l] - 1) as f64 * ratios[l].value()),
                })
                .collect();
            GlMap {
                index,
                ratios: ratios.to_vec(),
                translations,
            }
        })
        .collect();
    GlSpec { dimension: d, maps }
}

/// 2x4 grid carpet: one cell in the left column, two in the right.
pub fn gl_a() -> GlSpec {
    let mut spec = grid_sponge(
        &[Scalar::fraction(1, 2), Scalar::fraction(1, 4)],
        &[vec![1, 1], vec![2, 2], vec![2, 4]],
    );
    spec.maps[0].translations = vec![Scalar::float(0.0), Scalar::float(0.0)];
    spec
}

/// 2x4 grid carpet with two cells in each column (uniform fibres).
pub fn gl_u() -> GlSpec {
    grid_sponge(
        &[Scalar::fraction(1, 2), Scalar::fraction(1, 4)],
        &[vec![1, 1], vec![1, 3], vec![2, 2], vec![2, 4]],
    )
}

/// 2x3x4 grid sponge with four cells.
pub fn gl_3() -> GlSpec {
    grid_sponge(
        &[
            Scalar::fraction(1, 2),
            Scalar::fraction(1, 3),
            Scalar::fraction(1, 4),
        ],
        &[vec![1, 1, 1], vec![1, 2, 1], vec![2, 1, 1], vec![2, 1, 2]],
    )
}

/// Two columns of ratio 1/2, each holding a single cell of ratio 1/4.
pub fn gl_single_cells() -> GlSpec {
    grid_sponge(
        &[Scalar::fraction(1, 2), Scalar::fraction(1, 4)],
        &[vec![1, 1], vec![2, 3]],
    )
}

pub fn self_similar(ratios: &[Scalar]) -> SelfSimilarSpec {
    SelfSimilarSpec {
        ratios: ratios.to_vec(),
    }
}

/// 2x3 Baranski carpet with cells (1,1), (2,2), (1,3).
pub fn bar_a() -> BaranskiSpec {
    BaranskiSpec {
        dimension: 2,
        axes: vec![
            vec![Scalar::fraction(1, 2); 2],
            vec![Scalar::fraction(1, 3); 3],
        ],
        alphabet: vec![vec![1, 1], vec![2, 2], vec![1, 3]],
    }
}

/// The full 2x3 grid: the attractor is the unit square.
pub fn bar_full() -> BaranskiSpec {
    let mut spec = bar_a();
    spec.alphabet = (1..=2)
        .flat_map(|i| (1..=3).map(move |j| vec![i, j]))
        .collect();
    spec
}

pub fn bar_point() -> BaranskiSpec {
    let mut spec = bar_a();
    spec.alphabet = vec![vec![1, 1]];
    spec
}

/// [`gl_a`] written as a Baranski system.
pub fn bar_gl_a() -> BaranskiSpec {
    BaranskiSpec {
        dimension: 2,
        axes: vec![
            vec![Scalar::fraction(1, 2); 2],
            vec![Scalar::fraction(1, 4); 4],
        ],
        alphabet: vec![vec![1, 1], vec![2, 2], vec![2, 4]],
    }
}

/// Random valid GL sponge in dimension `d` with at most `max_maps` maps.
/// Every coordinate-`n` ratio is strictly below the coordinate-`(n-1)` ratio
/// of its parent and siblings are packed side by side.
pub fn random_gl<R: Rng + ?Sized>(rng: &mut R, d: usize, max_maps: usize) -> GlSpec {
    assert!(d >= 1 && max_maps >= 2);
    loop {
        let spec = try_random_gl(rng, d, max_maps);
        if spec.maps.len() >= 2 && spec.maps.len() <= max_maps {
            return spec;
        }
    }
}

fn try_random_gl<R: Rng + ?Sized>(rng: &mut R, d: usize, max_maps: usize) -> GlSpec {
    // (index, ratios, translations) per partial node
    let mut frontier: Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> = vec![(vec![], vec![], vec![])];
    for level in 0..d {
        let mut next = Vec::new();
        for (index, ratios, translations) in &frontier {
            let kids = if level == 0 {
                rng.random_range(2..=3)
            } else {
                rng.random_range(1..=3)
            };
            let cap = ratios.last().copied().unwrap_or(1.0);
            let upper = (0.95 / kids as f64).min(0.95 * cap);
            let lower = 0.2 * upper;
            let mut offset = 0.0;
            for k in 0..kids {
                let r = rng.random_range(lower..upper);
                let mut idx = index.clone();
                idx.push(k + 1);
                let mut rs = ratios.clone();
                rs.push(r);
                let mut ts = translations.clone();
                ts.push(offset);
                offset += r;
                next.push((idx, rs, ts));
            }
        }
        frontier = next;
        if frontier.len() > max_maps {
            break;
        }
    }
    let maps = frontier
        .into_iter()
        .filter(|(index, _, _)| index.len() == d)
        .map(|(index, ratios, translations)| GlMap {
            index,
            ratios: ratios.into_iter().map(Scalar::float).collect(),
            translations: translations.into_iter().map(Scalar::float).collect(),
        })
        .collect();
    GlSpec { dimension: d, maps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, SpongeSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gallery_specs_are_valid() {
        let specs: Vec<SpongeSpec> = vec![
            gl_a().into(),
            gl_u().into(),
            gl_3().into(),
            gl_single_cells().into(),
            bar_a().into(),
            bar_full().into(),
            bar_point().into(),
            bar_gl_a().into(),
        ];
        for spec in specs {
            let report = validate(&spec);
            assert!(report.is_valid(), "{spec:?}: {report}");
        }
    }

    #[test]
    fn grid_sponge_relabels_indices() {
        let spec = gl_a();
        let idx: Vec<_> = spec.maps.iter().map(|m| m.index.clone()).collect();
        assert_eq!(idx, vec![vec![1, 1], vec![2, 1], vec![2, 2]]);
        assert_eq!(spec.maps[2].translations[1], Scalar::fraction(3, 4));
    }

    #[test]
    fn random_specs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 1..=3 {
            for _ in 0..50 {
                let spec = random_gl(&mut rng, d, 12);
                assert!(spec.maps.len() <= 12);
                let report = validate(&spec.clone().into());
                assert!(report.is_valid(), "{spec:?}: {report}");
            }
        }
    }
}
