use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spongedim::boxcount::{count_cubes, dominant_class_report, empirical_dimension, CountOptions};
use spongedim::gallery;
use spongedim::hausdorff::{hausdorff_dim_2d, hausdorff_grid_search, uniform_fibre_check};
use spongedim::moran::{
    baranski_dimension, gl_profile, similarity_dimension, solve_tree, PermutationBudget,
};
use spongedim::type_counting::{
    entropy_bounds, enumerate_types, ln_big, type_class_size, type_count,
};
use spongedim::variational::{
    dominant_type, evaluate_ly_formula, finite_difference_gradient, gradient, lyapunov,
    maximize_objective, objective, random_interior_profile, random_profile, stopping_constants,
    OptimizeOptions, TypeProfile,
};
use spongedim::{GlSpec, LevelTree, Scalar, SpongeSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, pass: String, fail: String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn self_similar_sanity() -> Outcome {
    let a = similarity_dimension(&[0.5, 0.5]);
    let b = similarity_dimension(&[0.5, 0.25, 0.25]);
    let msg = format!("(1/2,1/2) -> {a:.15}, (1/2,1/4,1/4) -> {b:.15}");
    check(
        (a - 1.0).abs() <= 1e-10 && (b - 1.0).abs() <= 1e-10,
        msg.clone(),
        msg,
    )
}

fn gl_closed_form() -> Outcome {
    let ln = f64::ln;
    let a = gl_profile(&gallery::gl_a())
        .map_err(|e| e.to_string())?
        .values;
    let u = gl_profile(&gallery::gl_u())
        .map_err(|e| e.to_string())?
        .values;
    let t = gl_profile(&gallery::gl_3())
        .map_err(|e| e.to_string())?
        .values;
    let s2 = 1.0 + ln(1.5) / ln(3.0);
    let want_t = [1.0, s2, s2 + ln(4.0 / 3.0) / ln(4.0)];
    // Bedford-McMullen form: sum_n (1/|ln l_n| - 1/|ln l_(n+1)|) ln #I_n
    let sizes = [2.0f64, 3.0, 4.0];
    let inv = [1.0 / ln(2.0), 1.0 / ln(3.0), 1.0 / ln(4.0), 0.0];
    let kp: f64 = (0..3).map(|n| (inv[n] - inv[n + 1]) * ln(sizes[n])).sum();
    let mut err: f64 = 0.0;
    err = err
        .max((a[0] - 1.0).abs())
        .max((a[1] - 1.0 - ln(1.5) / ln(4.0)).abs());
    err = err.max((u[0] - 1.0).abs()).max((u[1] - 1.5).abs());
    for (x, y) in t.iter().zip(&want_t) {
        err = err.max((x - y).abs());
    }
    err = err.max((t[2] - kp).abs());
    let msg =
        format!("GL-A {a:?}, GL-U {u:?}, GL-3 {t:?}, product form {kp:.12}, max error {err:.2e}");
    check(err <= 1e-10, msg.clone(), msg)
}

fn three_path() -> Outcome {
    let mut specs: Vec<(String, GlSpec)> = vec![
        ("GL-A".into(), gallery::gl_a()),
        ("GL-U".into(), gallery::gl_u()),
        ("GL-3".into(), gallery::gl_3()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..20 {
        let d = 1 + k % 3;
        specs.push((
            format!("random#{k} (d={d})"),
            gallery::random_gl(&mut rng, d, 12),
        ));
    }
    let opts = OptimizeOptions::default();
    let mut worst_value: f64 = 0.0;
    let mut worst_profile: f64 = 0.0;
    let mut failures = Vec::new();
    for (name, spec) in &specs {
        let tree = LevelTree::from_gl(spec).map_err(|e| format!("{name}: {e}"))?;
        let s = solve_tree(&tree);
        let star = dominant_type(&tree, &s).map_err(|e| format!("{name}: {e}"))?;
        let opt = maximize_objective(&tree, None, &opts).map_err(|e| format!("{name}: {e}"))?;
        let dv = (opt.value - s[s.len() - 1]).abs();
        let dp = opt.profile.sup_distance(&star);
        worst_value = worst_value.max(dv);
        worst_profile = worst_profile.max(dp);
        if dv > 1e-6 || dp > 1e-5 {
            failures.push(format!("{name}: value gap {dv:.2e}, profile gap {dp:.2e}"));
        }
    }
    let msg = format!(
        "{} specs, worst |opt - s_d| = {worst_value:.2e}, worst sup |P - P*| = {worst_profile:.2e}",
        specs.len()
    );
    check(
        failures.is_empty(),
        msg.clone(),
        format!("{msg}; {}", failures.join("; ")),
    )
}

fn exact_counting() -> Outcome {
    let opts = CountOptions::default();
    let spec: SpongeSpec = gallery::gl_a().into();
    for k in 1..=8u32 {
        let delta = Scalar::fraction(1, 4u64.pow(k));
        let total = count_cubes(&spec, &delta, &opts)
            .map_err(|e| e.to_string())?
            .total;
        if total != BigUint::from(6u64).pow(k) {
            return Err(format!("GL-A at 4^-{k}: {total} cubes, expected 6^{k}"));
        }
    }
    let deltas: Vec<Scalar> = (1..=8).map(|k| Scalar::fraction(1, 4u64.pow(k))).collect();
    let fit = empirical_dimension(&spec, &deltas, opts.budget).map_err(|e| e.to_string())?;
    let slope_err = (fit.slope - 6f64.ln() / 4f64.ln()).abs();

    let gl3: SpongeSpec = gallery::gl_3().into();
    let target = 1.57659;
    let largest = 17u32;
    let mut gaps = Vec::new();
    for k in 1..=largest {
        let delta = Scalar::fraction(1, 12u64.pow(k));
        let total = count_cubes(&gl3, &delta, &opts)
            .map_err(|e| e.to_string())?
            .total;
        let ratio = ln_big(&total) / (k as f64 * 12f64.ln());
        gaps.push((k, ratio, (ratio - target).abs()));
    }
    let last = gaps.last().unwrap().2;
    let monotone = gaps.windows(2).all(|w| w[1].2 <= w[0].2);
    let table: Vec<String> = gaps
        .iter()
        .map(|(k, r, _)| format!("k={k}: {r:.5}"))
        .collect();
    let msg = format!(
        "GL-A 6^k for k=1..8, slope error {slope_err:.2e}; GL-3 ratios [{}]; gap at k={largest} {last:.4}, monotone {monotone}",
        table.join(", ")
    );
    check(
        slope_err <= 1e-12 && last <= 0.05 && monotone,
        msg.clone(),
        msg,
    )
}

fn method_of_types() -> Outcome {
    let mut checked = 0u64;
    for alphabet in 1..=4usize {
        for n in 0..=12u64 {
            let types = enumerate_types(n, alphabet, u64::MAX).map_err(|e| e.to_string())?;
            let count = BigUint::from(types.len());
            if count != type_count(n, alphabet) {
                return Err(format!("n={n}, N={alphabet}: {count} types enumerated"));
            }
            if count > BigUint::from(n + 1).pow(alphabet as u32) {
                return Err(format!("n={n}, N={alphabet}: {count} exceeds (n+1)^N"));
            }
            let mut sum = BigUint::from(0u8);
            for t in &types {
                let b = entropy_bounds(t);
                if !b.holds {
                    return Err(format!("sandwich fails for {:?}: {b:?}", t.counts));
                }
                sum += type_class_size(t);
                checked += 1;
            }
            if sum != BigUint::from(alphabet).pow(n as u32) {
                return Err(format!("n={n}, N={alphabet}: class sizes sum to {sum}"));
            }
        }
    }
    Ok(format!("{checked} types checked for n <= 12, N <= 4"))
}

fn corpus_trees() -> Vec<(&'static str, LevelTree)> {
    let mut out = vec![
        ("GL-A", LevelTree::from_gl(&gallery::gl_a()).unwrap()),
        ("GL-U", LevelTree::from_gl(&gallery::gl_u()).unwrap()),
        ("GL-3", LevelTree::from_gl(&gallery::gl_3()).unwrap()),
        (
            "GL-single",
            LevelTree::from_gl(&gallery::gl_single_cells()).unwrap(),
        ),
        (
            "BAR-A",
            LevelTree::from_baranski(&gallery::bar_a(), &[1, 2]).unwrap(),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (name, d) in [("random d=2", 2), ("random d=3", 3)] {
        out.push((
            name,
            LevelTree::from_gl(&gallery::random_gl(&mut rng, d, 12)).unwrap(),
        ));
    }
    out
}

fn lemma_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut min_c = f64::INFINITY;
    let trees = corpus_trees();
    for (name, tree) in &trees {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = tree.dimension();
        for _ in 0..1000 {
            let p = random_profile(tree, &mut rng);
            let c = stopping_constants(tree, &p).map_err(|e| format!("{name}: {e}"))?;
            min_c = c.iter().copied().fold(min_c, f64::min);
            for n in 1..d {
                let mut sum = 0.0;
                for m in n + 1..=d {
                    sum += c[m - 1]
                        * lyapunov(tree, p.block(m), m, n + 1).map_err(|e| e.to_string())?;
                }
                worst = worst.max((sum - 1.0).abs());
            }
        }
    }
    let msg = format!(
        "{} specs x 1000 profiles, worst identity error {worst:.2e}, smallest C_n {min_c:.3e}",
        trees.len()
    );
    check(worst <= 1e-10 && min_c > 0.0, msg.clone(), msg)
}

fn formula_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for spec in [gallery::gl_a(), gallery::gl_u(), gallery::gl_3()] {
        let tree = LevelTree::from_gl(&spec).unwrap();
        for _ in 0..1000 {
            let p = random_profile(&tree, &mut rng);
            let a = objective(&tree, &p).map_err(|e| e.to_string())?;
            let b = evaluate_ly_formula(&tree, &p).map_err(|e| e.to_string())?;
            worst = worst.max((a - b).abs());
        }
    }
    let msg = format!("GL-A, GL-U (d=2) and GL-3 (d=3), 1000 profiles each, worst gap {worst:.2e}");
    check(worst <= 1e-12, msg.clone(), msg)
}

fn baranski_sweep() -> Outcome {
    let budget = PermutationBudget::default();
    let a = baranski_dimension(&gallery::bar_a(), budget).map_err(|e| e.to_string())?;
    let want = 1.0 + 1.5f64.ln() / 3f64.ln();
    let full = baranski_dimension(&gallery::bar_full(), budget).map_err(|e| e.to_string())?;
    let as_gl = baranski_dimension(&gallery::bar_gl_a(), budget).map_err(|e| e.to_string())?;
    let gl = gl_profile(&gallery::gl_a()).map_err(|e| e.to_string())?;
    let gl_gap = as_gl
        .values
        .iter()
        .zip(&gl.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let msg = format!(
        "BAR-A {:.12} at sigma {:?}; full product {:.15}; GL-A as Barański {:?} at sigma {:?}, gap {gl_gap:.1e}",
        a.box_dimension(),
        a.permutation,
        full.box_dimension(),
        as_gl.values,
        as_gl.permutation
    );
    let ok = (a.box_dimension() - want).abs() <= 1e-10
        && a.permutation == [1, 2]
        && (full.box_dimension() - 2.0).abs() <= 1e-12
        && gl_gap <= 1e-12
        && as_gl.permutation == [1, 2];
    check(ok, msg.clone(), msg)
}

fn dominant_class() -> Outcome {
    let spec: SpongeSpec = gallery::gl_a().into();
    let tree = LevelTree::from_gl(&gallery::gl_a()).unwrap();
    let s2 = gl_profile(&gallery::gl_a()).unwrap().box_dimension();
    let expected = TypeProfile::on_tree(&tree, vec![vec![0.5, 0.5], vec![1.0 / 3.0; 3]])
        .map_err(|e| e.to_string())?;
    let mut ratios = Vec::new();
    let mut at_six = None;
    for k in 4..=8u32 {
        let delta = Scalar::fraction(1, 4u64.pow(k));
        let r = dominant_class_report(&spec, &delta, u64::MAX).map_err(|e| e.to_string())?;
        ratios.push((k, r.ratio));
        if k == 6 {
            at_six = Some(r);
        }
    }
    let r = at_six.unwrap();
    let profile = r
        .dominant
        .to_profile(&tree)
        .ok_or_else(|| "dominant type has an empty block".to_string())?;
    let type_ok = profile.sup_distance(&expected) <= 1e-15;
    let count_ok = r.dominant.count == BigUint::from(1800u32);
    let interval_ok = r.ratio >= s2 - 0.25 && r.ratio <= s2;
    let tightening = ratios
        .windows(2)
        .all(|w| (s2 - w[1].1).abs() < (s2 - w[0].1).abs());
    let table: Vec<String> = ratios
        .iter()
        .map(|(k, x)| format!("k={k}: {x:.4}"))
        .collect();
    let msg = format!(
        "argmax {:?} ({}), count {} ({}), ratio {:.4} in [{:.4}, {:.4}]: {interval_ok}, tightening [{}]: {tightening}",
        r.dominant.blocks,
        if type_ok { "matches" } else { "differs" },
        r.dominant.count,
        if count_ok { "matches" } else { "differs" },
        r.ratio,
        s2 - 0.25,
        s2,
        table.join(", ")
    );
    check(
        type_ok && count_ok && interval_ok && tightening,
        msg.clone(),
        msg,
    )
}

fn hausdorff_comparison() -> Outcome {
    let opts = OptimizeOptions::default();
    let want = (1.0 + 2f64.sqrt()).log2();
    let a: SpongeSpec = gallery::gl_a().into();
    let u: SpongeSpec = gallery::gl_u().into();
    let ra = hausdorff_dim_2d(&a, &opts).map_err(|e| e.to_string())?;
    let (grid, _) = hausdorff_grid_search(&a).map_err(|e| e.to_string())?;
    let ru = hausdorff_dim_2d(&u, &opts).map_err(|e| e.to_string())?;
    let fa = uniform_fibre_check(&a).map_err(|e| e.to_string())?;
    let fu = uniform_fibre_check(&u).map_err(|e| e.to_string())?;
    let msg = format!(
        "GL-A gradient {:.10}, grid {:.10}, target {want:.10}, dim_B {:.7}, uniform {}; GL-U dim_H {:.10}, dim_B {:.10}, uniform {}",
        ra.value, grid, ra.box_dimension, fa.is_uniform, ru.value, ru.box_dimension, fu.is_uniform
    );
    let ok = (ra.value - want).abs() <= 1e-4
        && (grid - want).abs() <= 1e-4
        && (ra.value - grid).abs() <= 1e-4
        && !fa.is_uniform
        && ra.box_dimension - ra.value >= 0.02
        && fu.is_uniform
        && (ru.value - 1.5).abs() <= 1e-5
        && (ru.box_dimension - 1.5).abs() <= 1e-5;
    check(ok, msg.clone(), msg)
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    let trees = corpus_trees();
    let per_tree = 100 / trees.len() + 1;
    let mut draws = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    'outer: for (_, tree) in trees.iter().cycle() {
        for _ in 0..per_tree {
            if draws == 100 {
                break 'outer;
            }
            let p = random_interior_profile(tree, &mut rng, 0.05);
            let g = gradient(tree, &p).map_err(|e| e.to_string())?;
            let fd = finite_difference_gradient(tree, &p, 1e-6).map_err(|e| e.to_string())?;
            let scale = g
                .iter()
                .flatten()
                .map(|x| x.abs())
                .fold(0.0, f64::max)
                .max(1.0);
            let gap = g
                .iter()
                .flatten()
                .zip(fd.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(gap / scale);
            draws += 1;
        }
    }
    let msg = format!("{draws} interior profiles, worst relative gap {worst:.2e}");
    check(worst <= 1e-4, msg.clone(), msg)
}

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("self-similar sanity", self_similar_sanity),
        ("closed-form profiles", gl_closed_form),
        ("three-path agreement", three_path),
        ("exact counting", exact_counting),
        ("method-of-types bounds", method_of_types),
        ("stopping-constant identity and positivity", lemma_identity),
        ("planar and spatial formula identities", formula_identities),
        ("Barański sweep", baranski_sweep),
        ("dominant class", dominant_class),
        ("Hausdorff comparison", hausdorff_comparison),
        ("gradient correctness", gradient_correctness),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
