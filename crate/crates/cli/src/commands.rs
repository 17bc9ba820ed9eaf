use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use spongedim::boxcount::{count_cubes, empirical_dimension, CountOptions, DEFAULT_BUDGET};
use spongedim::hausdorff::{hausdorff_dim_2d, uniform_fibre_check};
use spongedim::moran::{dimension_profile, DimensionProfile, PermutationBudget};
use spongedim::variational::{dominant_type, maximize_objective, OptimizeOptions};
use spongedim::{parse_spec, validate, LevelTree, Scalar, SpongeSpec};

use crate::exit::{Failure, RESOURCE};
use crate::{Command, Global};

/// Agreement required between the optimizer and the closed form.
const AGREEMENT: f64 = 1e-6;

pub struct Output {
    pub command: &'static str,
    pub spec: Value,
    pub text: String,
    pub results: Value,
    pub warnings: Vec<String>,
    pub code: u8,
    pub seconds: f64,
}

impl Output {
    pub fn json_document(&self) -> String {
        let doc = json!({
            "command": self.command,
            "spec": self.spec,
            "results": self.results,
            "warnings": self.warnings,
            "timing_seconds": self.seconds,
        });
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

struct Part {
    text: String,
    results: Value,
    warnings: Vec<String>,
    code: u8,
}

impl Part {
    fn ok(text: String, results: Value) -> Self {
        Self {
            text,
            results,
            warnings: Vec::new(),
            code: 0,
        }
    }
}

pub fn run(command: &Command, global: &Global) -> Result<Output, Failure> {
    let start = Instant::now();
    let (name, file) = match command {
        Command::Validate { file } => ("validate", file),
        Command::Dim { file } => ("dim", file),
        Command::Variational { file } => ("variational", file),
        Command::Count { file, .. } => ("count", file),
        Command::Empirical { file, .. } => ("empirical", file),
        Command::Hausdorff { file } => ("hausdorff", file),
        Command::Report { file, .. } => ("report", file),
    };
    let spec = load(file)?;
    let part = if let Command::Validate { .. } = command {
        validate_part(&spec)
    } else {
        let report = validate(&spec);
        if !report.is_valid() {
            return Err(Failure {
                code: crate::exit::INVALID,
                message: format!("invalid specification:\n{report}"),
            });
        }
        match command {
            Command::Validate { .. } => unreachable!(),
            Command::Dim { .. } => dim_part(&spec)?,
            Command::Variational { .. } => variational_part(&spec, global)?,
            Command::Count {
                delta,
                types,
                per_sigma,
                ..
            } => count_part(&spec, &parse_scale(delta)?, *types, *per_sigma)?,
            Command::Empirical { deltas, .. } => empirical_part(&spec, deltas)?,
            Command::Hausdorff { .. } => hausdorff_part(&spec, global)?,
            Command::Report { out, delta, .. } => {
                report_part(&spec, global, out, delta.as_deref())?
            }
        }
    };
    Ok(Output {
        command: name,
        spec: json!({
            "kind": spec.kind(),
            "dimension": spec.dimension(),
            "maps": spec.len(),
        }),
        text: part.text,
        results: part.results,
        warnings: part.warnings,
        code: part.code,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn load(path: &Path) -> Result<SpongeSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_spec(&text)?)
}

fn parse_scale(text: &str) -> Result<Scalar, Failure> {
    let delta = Scalar::parse(text).map_err(|e| Failure::usage(e.to_string()))?;
    if !(delta.value() > 0.0 && delta.value() < 1.0) {
        return Err(Failure::usage(format!(
            "scale must lie in (0,1), got {text}"
        )));
    }
    Ok(delta)
}

fn budget() -> Result<u64, Failure> {
    match std::env::var("SPONGEDIM_BUDGET") {
        Ok(v) => v.trim().parse().map_err(|_| {
            Failure::usage(format!(
                "SPONGEDIM_BUDGET must be a nonnegative integer, got {v:?}"
            ))
        }),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn optimize_options(global: &Global) -> OptimizeOptions {
    let mut opts = OptimizeOptions::default();
    if let Some(seed) = global.seed {
        opts.seed = seed;
    }
    opts
}

fn tuple(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.7}")).collect();
    format!("({})", parts.join(", "))
}

fn usizes(values: &[usize]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(", "))
}

fn validate_part(spec: &SpongeSpec) -> Part {
    let report = validate(spec);
    let valid = report.is_valid();
    let text = if valid {
        format!(
            "valid {} specification in dimension {}\n",
            spec.kind(),
            spec.dimension()
        )
    } else {
        format!("invalid specification:\n{report}\n")
    };
    Part {
        text,
        results: json!({ "valid": valid, "violations": report.violations }),
        warnings: Vec::new(),
        code: if valid { 0 } else { crate::exit::INVALID },
    }
}

fn profile(spec: &SpongeSpec) -> Result<DimensionProfile, Failure> {
    Ok(dimension_profile(spec, PermutationBudget::default())?)
}

fn dim_part(spec: &SpongeSpec) -> Result<Part, Failure> {
    let p = profile(spec)?;
    let dim = p.box_dimension();
    let mut text = String::new();
    if let Some(table) = &p.per_permutation {
        for entry in table {
            writeln!(
                text,
                "sigma {}: s = {}",
                usizes(&entry.sigma),
                tuple(&entry.values)
            )
            .unwrap();
        }
        writeln!(text, "maximizing sigma = {}", usizes(&p.permutation)).unwrap();
    }
    writeln!(text, "s = {}", tuple(&p.values)).unwrap();
    writeln!(text, "box dimension = {dim:.7}").unwrap();
    writeln!(text, "packing dimension = box dimension = {dim:.7}").unwrap();
    Ok(Part::ok(
        text,
        json!({ "profile": p, "box_dimension": dim, "packing_dimension": dim }),
    ))
}

fn tree_for(spec: &SpongeSpec, p: &DimensionProfile) -> Result<LevelTree, Failure> {
    Ok(match spec {
        SpongeSpec::Baranski(b) => LevelTree::from_baranski(b, &p.permutation)?,
        other => LevelTree::from_spec(other)?,
    })
}

fn variational_part(spec: &SpongeSpec, global: &Global) -> Result<Part, Failure> {
    let p = profile(spec)?;
    let tree = tree_for(spec, &p)?;
    let closed = p.box_dimension();
    let star = dominant_type(&tree, &p.values)?;
    let opt = maximize_objective(&tree, None, &optimize_options(global))?;
    let gap = (opt.value - closed).abs();
    let distance = opt.profile.sup_distance(&star);
    let mut warnings = Vec::new();
    if gap > AGREEMENT {
        warnings.push(format!(
            "variational optimum {} and closed form {} differ by {gap:.3e}",
            opt.value, closed
        ));
    }
    if !opt.converged {
        warnings.push(format!(
            "optimizer did not converge (stationarity residual {:.3e})",
            opt.kkt_residual
        ));
    }
    let mut text = String::new();
    writeln!(text, "variational optimum = {:.10}", opt.value).unwrap();
    writeln!(text, "closed form s_d = {closed:.10}").unwrap();
    writeln!(text, "agreement delta = {gap:.3e}").unwrap();
    for (n, block) in opt.profile.levels().iter().enumerate() {
        writeln!(text, "p_{} = {}", n + 1, tuple(block.masses())).unwrap();
    }
    writeln!(text, "distance to closed-form maximizer = {distance:.3e}").unwrap();
    writeln!(
        text,
        "stationarity residual = {:.3e}, spread over {} starts = {:.3e}",
        opt.kkt_residual, opt.starts, opt.spread
    )
    .unwrap();
    let code = if warnings.is_empty() { 0 } else { RESOURCE };
    Ok(Part {
        text,
        results: json!({
            "value": opt.value,
            "closed_form": closed,
            "agreement_delta": gap,
            "permutation": p.permutation,
            "profile": opt.profile,
            "closed_form_profile": star,
            "profile_distance": distance,
            "kkt_residual": opt.kkt_residual,
            "converged": opt.converged,
            "spread": opt.spread,
            "iterations": opt.iterations,
            "starts": opt.starts,
        }),
        warnings,
        code,
    })
}

fn count_part(
    spec: &SpongeSpec,
    delta: &Scalar,
    types: bool,
    per_sigma: bool,
) -> Result<Part, Failure> {
    let opts = CountOptions {
        budget: budget()?,
        types,
        ..CountOptions::default()
    };
    let report = count_cubes(spec, delta, &opts)?;
    let mut text = String::new();
    writeln!(text, "delta = {delta}").unwrap();
    writeln!(text, "total {}", report.total).unwrap();
    writeln!(text, "tied cubes {}", report.ties).unwrap();
    if per_sigma {
        for c in &report.per_sigma {
            let tie = if c.tie { " (tie)" } else { "" };
            writeln!(text, "sigma {}{tie}: {}", usizes(&c.sigma), c.count).unwrap();
        }
    }
    if let Some(n) = report.distinct_types {
        writeln!(text, "distinct types {n}").unwrap();
    }
    if let Some(t) = &report.dominant_type {
        writeln!(
            text,
            "dominant type: sigma {}, block counts {:?}, {} cubes",
            usizes(&t.sigma),
            t.blocks,
            t.count
        )
        .unwrap();
    }
    let results = serde_json::to_value(&report).expect("report serializes");
    Ok(Part::ok(text, results))
}

fn empirical_part(spec: &SpongeSpec, deltas: &[String]) -> Result<Part, Failure> {
    let scales = deltas
        .iter()
        .map(|d| parse_scale(d))
        .collect::<Result<Vec<_>, _>>()?;
    let fit = empirical_dimension(spec, &scales, budget()?)?;
    let mut text = String::new();
    writeln!(text, "slope = {:.10}", fit.slope).unwrap();
    writeln!(text, "intercept = {:.10}", fit.intercept).unwrap();
    writeln!(text, "residual = {:.3e}", fit.residual).unwrap();
    for row in &fit.table {
        writeln!(
            text,
            "delta {}: N = {}, ratio {:.7}",
            row.delta, row.count, row.ratio
        )
        .unwrap();
    }
    let results = serde_json::to_value(&fit).expect("fit serializes");
    Ok(Part::ok(text, results))
}

fn hausdorff_part(spec: &SpongeSpec, global: &Global) -> Result<Part, Failure> {
    let r = hausdorff_dim_2d(spec, &optimize_options(global))?;
    let fibre = uniform_fibre_check(spec)?;
    let mut warnings = Vec::new();
    if !r.converged {
        warnings.push(format!(
            "optimizer did not converge (stationarity residual {:.3e})",
            r.kkt_residual
        ));
    }
    let mut text = String::new();
    writeln!(text, "dim_H = {:.7}", r.value).unwrap();
    writeln!(text, "uniform fibres: {}", fibre.is_uniform).unwrap();
    writeln!(text, "fibre residuals = {}", tuple(&fibre.residuals)).unwrap();
    writeln!(text, "dim_B = {:.7}", r.box_dimension).unwrap();
    writeln!(text, "dim_B - dim_H = {:.3e}", r.box_dimension - r.value).unwrap();
    let code = if warnings.is_empty() { 0 } else { RESOURCE };
    Ok(Part {
        text,
        results: json!({ "hausdorff": r, "fibre": fibre }),
        warnings,
        code,
    })
}

fn report_part(
    spec: &SpongeSpec,
    global: &Global,
    out: &Path,
    delta: Option<&str>,
) -> Result<Part, Failure> {
    let mut parts = vec![
        ("validation", validate_part(spec)),
        ("dimension", dim_part(spec)?),
        ("variational", variational_part(spec, global)?),
    ];
    let planar = matches!(spec, SpongeSpec::GatzourasLalley(gl) if gl.dimension == 2);
    if planar {
        parts.push(("hausdorff", hausdorff_part(spec, global)?));
    }
    if let Some(d) = delta {
        parts.push(("count", count_part(spec, &parse_scale(d)?, true, true)?));
    }
    let mut results = serde_json::Map::new();
    let mut text = String::new();
    let mut warnings = Vec::new();
    let mut code = 0;
    for (name, part) in parts {
        writeln!(text, "[{name}]").unwrap();
        text.push_str(&part.text);
        results.insert(name.to_string(), part.results);
        warnings.extend(part.warnings);
        code = code.max(part.code);
    }
    let document = json!({
        "spec": spongedim::emit_spec(spec).parse::<Value>().expect("emitted spec is JSON"),
        "results": results,
        "warnings": warnings,
    });
    std::fs::write(
        out,
        serde_json::to_string_pretty(&document).expect("report serializes"),
    )
    .map_err(|e| Failure::usage(format!("cannot write {}: {e}", out.display())))?;
    writeln!(text, "report written to {}", out.display()).unwrap();
    Ok(Part {
        text,
        results: Value::Object(results),
        warnings,
        code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales() {
        assert_eq!(parse_scale("0.25").unwrap().exact().unwrap().denom(), 4);
        assert_eq!(parse_scale("1/9").unwrap().exact().unwrap().denom(), 9);
        for bad in ["0", "1", "1.5", "-0.1", "half"] {
            assert_eq!(
                parse_scale(bad).unwrap_err().code,
                crate::exit::USAGE,
                "{bad}"
            );
        }
    }

    #[test]
    fn formatting() {
        assert_eq!(tuple(&[1.0, 0.5]), "(1.0000000, 0.5000000)");
        assert_eq!(usizes(&[2, 1]), "(2, 1)");
    }
}
