//! Markdown calculation reports and number formatting.

use std::fmt::Write as _;

use geocard_core::card::MethodCard;
use geocard_core::ec7::{DesignComparison, DesignResult, UlsCheckResult};
use geocard_core::engine::EvaluationTrace;

/// Formats `x` to four significant figures, in fixed notation for
/// magnitudes between 1e-3 and 1e6 and scientific notation otherwise.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.3e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-3..6).contains(&exp) {
        let decimals = (3 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

fn unit_suffix(unit: &str) -> String {
    if unit == "dimensionless" {
        String::new()
    } else {
        format!(" {unit}")
    }
}

pub fn evaluation_report(card: &MethodCard, trace: &EvaluationTrace) -> String {
    let variant_title = card
        .variant(&trace.request.variant_id)
        .map_or(trace.request.variant_id.as_str(), |(_, v)| v.title.as_str());
    let mut out = String::new();
    let _ = writeln!(out, "# {}\n", card.title);
    let _ = writeln!(out, "Card `{}`, variant `{}` ({variant_title}).\n", card.id, trace.request.variant_id);

    out.push_str("## Inputs\n\n| Symbol | Description | Given | Value |\n|---|---|---|---|\n");
    for (key, value) in &trace.request.normalized {
        let given = trace
            .request
            .inputs
            .get(key)
            .or_else(|| trace.request.overrides.get(key))
            .map_or_else(|| "default".to_owned(), ToString::to_string);
        let name = card.variable(key).map_or("", |v| v.name.as_str());
        let _ = writeln!(
            out,
            "| {key} | {} | {given} | {}{} |",
            name.replace('_', " "),
            sig4(value.value),
            unit_suffix(&value.unit)
        );
    }

    out.push_str("\n## Calculation\n\n");
    for step in &trace.steps {
        let _ = writeln!(out, "{}. `{} = {}`", step.index + 1, step.target, step.expression);
        if let Some(description) = &step.description {
            let _ = writeln!(out, "   - {description}");
        }
        if let Some(condition) = &step.condition {
            let _ = writeln!(out, "   - applies when `{condition}`");
        }
        if !step.inputs.is_empty() {
            let substituted: Vec<String> = step.inputs.iter().map(|(k, v)| format!("{k} = {}", sig4(*v))).collect();
            let _ = writeln!(out, "   - with {}", substituted.join(", "));
        }
        let _ = writeln!(
            out,
            "   - **{} = {}{}**",
            step.target,
            sig4(step.result.value),
            unit_suffix(&step.result.unit)
        );
    }
    for cycle in &trace.diagnostics.cycles {
        let _ = writeln!(
            out,
            "\nCoupled variables {} solved iteratively in {} iterations (residual {}).",
            cycle.variables.join(", "),
            cycle.iterations,
            sig4(cycle.residual)
        );
    }

    out.push_str("\n## Results\n\n| Output | Value |\n|---|---|\n");
    for (key, value) in &trace.outputs {
        let _ = writeln!(out, "| {key} | {}{} |", sig4(value.value), unit_suffix(&value.unit));
    }

    for (heading, items) in [("Assumptions", &card.assumptions), ("Applicability", &card.applicability)] {
        if !items.is_empty() {
            let _ = writeln!(out, "\n## {heading}\n");
            for item in items {
                let _ = writeln!(out, "- {item}");
            }
        }
    }

    out.push_str("\n## Sources\n\n");
    for (i, source) in trace.sources.iter().enumerate() {
        match &source.url {
            Some(url) => {
                let _ = writeln!(out, "{}. {} <{url}>", i + 1, source.title);
            }
            None => {
                let _ = writeln!(out, "{}. {}", i + 1, source.title);
            }
        }
    }
    out
}

pub fn check_text(c: &UlsCheckResult) -> String {
    let p = &c.design_parameters;
    let mut out = String::new();
    let _ = writeln!(out, "Design Approach {} ({})", c.design_approach, c.design_approach.combination());
    let _ = writeln!(out, "B = {} m, B' = {} m, L = {} m", sig4(c.b), sig4(p.b_eff), sig4(p.l));
    let _ = writeln!(
        out,
        "phi'_d = {} deg, c'_d = {} kPa, gamma = {} kN/m^3, q = {} kPa",
        sig4(p.phi_prime_d_deg),
        sig4(p.c_prime_d),
        sig4(p.gamma_eff),
        sig4(p.q)
    );
    let _ = writeln!(out, "V_d = {} kN", sig4(c.v_d));
    let _ = writeln!(out, "R_d = {} kN", sig4(c.r_d));
    let _ = writeln!(
        out,
        "utilization = {} ({})",
        sig4(c.utilization),
        if c.pass { "PASS" } else { "FAIL" }
    );
    out
}

pub fn design_text(r: &DesignResult) -> String {
    let mut out = format!(
        "Required width B = {} m after {} bisection steps{}\n\n",
        sig4(r.b_req),
        r.iterations,
        if r.converged { "" } else { " (tolerance not reached)" }
    );
    out.push_str(&check_text(&r.check));
    out
}

pub fn comparison_table(c: &DesignComparison) -> String {
    let mut out = String::from(
        "| Design Approach | Sets | B_req (m) | V_d (kN) | R_d (kN) | utilization |\n|---|---|---|---|---|---|\n",
    );
    for r in &c.results {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            r.design_approach,
            r.design_approach.combination(),
            sig4(r.b_req),
            sig4(r.check.v_d),
            sig4(r.check.r_d),
            sig4(r.check.utilization)
        );
    }
    let _ = writeln!(out, "\nDA1 is governed by {}: B = {} m", c.da1_governing, sig4(c.b_req_da1));
    out
}
