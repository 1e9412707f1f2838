//! Text and JSON renderings of a solve.

use std::fmt::Write as _;

use nalgebra::DVector;
use qcls_core::{Sense, SolveReport};
use serde_json::{json, Map, Value};

/// Finite floats as numbers, the rest as strings (`"inf"`, `"-inf"`, `"nan"`).
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(format!("{v}"))
    }
}

pub fn vector(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

pub fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

fn sense_label(s: Sense) -> &'static str {
    match s {
        Sense::Equality => "eq",
        Sense::LessEqual => "le",
    }
}

/// Points along the approach path when the infimum is not attained.
pub fn approach_points(rep: &SolveReport) -> Vec<DVector<f64>> {
    match &rep.solution.approach {
        Some(path) => [1e-2, 1e-4, 1e-6]
            .iter()
            .flat_map(|&eta| path.points_below(eta, 1))
            .collect(),
        None => Vec::new(),
    }
}

fn trace_json(rep: &SolveReport) -> Value {
    Value::Array(
        rep.trace
            .iter()
            .map(|t| {
                let margins: Map<String, Value> = t.margins.iter().map(|(k, v)| (k.clone(), num(*v))).collect();
                json!({ "stage": t.stage, "decision": t.decision, "margins": margins })
            })
            .collect(),
    )
}

pub fn to_json(rep: &SolveReport, samples: &[DVector<f64>]) -> Value {
    let mut out = Map::new();
    out.insert("infimum".into(), num(rep.infimum()));
    out.insert("attained".into(), json!(rep.attained()));
    out.insert("sense".into(), json!(sense_label(rep.sense)));
    out.insert("n".into(), json!(rep.n));
    out.insert("rank".into(), json!(rep.rank));
    out.insert("set".into(), json!(rep.solution.kind()));
    out.insert("labels".into(), json!(rep.labels()));
    out.insert(
        "representative".into(),
        rep.representative().map(|x| vector(&x)).unwrap_or(Value::Null),
    );
    out.insert("samples".into(), Value::Array(samples.iter().map(vector).collect()));
    if !rep.attained() {
        out.insert(
            "approach".into(),
            Value::Array(approach_points(rep).iter().map(vector).collect()),
        );
    }
    out.insert("lambda".into(), rep.lambda().map(num).unwrap_or(Value::Null));
    if let Some(c) = rep.canonical_stage() {
        out.insert(
            "canonical".into(),
            json!({
                "negated": c.negated,
                "gammas": c.data.gammas.iter().map(|&g| num(g)).collect::<Vec<_>>(),
                "multiplicities": c.data.multiplicities,
                "delta": c.data.delta.iter().map(|&d| num(d)).collect::<Vec<_>>(),
                "epsilon": num(c.data.epsilon),
                "k_star": num(c.data.k_star),
                "lagrangian": c.outcome.class.kind.label(),
                "branch": c.outcome.branch.label(),
                "f_lo": num(c.outcome.f_lo),
                "f_hi": num(c.outcome.f_hi),
            }),
        );
    }
    if let Some(p) = &rep.psd {
        let c = &p.classification;
        out.insert(
            "psd".into(),
            json!({
                "case": c.case.label(),
                "branch": c.branch.label(),
                "k1": num(c.k1),
                "k1_margin": num(c.k1_margin),
                "c0_margin": num(c.c0_margin),
                "c10_margin": num(c.c10_margin),
            }),
        );
    }
    out.insert("trace".into(), trace_json(rep));
    if let Some(p) = &rep.projected {
        out.insert("projected_trace".into(), trace_json(p));
    }
    out.insert(
        "min_margin".into(),
        match rep.min_margin() {
            Some((name, v)) => json!({ "name": name, "value": num(v) }),
            None => Value::Null,
        },
    );
    out.insert("warnings".into(), json!(rep.warnings));
    Value::Object(out)
}

fn write_trace(s: &mut String, rep: &SolveReport, indent: &str) {
    for t in &rep.trace {
        let _ = write!(s, "{indent}{}: {}", t.stage, t.decision);
        if !t.margins.is_empty() {
            let m: Vec<String> = t.margins.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
            let _ = write!(s, " [{}]", m.join(", "));
        }
        s.push('\n');
    }
    if let Some(p) = &rep.projected {
        let _ = writeln!(s, "{indent}projected problem:");
        write_trace(s, p, &format!("{indent}  "));
    }
}

pub fn to_text(rep: &SolveReport, samples: &[DVector<f64>]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "L = {}", rep.infimum());
    let _ = writeln!(s, "attained = {}", rep.attained());
    let _ = writeln!(s, "sense = {}", sense_label(rep.sense));
    let _ = writeln!(s, "set = {}", rep.solution.kind());
    if let Some(x) = rep.representative() {
        let _ = writeln!(s, "x = {}", fmt_vec(&x));
    }
    if let Some(l) = rep.lambda() {
        let _ = writeln!(s, "lambda = {l}");
    }
    let labels = rep.labels();
    if !labels.is_empty() {
        let _ = writeln!(s, "classification: {}", labels.join("; "));
    }
    if let Some((name, v)) = rep.min_margin() {
        let _ = writeln!(s, "smallest margin: {name} = {v:.3e}");
    }
    s.push_str("trace:\n");
    write_trace(&mut s, rep, "  ");
    if rep.attained() {
        let _ = writeln!(s, "samples ({}):", samples.len());
        for x in samples {
            let _ = writeln!(s, "  {}", fmt_vec(x));
        }
    } else {
        s.push_str("approach (loss below 1e-2, 1e-4, 1e-6):\n");
        for x in approach_points(rep) {
            let _ = writeln!(s, "  {}", fmt_vec(&x));
        }
    }
    for w in &rep.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
