//! Secular curve export.

use std::fmt::Write as _;

use qcls_core::canonical::{secular_f, SecularContext};
use qcls_core::{SolveReport, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Grid {
    /// Parses `lo:hi:steps`; `steps` is the number of grid points.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::Usage(format!("grid '{s}' is not lo:hi:steps"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !lo.is_finite() || !hi.is_finite() || hi < lo || steps == 0 {
            return Err(bad());
        }
        Ok(Self { lo, hi, steps })
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.steps;
        (0..m).map(move |i| {
            if m == 1 {
                self.lo
            } else {
                let s = i as f64 / (m - 1) as f64;
                self.lo * (1.0 - s) + self.hi * s
            }
        })
    }
}

fn near_pole(lambda: f64, pole: f64, guard: f64) -> bool {
    pole.is_finite() && (lambda - pole).abs() <= guard * pole.abs() + 1e-12
}

/// CSV of `(lambda, f)` over the grid points inside the admissible interior.
pub fn secular_csv(rep: &SolveReport, grid: &Grid, cfg: &SolverConfig) -> Result<String, CliError> {
    let Some(c) = rep.canonical_stage() else {
        let why = match rep.psd_case() {
            Some(case) => format!("objective is singular and the problem is {}", case.label()),
            None => "problem never reaches the secular stage".to_string(),
        };
        return Err(CliError::NotApplicable(why));
    };
    let ctx = SecularContext::new(c.drcf.clone());
    if ctx.is_constant() {
        return Err(CliError::NotApplicable("secular function is constant".into()));
    }
    let mut s = String::new();
    let poles: Vec<String> = ctx.poles().iter().map(|p| format!("{p:.16e}")).collect();
    let _ = writeln!(s, "# poles: {}", poles.join(" "));
    let _ = writeln!(s, "# interior: ({:.16e}, {:.16e})", ctx.lambda_lo, ctx.lambda_hi);
    match rep.lambda() {
        Some(l) => {
            let _ = writeln!(s, "# lambda_hat: {l:.16e}");
        }
        None => s.push_str("# lambda_hat: none\n"),
    }
    s.push_str("lambda,f\n");
    for lambda in grid.points() {
        if near_pole(lambda, ctx.lambda_hi, cfg.pole_guard) || near_pole(lambda, ctx.lambda_lo, cfg.pole_guard) {
            continue;
        }
        if let Ok(f) = secular_f(&ctx, lambda) {
            let _ = writeln!(s, "{lambda:.16e},{f:.16e}");
        }
    }
    Ok(s)
}
