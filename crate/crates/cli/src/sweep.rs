//! Perturbation sweeps over one problem parameter.

use std::fmt::Write as _;

use qcls_core::{solve, SolverConfig};

use crate::curve::Grid;
use crate::file::ProblemFile;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    K,
    A(usize, usize),
    B(usize, usize),
    T(usize),
    Lin(usize),
}

/// How the swept value `v` becomes the parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    /// `v + c`
    Shift(f64),
    /// `1 / v²`
    InvSquare,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Param {
    pub target: Target,
    pub transform: Transform,
}

fn parse_index(s: &str, expect: usize) -> Option<Vec<usize>> {
    let idx: Vec<usize> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    (idx.len() == expect).then_some(idx)
}

impl Param {
    /// Parses `k`, `kappa`, `A[i,j]`, `B[i,j]`, `t[i]` or `b[i]`, optionally
    /// followed by `+c` or `:inv2`. `kappa` stands for `A[n-1,n-1]+1`.
    pub fn parse(s: &str, n: usize) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::Usage(format!("parameter '{s}': {why}"));
        let s = s.trim();
        if s == "kappa" {
            return Ok(Self {
                target: Target::A(n - 1, n - 1),
                transform: Transform::Shift(1.0),
            });
        }
        let (head, transform) = if let Some(h) = s.strip_suffix(":inv2") {
            (h, Transform::InvSquare)
        } else if let Some(pos) = {
            let from = s.rfind(']').map_or(0, |p| p + 1);
            s[from..].find('+').map(|p| p + from)
        } {
            let c: f64 = s[pos + 1..].parse().map_err(|_| bad("bad shift"))?;
            (&s[..pos], Transform::Shift(c))
        } else {
            (s, Transform::Identity)
        };
        let target = if head == "k" {
            Target::K
        } else {
            let open = head.find('[').ok_or_else(|| bad("unknown parameter"))?;
            let inner = head[open + 1..].strip_suffix(']').ok_or_else(|| bad("missing ']'"))?;
            let name = &head[..open];
            let target = match name {
                "A" | "B" => {
                    let idx = parse_index(inner, 2).ok_or_else(|| bad("expected two indices"))?;
                    if name == "A" {
                        Target::A(idx[0], idx[1])
                    } else {
                        Target::B(idx[0], idx[1])
                    }
                }
                "t" | "b" => {
                    let idx = parse_index(inner, 1).ok_or_else(|| bad("expected one index"))?;
                    if name == "t" {
                        Target::T(idx[0])
                    } else {
                        Target::Lin(idx[0])
                    }
                }
                _ => return Err(bad("unknown parameter")),
            };
            let out_of_range = match target {
                Target::A(i, j) | Target::B(i, j) => i >= n || j >= n,
                Target::T(i) | Target::Lin(i) => i >= n,
                Target::K => false,
            };
            if out_of_range {
                return Err(bad("index out of range"));
            }
            target
        };
        Ok(Self { target, transform })
    }

    pub fn value(&self, v: f64) -> f64 {
        match self.transform {
            Transform::Identity => v,
            Transform::Shift(c) => v + c,
            Transform::InvSquare => 1.0 / (v * v),
        }
    }

    /// Copy of `file` with the parameter set from the swept value `v`.
    /// Matrix entries are set symmetrically.
    pub fn apply(&self, file: &ProblemFile, v: f64) -> ProblemFile {
        let mut f = file.clone();
        let x = self.value(v);
        match self.target {
            Target::K => f.k = x,
            Target::A(i, j) => {
                f.a[i][j] = x;
                f.a[j][i] = x;
            }
            Target::B(i, j) => {
                f.b_mat[i][j] = x;
                f.b_mat[j][i] = x;
            }
            Target::T(i) => f.t[i] = x,
            Target::Lin(i) => f.b[i] = x,
        }
        f
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const HEADER: &str = "param,infimum,attained,set,labels,representative,min_margin_at,min_margin,error";

fn row(file: &ProblemFile, extra_cfg: &SolverConfig, v: f64) -> Vec<String> {
    let e = |msg: String| {
        vec![
            format!("{v:.16e}"),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            msg,
        ]
    };
    let p = match file.problem() {
        Ok(p) => p,
        Err(err) => return e(err.to_string()),
    };
    match solve(&p, extra_cfg) {
        Ok(rep) => {
            let x = rep
                .representative()
                .map(|x| x.iter().map(|c| format!("{c:.16e}")).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            let (at, m) = match rep.min_margin() {
                Some((name, m)) => (name, format!("{m:.16e}")),
                None => (String::new(), String::new()),
            };
            vec![
                format!("{v:.16e}"),
                format!("{:.16e}", rep.infimum()),
                rep.attained().to_string(),
                rep.solution.kind(),
                rep.labels().join(";"),
                x,
                at,
                m,
                String::new(),
            ]
        }
        Err(err) => e(err.to_string()),
    }
}

/// One CSV row per grid value; solver errors land in the `error` column.
pub fn sweep_csv(file: &ProblemFile, param: &Param, grid: &Grid, cfg: &SolverConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    for v in grid.points() {
        let fields: Vec<String> = row(&param.apply(file, v), cfg, v).iter().map(|f| csv_field(f)).collect();
        let _ = writeln!(s, "{}", fields.join(","));
    }
    s
}
