//! Solver-independent linear programs, LP text export and a standalone
//! feasibility checker.

use std::fmt::Write as _;
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub obj: f64,
}

/// `lo <= sum coeffs <= hi`; infinite bounds mark one-sided rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// A minimization problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpModel {
    pub vars: Vec<Variable>,
    pub rows: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Bound { var: VarId, value: f64, lb: f64, ub: f64 },
    Row { row: RowId, activity: f64, lo: f64, hi: f64 },
}

impl Violation {
    pub fn amount(&self) -> f64 {
        match *self {
            Violation::Bound { value, lb, ub, .. } => (lb - value).max(value - ub),
            Violation::Row { activity, lo, hi, .. } => (lo - activity).max(activity - hi),
        }
    }
}

impl LpModel {
    pub fn add_var(&mut self, name: String, lb: f64, ub: f64, obj: f64) -> VarId {
        self.vars.push(Variable { name, lb, ub, obj });
        VarId(self.vars.len() - 1)
    }

    pub fn add_row(&mut self, name: String, coeffs: Vec<(VarId, f64)>, lo: f64, hi: f64) -> RowId {
        self.rows.push(Constraint { name, coeffs, lo, hi });
        RowId(self.rows.len() - 1)
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, x)| v.obj * x).sum()
    }

    pub fn activity(&self, row: RowId, x: &[f64]) -> f64 {
        self.rows[row.0].coeffs.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Every bound or row violated by more than `tol` (absolute, scaled by
    /// `max(1, |bound|)` for rows).
    pub fn check(&self, x: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if x.len() != self.vars.len() {
            out.push(Violation::Bound {
                var: VarId(x.len()),
                value: f64::NAN,
                lb: 0.0,
                ub: 0.0,
            });
            return out;
        }
        for (i, (v, &value)) in self.vars.iter().zip(x).enumerate() {
            if !(value >= v.lb - tol && value <= v.ub + tol) {
                out.push(Violation::Bound {
                    var: VarId(i),
                    value,
                    lb: v.lb,
                    ub: v.ub,
                });
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            let activity = self.activity(RowId(i), x);
            let lo_tol = tol * r.lo.abs().max(1.0);
            let hi_tol = tol * r.hi.abs().max(1.0);
            if !(activity >= r.lo - lo_tol && activity <= r.hi + hi_tol) {
                out.push(Violation::Row {
                    row: RowId(i),
                    activity,
                    lo: r.lo,
                    hi: r.hi,
                });
            }
        }
        out
    }

    /// CPLEX LP format. Ranged rows are written as two one-sided rows.
    pub fn write_lp<W: Write>(&self, mut out: W) -> io::Result<()> {
        let term = |buf: &mut String, c: f64, name: &str| {
            let sign = if c < 0.0 { '-' } else { '+' };
            let _ = write!(buf, " {sign} {} {name}", c.abs());
        };
        let mut line = String::new();
        writeln!(out, "Minimize")?;
        line.push_str(" obj:");
        let mut any = false;
        for v in self.vars.iter().filter(|v| v.obj != 0.0) {
            term(&mut line, v.obj, &v.name);
            any = true;
        }
        if !any {
            line.push_str(" 0");
        }
        writeln!(out, "{line}")?;
        writeln!(out, "Subject To")?;
        for r in &self.rows {
            let mut expr = String::new();
            for &(v, c) in &r.coeffs {
                term(&mut expr, c, &self.vars[v.0].name);
            }
            if expr.is_empty() {
                expr.push_str(" 0 ");
                expr.push_str(self.vars.first().map_or("x", |v| v.name.as_str()));
            }
            if r.lo == r.hi {
                writeln!(out, " {}:{expr} = {}", r.name, r.hi)?;
                continue;
            }
            if r.lo.is_finite() {
                let suffix = if r.hi.is_finite() { "_lo" } else { "" };
                writeln!(out, " {}{suffix}:{expr} >= {}", r.name, r.lo)?;
            }
            if r.hi.is_finite() {
                let suffix = if r.lo.is_finite() { "_hi" } else { "" };
                writeln!(out, " {}{suffix}:{expr} <= {}", r.name, r.hi)?;
            }
        }
        writeln!(out, "Bounds")?;
        for v in &self.vars {
            let lb = if v.lb.is_finite() { v.lb.to_string() } else { "-inf".into() };
            let ub = if v.ub.is_finite() { v.ub.to_string() } else { "+inf".into() };
            writeln!(out, " {lb} <= {} <= {ub}", v.name)?;
        }
        writeln!(out, "End")
    }
}
