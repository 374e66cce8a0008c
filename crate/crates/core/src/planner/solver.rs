use std::time::Instant;

use highs::{ColProblem, HighsModelStatus, Sense};

use super::lp::LpModel;
use super::PlannerError;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub solve_ms: f64,
}

pub trait LpSolver {
    fn solve(&self, model: &LpModel) -> Result<LpSolution, PlannerError>;
}

/// HiGHS dual simplex on one thread with fixed settings, so identical models
/// give identical solutions.
#[derive(Debug, Clone, Copy)]
pub struct HighsSolver {
    pub feasibility_tol: f64,
}

impl Default for HighsSolver {
    fn default() -> Self {
        HighsSolver {
            feasibility_tol: 1e-9,
        }
    }
}

impl LpSolver for HighsSolver {
    fn solve(&self, model: &LpModel) -> Result<LpSolution, PlannerError> {
        let start = Instant::now();
        if model.vars.is_empty() {
            return Ok(LpSolution {
                x: Vec::new(),
                objective: 0.0,
                solve_ms: 0.0,
            });
        }
        let mut columns: Vec<Vec<(highs::Row, f64)>> = vec![Vec::new(); model.vars.len()];
        let mut pb = ColProblem::default();
        for r in &model.rows {
            let row = pb.add_row(r.lo..=r.hi);
            for &(v, c) in &r.coeffs {
                columns[v.0].push((row, c));
            }
        }
        for (v, col) in model.vars.iter().zip(&columns) {
            pb.add_column(v.obj, v.lb..=v.ub, col);
        }
        let mut m = pb.optimise(Sense::Minimise);
        m.set_option("output_flag", false);
        m.set_option("threads", 1);
        m.set_option("solver", "simplex");
        m.set_option("simplex_strategy", 1);
        m.set_option("presolve", "on");
        m.set_option("random_seed", 0);
        m.set_option("primal_feasibility_tolerance", self.feasibility_tol);
        m.set_option("dual_feasibility_tolerance", self.feasibility_tol);
        let solved = m
            .try_solve()
            .map_err(|s| PlannerError::Solver(format!("HiGHS run failed: {s:?}")))?;
        let status = solved.status();
        if status != HighsModelStatus::Optimal {
            return Err(PlannerError::Solver(format!(
                "HiGHS status {status:?} on a model with {} variables and {} rows",
                model.vars.len(),
                model.rows.len()
            )));
        }
        let x: Vec<f64> = solved
            .get_solution()
            .columns()
            .iter()
            .zip(&model.vars)
            .map(|(&x, v)| x.clamp(v.lb, v.ub))
            .collect();
        Ok(LpSolution {
            objective: model.objective(&x),
            x,
            solve_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_has_zero_objective() {
        let sol = HighsSolver::default().solve(&LpModel::default()).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.x.is_empty());
    }

    #[test]
    fn small_lp() {
        // min x + 2y  s.t.  x + y >= 1, x <= 0.25
        let mut m = LpModel::default();
        let x = m.add_var("x".into(), 0.0, 0.25, 1.0);
        let y = m.add_var("y".into(), 0.0, 10.0, 2.0);
        m.add_row("c".into(), vec![(x, 1.0), (y, 1.0)], 1.0, f64::INFINITY);
        let sol = HighsSolver::default().solve(&m).unwrap();
        assert!((sol.objective - 1.75).abs() < 1e-9);
        assert!(m.check(&sol.x, 1e-9).is_empty());
    }

    #[test]
    fn infeasible_is_an_error() {
        let mut m = LpModel::default();
        let x = m.add_var("x".into(), 0.0, 1.0, 1.0);
        m.add_row("c".into(), vec![(x, 1.0)], 2.0, 3.0);
        assert!(matches!(
            HighsSolver::default().solve(&m),
            Err(PlannerError::Solver(_))
        ));
    }
}
