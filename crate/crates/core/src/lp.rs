//! Thin wrapper over the simplex solver so the metric code only sees
//! variables, rows and an optimal value.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sense {
    Maximize,
    Minimize,
}

pub(crate) struct LinearProgram {
    problem: Problem,
    vars: Vec<Variable>,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub objective: f64,
    pub values: Vec<f64>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        let direction = match sense {
            Sense::Maximize => OptimizationDirection::Maximize,
            Sense::Minimize => OptimizationDirection::Minimize,
        };
        Self { problem: Problem::new(direction), vars: Vec::new() }
    }

    /// Adds a variable with objective coefficient `obj` and box `[lo, hi]`;
    /// returns its index.
    pub fn var(&mut self, obj: f64, lo: f64, hi: f64) -> usize {
        self.vars.push(self.problem.add_var(obj, (lo, hi)));
        self.vars.len() - 1
    }

    pub fn le(&mut self, terms: &[(usize, f64)], rhs: f64) {
        self.add(terms, ComparisonOp::Le, rhs);
    }

    pub fn eq(&mut self, terms: &[(usize, f64)], rhs: f64) {
        self.add(terms, ComparisonOp::Eq, rhs);
    }

    fn add(&mut self, terms: &[(usize, f64)], op: ComparisonOp, rhs: f64) {
        let expr: Vec<(Variable, f64)> = terms.iter().map(|&(i, c)| (self.vars[i], c)).collect();
        self.problem.add_constraint(expr.as_slice(), op, rhs);
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let outcome = self.problem.solve().map_err(|e| Error::Lp(e.to_string()))?;
        let solution = outcome
            .into_solution()
            .map_err(|_| Error::Lp("solver stopped without a solution".into()))?;
        let values = self.vars.iter().map(|&v| solution.var_value(v)).collect();
        Ok(LpSolution { objective: solution.objective(), values })
    }
}
