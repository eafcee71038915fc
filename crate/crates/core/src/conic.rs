//! Standard-form conic programs: a linear objective over free scalars,
//! nonnegative scalars and symmetric PSD blocks, subject to linear equalities.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RoaError};

/// Reference to one scalar decision variable.
///
/// For PSD entries `row >= col`; an off-diagonal coefficient `c` contributes
/// `c * X[row, col]` (the entry is counted once, not once per triangle).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    Free(usize),
    Nonneg(usize),
    Psd { block: usize, row: usize, col: usize },
}

impl Var {
    /// PSD entry with the indices put in lower-triangular order.
    pub fn psd(block: usize, i: usize, j: usize) -> Var {
        let (row, col) = if i >= j { (i, j) } else { (j, i) };
        Var::Psd { block, row, col }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// One equality row `sum(coef * var) = rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(Var, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub n_free: usize,
    pub n_nonneg: usize,
    pub psd_orders: Vec<usize>,
    pub rows: Vec<Constraint>,
    pub objective: Vec<(Var, f64)>,
    pub sense: Sense,
}

impl ConicProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            n_free: 0,
            n_nonneg: 0,
            psd_orders: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            sense,
        }
    }

    /// Declares `count` free scalars and returns the index of the first.
    pub fn add_free(&mut self, count: usize) -> usize {
        self.n_free += count;
        self.n_free - count
    }

    pub fn add_nonneg(&mut self, count: usize) -> usize {
        self.n_nonneg += count;
        self.n_nonneg - count
    }

    /// Declares a PSD block of the given order and returns its index.
    pub fn add_psd(&mut self, order: usize) -> usize {
        self.psd_orders.push(order);
        self.psd_orders.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(Var, f64)>, rhs: f64) -> usize {
        self.rows.push(Constraint { terms, rhs });
        self.rows.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Total number of scalar unknowns (PSD blocks counted by their triangle).
    pub fn n_scalars(&self) -> usize {
        self.n_free + self.n_nonneg + self.psd_orders.iter().map(|n| n * (n + 1) / 2).sum::<usize>()
    }

    fn check_var(&self, v: Var) -> Result<()> {
        let ok = match v {
            Var::Free(i) => i < self.n_free,
            Var::Nonneg(i) => i < self.n_nonneg,
            Var::Psd { block, row, col } => block < self.psd_orders.len() && row < self.psd_orders[block] && col <= row,
        };
        if ok {
            Ok(())
        } else {
            Err(RoaError::InvalidInput(format!("undeclared variable {v:?}")))
        }
    }

    /// Every referenced variable must be declared and every block nonempty.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.psd_orders.iter().position(|&n| n == 0) {
            return Err(RoaError::InvalidInput(format!("PSD block {i} has order 0")));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(RoaError::InvalidInput(format!("row {i} has a non-finite right side")));
            }
            for &(v, c) in &r.terms {
                self.check_var(v)?;
                if !c.is_finite() {
                    return Err(RoaError::InvalidInput(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        for &(v, _) in &self.objective {
            self.check_var(v)?;
        }
        Ok(())
    }
}
