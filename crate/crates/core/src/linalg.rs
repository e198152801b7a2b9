//! Small dense solves with an explicit conditioning gate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value floor below which a design matrix is rejected.
pub(crate) const WELL_POSED_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conditioning {
    pub condition_number: f64,
    pub well_posed: bool,
}

pub(crate) fn conditioning(a: &DMatrix<f64>) -> Conditioning {
    let sv = a.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let well_posed = smax > 0.0 && smin > WELL_POSED_RATIO * smax;
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    Conditioning {
        condition_number,
        well_posed,
    }
}

/// Solves `a x = b` with full pivoting after checking conditioning.
pub(crate) fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let cond = conditioning(a);
    if !cond.well_posed {
        return Err(Error::IllPosed(format!(
            "design matrix is singular (condition number {:.3e})",
            cond.condition_number
        )));
    }
    a.clone()
        .full_piv_lu()
        .solve(b)
        .ok_or_else(|| Error::IllPosed("full-pivot LU found a zero pivot".into()))
}
