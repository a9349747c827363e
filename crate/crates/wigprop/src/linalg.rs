//! Guard against a miscomputing BLAS backend.

use crate::error::{Error, Result};
use ndarray::Array2;
use std::sync::OnceLock;

static BLAS_OK: OnceLock<bool> = OnceLock::new();

fn gemm_matches_reference() -> bool {
    let n = 300;
    let a = Array2::from_shape_fn((n, n), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
    let c = a.dot(&a.t());
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..n).map(|k| a[[i, k]] * a[[j, k]]).sum();
            if (s - c[[i, j]]).abs() > 1e-9 * (1.0 + s.abs()) {
                return false;
            }
        }
    }
    true
}

/// True when a 300×300 GEMM through the linked BLAS matches a plain loop.
/// Evaluated once per process.
pub fn blas_ok() -> bool {
    *BLAS_OK.get_or_init(gemm_matches_reference)
}

pub fn require_blas() -> Result<()> {
    if blas_ok() {
        Ok(())
    } else {
        Err(Error::Accuracy(
            "linked BLAS returns wrong matrix products; set OPENBLAS_CORETYPE (for example Haswell) and rerun".into(),
        ))
    }
}
