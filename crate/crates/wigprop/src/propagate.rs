//! Evolution of Wigner functions by any propagator kernel.

use crate::error::{invalid, Result};
use crate::field::{GridSpec, PhaseSpaceField};
use crate::model::PhasePoint;

/// A kernel G(r″, r′, t) that can be evaluated one r′ column at a time.
pub trait PropagatorSource {
    fn name(&self) -> &'static str;

    /// G(·, r′, t) sampled on `grid`.
    fn column(&self, r_prime: PhasePoint, grid: &GridSpec) -> Result<PhaseSpaceField>;

    /// Rejects grids the source cannot serve.
    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        grid.validate()
    }

    /// Σ_cells G(·, r′) W(r′) dA on the field's own grid.
    fn propagate(&self, field: &PhaseSpaceField) -> Result<PhaseSpaceField> {
        let grid = field.grid;
        let peak = field.max_abs();
        let da = grid.cell_area();
        let mut out = PhaseSpaceField::zeros(grid);
        for j in 0..grid.nq {
            for i in 0..grid.np {
                let w = field.get(i, j);
                if w.abs() <= 1e-14 * peak {
                    continue;
                }
                let col = self.column(grid.point(i, j), &grid)?;
                for (o, g) in out.values.iter_mut().zip(&col.values) {
                    *o += g * w * da;
                }
            }
        }
        Ok(out)
    }
}

/// W(r″, t) = ∫d²r′ G(r″, r′, t) W(r′) by cell quadrature on the input grid.
pub fn propagate_wigner(field: &PhaseSpaceField, source: &dyn PropagatorSource) -> Result<PhaseSpaceField> {
    if !field.all_finite() {
        return invalid("input field has non-finite values");
    }
    if field.values.len() != field.grid.len() {
        return invalid("field values do not match its grid");
    }
    source.check_grid(&field.grid)?;
    source.propagate(field)
}
