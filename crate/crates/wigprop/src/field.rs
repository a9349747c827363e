//! Rectangular cell-centred sampling of real phase-space functions.

use crate::error::{invalid, Result};
use crate::model::PhasePoint;
use serde::{Deserialize, Serialize};

/// Cells of size dp×dq; sample i sits at p_min + (i + ½)·dp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub nq: usize,
}

impl GridSpec {
    pub fn new(p_range: (f64, f64), np: usize, q_range: (f64, f64), nq: usize) -> Result<Self> {
        let g = GridSpec { p_min: p_range.0, p_max: p_range.1, np, q_min: q_range.0, q_max: q_range.1, nq };
        g.validate()?;
        Ok(g)
    }

    /// Square window of half-width `half` with n×n cells centred on `c`.
    pub fn centered(c: PhasePoint, half_p: f64, half_q: f64, np: usize, nq: usize) -> Result<Self> {
        Self::new((c.p - half_p, c.p + half_p), np, (c.q - half_q, c.q + half_q), nq)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.p_min, self.p_max, self.q_min, self.q_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return invalid("grid ranges must be finite");
        }
        if self.np == 0 || self.nq == 0 {
            return invalid("grid needs at least one cell per axis");
        }
        if !(self.p_max > self.p_min && self.q_max > self.q_min) {
            return invalid("grid ranges must have positive width");
        }
        Ok(())
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.np as f64
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / self.nq as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dp() * self.dq()
    }

    pub fn p(&self, i: usize) -> f64 {
        self.p_min + (i as f64 + 0.5) * self.dp()
    }

    pub fn q(&self, j: usize) -> f64 {
        self.q_min + (j as f64 + 0.5) * self.dq()
    }

    pub fn point(&self, i: usize, j: usize) -> PhasePoint {
        PhasePoint::new(self.p(i), self.q(j))
    }

    pub fn len(&self) -> usize {
        self.np * self.nq
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.np + i
    }

    pub fn center(&self) -> PhasePoint {
        PhasePoint::new(0.5 * (self.p_min + self.p_max), 0.5 * (self.q_min + self.q_max))
    }

    /// Cell containing r, if inside the grid.
    pub fn cell_of(&self, r: &PhasePoint) -> Option<(usize, usize)> {
        let fi = (r.p - self.p_min) / self.dp();
        let fj = (r.q - self.q_min) / self.dq();
        if fi < 0.0 || fj < 0.0 || fi >= self.np as f64 || fj >= self.nq as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// Fractional sample coordinates (sample i at integer i).
    pub fn frac_index(&self, r: &PhasePoint) -> (f64, f64) {
        ((r.p - self.p_min) / self.dp() - 0.5, (r.q - self.q_min) / self.dq() - 0.5)
    }

    pub fn same_as(&self, o: &GridSpec) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.np == o.np
            && self.nq == o.nq
            && close(self.p_min, o.p_min)
            && close(self.p_max, o.p_max)
            && close(self.q_min, o.q_min)
            && close(self.q_max, o.q_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Frame {
    Absolute,
    /// Coordinates relative to a centre point (for instance r_cl(t)).
    Local { center: PhasePoint },
    /// Scaled co-moving coordinates (η, ξ) stored in the (p, q) slots.
    Scaled { center: PhasePoint, mu: f64 },
}

impl Frame {
    pub fn describe(&self) -> String {
        match self {
            Frame::Absolute => "absolute".to_string(),
            Frame::Local { center } => format!("local {:.17e} {:.17e}", center.p, center.q),
            Frame::Scaled { center, mu } => {
                format!("scaled {:.17e} {:.17e} {:.17e}", center.p, center.q, mu)
            }
        }
    }

    pub fn parse(s: &str) -> Result<Frame> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .and_then(|x| x.parse::<f64>().ok())
                .ok_or_else(|| crate::Error::InvalidArgument(format!("bad frame line '{s}'")))
        };
        match parts.first().copied() {
            Some("absolute") => Ok(Frame::Absolute),
            Some("local") => Ok(Frame::Local { center: PhasePoint::new(num(1)?, num(2)?) }),
            Some("scaled") => Ok(Frame::Scaled { center: PhasePoint::new(num(1)?, num(2)?), mu: num(3)? }),
            _ => invalid(format!("unknown frame '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub frame: Frame,
}

impl PhaseSpaceField {
    pub fn zeros(grid: GridSpec) -> Self {
        PhaseSpaceField { grid, values: vec![0.0; grid.len()], frame: Frame::Absolute }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(PhasePoint) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.nq {
            for i in 0..grid.np {
                out.values[grid.index(i, j)] = f(grid.point(i, j));
            }
        }
        out
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Σ value · cell area.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn abs_mass(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn l2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cell of largest |value|; first one in storage order on ties.
    pub fn argmax_abs(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if v.abs() > self.values[best].abs() {
                best = k;
            }
        }
        (best % self.grid.np, best / self.grid.np)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear interpolation between cell centres; zero outside the samples.
    pub fn sample(&self, r: &PhasePoint) -> f64 {
        let g = &self.grid;
        let (fi, fj) = g.frac_index(r);
        if fi < 0.0 || fj < 0.0 || fi > (g.np - 1) as f64 || fj > (g.nq - 1) as f64 {
            return 0.0;
        }
        let i0 = (fi.floor() as usize).min(g.np.saturating_sub(2));
        let j0 = (fj.floor() as usize).min(g.nq.saturating_sub(2));
        let (wi, wj) = (fi - i0 as f64, fj - j0 as f64);
        let at = |i: usize, j: usize| if i < g.np && j < g.nq { self.get(i, j) } else { 0.0 };
        (1.0 - wi) * (1.0 - wj) * at(i0, j0)
            + wi * (1.0 - wj) * at(i0 + 1, j0)
            + (1.0 - wi) * wj * at(i0, j0 + 1)
            + wi * wj * at(i0 + 1, j0 + 1)
    }

    /// Spreads a point mass over the four surrounding cell centres with
    /// bilinear weights; parts landing outside the grid are discarded.
    pub fn deposit(&mut self, r: &PhasePoint, mass: f64) {
        let g = self.grid;
        let (fi, fj) = g.frac_index(r);
        let (i0, j0) = (fi.floor(), fj.floor());
        let (wi, wj) = (fi - i0, fj - j0);
        let inv_area = 1.0 / g.cell_area();
        for (di, wx) in [(0, 1.0 - wi), (1, wi)] {
            for (dj, wy) in [(0, 1.0 - wj), (1, wj)] {
                let (i, j) = (i0 as i64 + di, j0 as i64 + dj);
                if i < 0 || j < 0 || i >= g.np as i64 || j >= g.nq as i64 {
                    continue;
                }
                let w = wx * wy;
                if w != 0.0 {
                    let k = g.index(i as usize, j as usize);
                    self.values[k] += mass * w * inv_area;
                }
            }
        }
    }

    /// Fraction of Σ|value| inside the (2h+1)×(2h+1) block around a cell.
    pub fn block_fraction(&self, center: (usize, usize), h: usize) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let g = &self.grid;
        let mut inside = 0.0;
        for j in center.1.saturating_sub(h)..=(center.1 + h).min(g.nq - 1) {
            for i in center.0.saturating_sub(h)..=(center.0 + h).min(g.np - 1) {
                inside += self.get(i, j).abs();
            }
        }
        inside / total
    }

    /// |value|-weighted RMS distance from a point.
    pub fn rms_radius(&self, about: &PhasePoint) -> f64 {
        let g = &self.grid;
        let (mut w, mut acc) = (0.0, 0.0);
        for j in 0..g.nq {
            for i in 0..g.np {
                let a = self.get(i, j).abs();
                let d = g.point(i, j).sub(about);
                w += a;
                acc += a * (d.p * d.p + d.q * d.q);
            }
        }
        if w == 0.0 {
            0.0
        } else {
            (acc / w).sqrt()
        }
    }

    /// |value|-weighted variance of the projection onto a unit direction.
    pub fn directional_variance(&self, about: &PhasePoint, dir: [f64; 2]) -> f64 {
        let g = &self.grid;
        let (mut w, mut acc) = (0.0, 0.0);
        for j in 0..g.nq {
            for i in 0..g.np {
                let a = self.get(i, j).abs();
                let d = g.point(i, j).sub(about);
                let x = d.p * dir[0] + d.q * dir[1];
                w += a;
                acc += a * x * x;
            }
        }
        if w == 0.0 {
            0.0
        } else {
            acc / w
        }
    }

    /// Σ over q of value·dq, one entry per p column.
    pub fn p_marginal(&self) -> Vec<f64> {
        let g = &self.grid;
        (0..g.np).map(|i| (0..g.nq).map(|j| self.get(i, j)).sum::<f64>() * g.dq()).collect()
    }

    pub fn q_marginal(&self) -> Vec<f64> {
        let g = &self.grid;
        (0..g.nq).map(|j| (0..g.np).map(|i| self.get(i, j)).sum::<f64>() * g.dp()).collect()
    }
}
