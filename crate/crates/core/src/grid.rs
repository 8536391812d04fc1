//! Truncated gap-coordinate grids and cell-mass fields.
//!
//! Each of the N gap axes is divided into M uniform cells of width h; the
//! last cell per axis is an overflow sink absorbing everything past
//! (M−1)h. Fields store cell masses (integrals of the density over the
//! cell), not point values, so conservation statements are exact sums.
//!
//! Axis 1 is slowest in the linear layout: the flat index of cell
//! (k_1, …, k_N) is k_1·M^{N−1} + … + k_N. Reductions always run in a
//! fixed order (trailing axis first, sequential within a run), so results
//! do not depend on thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("marginal index K={k} must satisfy 1 <= K <= {n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("argument out of range: {0}")]
    Argument(String),
}

/// Cap on total cells; past this the dense representation is hopeless.
const MAX_CELLS: usize = 1 << 33;

/// Uniform grid over N gap coordinates, truncated at M cells per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapGrid<T: Scalar> {
    n: usize,
    m: usize,
    h: T,
    cells: usize,
}

impl<T: Scalar> GapGrid<T> {
    pub fn new(n: usize, m: usize, h: T) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::InvalidGrid("need at least one axis".into()));
        }
        if m < 2 {
            return Err(GridError::InvalidGrid(
                "need at least one regular cell and the overflow cell".into(),
            ));
        }
        if !(h > T::zero()) || !h.is_finite() {
            return Err(GridError::InvalidGrid("cell width must be positive".into()));
        }
        let mut cells: usize = 1;
        for _ in 0..n {
            cells = cells
                .checked_mul(m)
                .filter(|&c| c <= MAX_CELLS)
                .ok_or_else(|| {
                    GridError::InvalidGrid(format!("grid too large: {m}^{n} cells"))
                })?;
        }
        Ok(Self { n, m, h, cells })
    }

    pub fn times(&self) -> usize {
        self.n
    }

    pub fn cells_per_axis(&self) -> usize {
        self.m
    }

    pub fn cell_width(&self) -> T {
        self.h
    }

    pub fn num_cells(&self) -> usize {
        self.cells
    }

    /// Cells in one slice of fixed leading index: M^{N−1}.
    pub fn block_size(&self) -> usize {
        self.cells / self.m
    }

    /// Index of the overflow cell on every axis.
    pub fn overflow_index(&self) -> usize {
        self.m - 1
    }

    /// Upper edge of the resolved (non-overflow) region per axis.
    pub fn resolved_edge(&self) -> T {
        T::from_usize_lossy(self.m - 1) * self.h
    }

    pub fn decode_into(&self, idx: usize, digits: &mut [usize]) {
        debug_assert_eq!(digits.len(), self.n);
        let mut rest = idx;
        for d in digits.iter_mut().rev() {
            *d = rest % self.m;
            rest /= self.m;
        }
    }

    /// Ages at the cell center (cumulative sums of centered gaps).
    pub fn center_ages_into(&self, digits: &[usize], ages: &mut [T]) {
        let half = T::from_f64_lossy(0.5);
        let mut acc = T::zero();
        for (a, &k) in ages.iter_mut().zip(digits) {
            acc += (T::from_usize_lossy(k) + half) * self.h;
            *a = acc;
        }
    }

    /// Same grid with the first `k` axes only.
    pub fn prefix(&self, k: usize) -> Result<Self, GridError> {
        if k == 0 || k > self.n {
            return Err(GridError::IndexOutOfRange { k, n: self.n });
        }
        Self::new(k, self.m, self.h)
    }
}

/// Initial density profiles.
#[derive(Clone, Debug)]
pub enum InitKind<T: Scalar> {
    /// Unit point mass at the given age vector.
    DiracAges(Vec<T>),
    /// Independent exponential gaps with the given rate.
    ProductExponential { rate: T },
    /// Uniform density on a gap-coordinate box Π [lo_i, hi_i).
    UniformGapBox { lo: Vec<T>, hi: Vec<T> },
}

/// Cell masses on a [`GapGrid`].
#[derive(Clone, Debug)]
pub struct DensityField<T: Scalar> {
    grid: GapGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> DensityField<T> {
    pub fn zeros(grid: GapGrid<T>) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.num_cells()],
        }
    }

    pub fn from_values(grid: GapGrid<T>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.num_cells() {
            return Err(GridError::Argument(format!(
                "expected {} cell values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::Argument("cell values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GapGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub(crate) fn swap_values(&mut self, other: &mut Vec<T>) {
        std::mem::swap(&mut self.values, other);
    }

    /// Total mass, summed in a fixed deterministic order.
    pub fn mass(&self) -> T {
        pairwise_sum(&self.values)
    }

    /// Divide by the current mass so the total is exactly renormalized.
    pub fn normalize(&mut self) -> Result<(), GridError> {
        let total = self.mass();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(GridError::Domain(format!(
                "cannot normalize field with mass {total}"
            )));
        }
        self.values.iter_mut().for_each(|v| *v = *v / total);
        Ok(())
    }

    /// Marginal over the first `k` gap axes, summing out the rest.
    ///
    /// Trailing axes are reduced one at a time, so nested marginals agree
    /// bit for bit: marginal(marginal(f, k+1), k) == marginal(f, k).
    pub fn marginal(&self, k: usize) -> Result<DensityField<T>, GridError> {
        let n = self.grid.n;
        if k == 0 || k > n {
            return Err(GridError::IndexOutOfRange { k, n });
        }
        if k == n {
            return Ok(self.clone());
        }
        let m = self.grid.m;
        let mut values = reduce_last_axis(&self.values, m);
        for _ in (k + 1)..n {
            values = reduce_last_axis(&values, m);
        }
        let grid = self.grid.prefix(k)?;
        Ok(DensityField { grid, values })
    }

    /// Weighted age moment Σ_i s_i/2^i integrated against the field, with
    /// ages at cell centers. Overflow cells use their inner edge, so the
    /// reported value is a lower bound for tail-heavy fields.
    pub fn sigma_moment(&self) -> T {
        let grid = self.grid;
        let n = grid.n;
        let m = grid.m;
        let h = grid.h;
        let half = T::from_f64_lossy(0.5);
        let two = T::from_f64_lossy(2.0);
        // sigma = Σ_j u_j (2^{1−j} − 2^{−N}), separable in the gaps.
        let tail_w = two.powi(-(n as i32));
        let weights: Vec<T> = (1..=n)
            .map(|j| two.powi(1 - (j as i32)) - tail_w)
            .collect();
        let chunk = 1 << 12;
        let partials: Vec<T> = self
            .values
            .par_chunks(chunk)
            .enumerate()
            .map(|(ci, vals)| {
                let mut digits = vec![0usize; n];
                let mut acc = T::zero();
                for (off, &v) in vals.iter().enumerate() {
                    if v == T::zero() {
                        continue;
                    }
                    grid.decode_into(ci * chunk + off, &mut digits);
                    let mut s = T::zero();
                    for (j, &k) in digits.iter().enumerate() {
                        let u = if k == m - 1 {
                            T::from_usize_lossy(k) * h
                        } else {
                            (T::from_usize_lossy(k) + half) * h
                        };
                        s += u * weights[j];
                    }
                    acc += v * s;
                }
                acc
            })
            .collect();
        pairwise_sum(&partials)
    }

    /// L¹ distance between two fields on the same grid.
    pub fn l1_distance(&self, other: &DensityField<T>) -> Result<T, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        let chunk = 1 << 12;
        let partials: Vec<T> = self
            .values
            .par_chunks(chunk)
            .zip(other.values.par_chunks(chunk))
            .map(|(a, b)| {
                let mut acc = T::zero();
                for (x, y) in a.iter().zip(b) {
                    acc += (*x - *y).abs();
                }
                acc
            })
            .collect();
        Ok(pairwise_sum(&partials))
    }

    /// Block-sum the field onto a grid coarsened by an integer factor.
    pub fn coarsen(&self, factor: usize) -> Result<DensityField<T>, GridError> {
        let m = self.grid.m;
        if factor == 0 || m % factor != 0 || m / factor < 2 {
            return Err(GridError::Argument(format!(
                "coarsening factor {factor} does not divide {m} into >= 2 cells"
            )));
        }
        let grid = GapGrid::new(self.grid.n, m / factor, self.grid.h * T::from_usize_lossy(factor))?;
        let n = self.grid.n;
        let mc = m / factor;
        let mut values = vec![T::zero(); grid.num_cells()];
        let mut digits = vec![0usize; n];
        for (idx, &v) in self.values.iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            self.grid.decode_into(idx, &mut digits);
            let mut target = 0usize;
            for &k in digits.iter() {
                target = target * mc + k / factor;
            }
            values[target] += v;
        }
        Ok(DensityField { grid, values })
    }
}

/// Sum with a fixed pairwise reduction tree (deterministic and accurate).
pub(crate) fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    if xs.len() <= 128 {
        let mut acc = T::zero();
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Sum out the last axis: contiguous runs of length m collapse to one cell.
fn reduce_last_axis<T: Scalar>(values: &[T], m: usize) -> Vec<T> {
    values
        .par_chunks(m)
        .map(|run| {
            let mut acc = T::zero();
            for &v in run {
                acc += v;
            }
            acc
        })
        .collect()
}

/// Build an initial probability field.
pub fn init_density<T: Scalar>(
    grid: &GapGrid<T>,
    kind: &InitKind<T>,
) -> Result<DensityField<T>, GridError> {
    match kind {
        InitKind::DiracAges(ages) => {
            if ages.len() != grid.n {
                return Err(GridError::Argument(format!(
                    "dirac needs {} ages, got {}",
                    grid.n,
                    ages.len()
                )));
            }
            let mut prev = T::zero();
            let mut idx = 0usize;
            for &s in ages {
                if !(s >= prev) || !s.is_finite() {
                    return Err(GridError::Domain(
                        "dirac ages must be nonnegative and nondecreasing".into(),
                    ));
                }
                let gap = s - prev;
                prev = s;
                if gap >= grid.resolved_edge() {
                    return Err(GridError::Domain(format!(
                        "dirac gap {gap} lies outside the resolved domain (< {})",
                        grid.resolved_edge()
                    )));
                }
                let k = (gap / grid.h).floor().to_f64_lossy() as usize;
                let k = k.min(grid.m - 2);
                idx = idx * grid.m + k;
            }
            let mut field = DensityField::zeros(*grid);
            field.values[idx] = T::one();
            Ok(field)
        }
        InitKind::ProductExponential { rate } => {
            if !(*rate > T::zero()) || !rate.is_finite() {
                return Err(GridError::Domain("exponential rate must be positive".into()));
            }
            let q = (-*rate * grid.h).exp();
            let mut axis = Vec::with_capacity(grid.m);
            let mut qk = T::one();
            for _ in 0..(grid.m - 1) {
                axis.push(qk * (T::one() - q));
                qk = qk * q;
            }
            axis.push(qk);
            product_field(grid, &axis)
        }
        InitKind::UniformGapBox { lo, hi } => {
            if lo.len() != grid.n || hi.len() != grid.n {
                return Err(GridError::Argument(format!(
                    "box needs {} bounds per side",
                    grid.n
                )));
            }
            for (&a, &b) in lo.iter().zip(hi) {
                if !(a >= T::zero()) || !(b > a) || !b.is_finite() {
                    return Err(GridError::Domain(
                        "box needs finite bounds with hi > lo >= 0 per axis".into(),
                    ));
                }
            }
            let mut fields = Vec::with_capacity(grid.n);
            for ax in 0..grid.n {
                let mut w = Vec::with_capacity(grid.m);
                for k in 0..grid.m {
                    let cell_lo = T::from_usize_lossy(k) * grid.h;
                    let cell_hi = if k == grid.m - 1 {
                        T::infinity()
                    } else {
                        T::from_usize_lossy(k + 1) * grid.h
                    };
                    let o_lo = lo[ax].max(cell_lo);
                    let o_hi = hi[ax].min(cell_hi);
                    w.push((o_hi - o_lo).max(T::zero()));
                }
                fields.push(w);
            }
            // Outer product axis by axis, slowest first.
            let mut values = vec![T::one()];
            for w in &fields {
                let mut next = Vec::with_capacity(values.len() * grid.m);
                for &v in &values {
                    for &x in w {
                        next.push(v * x);
                    }
                }
                values = next;
            }
            let mut field = DensityField { grid: *grid, values };
            field
                .normalize()
                .map_err(|_| GridError::Domain("box does not overlap the grid".into()))?;
            Ok(field)
        }
    }
}

/// Product field from one shared per-axis weight vector, normalized.
fn product_field<T: Scalar>(grid: &GapGrid<T>, axis: &[T]) -> Result<DensityField<T>, GridError> {
    let mut values = vec![T::one()];
    for _ in 0..grid.n {
        let mut next = Vec::with_capacity(values.len() * grid.m);
        for &v in &values {
            for &x in axis {
                next.push(v * x);
            }
        }
        values = next;
    }
    let mut field = DensityField { grid: *grid, values };
    field.normalize()?;
    Ok(field)
}

/// Coupling term E^{(K)}: for each first-K cell, the φ-tail-weighted mass
/// Σ_{i>K} ∫ φ_i dn over the trailing coordinates.
pub fn coupling_term<T: Scalar>(
    field: &DensityField<T>,
    spec: &crate::model::RateSpec<T>,
    k: usize,
) -> Result<DensityField<T>, GridError> {
    let grid = *field.grid();
    let n = grid.n;
    if k == 0 || k > n {
        return Err(GridError::IndexOutOfRange { k, n });
    }
    let out_grid = grid.prefix(k)?;
    let run = grid.num_cells() / out_grid.num_cells();
    let values: Vec<T> = (0..out_grid.num_cells())
        .into_par_iter()
        .map(|prefix| {
            let mut digits = vec![0usize; n];
            let mut ages = vec![T::zero(); n];
            let mut acc = T::zero();
            let base = prefix * run;
            for off in 0..run {
                let v = field.values[base + off];
                if v == T::zero() {
                    continue;
                }
                grid.decode_into(base + off, &mut digits);
                grid.center_ages_into(&digits, &mut ages);
                acc += v * spec.eval_tail_unchecked(&ages, k);
            }
            acc
        })
        .collect();
    Ok(DensityField {
        grid: out_grid,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RateSpec, Times};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid2(m: usize, h: f64) -> GapGrid<f64> {
        GapGrid::new(2, m, h).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GapGrid::<f64>::new(0, 10, 0.1).is_err());
        assert!(GapGrid::<f64>::new(1, 1, 0.1).is_err());
        assert!(GapGrid::<f64>::new(1, 10, 0.0).is_err());
        assert!(GapGrid::<f64>::new(12, 200, 0.1).is_err());
    }

    #[test]
    fn dirac_lands_in_gap_cell() {
        let grid = grid2(200, 0.05);
        let field = init_density(&grid, &InitKind::DiracAges(vec![1.0, 2.0])).unwrap();
        // Gaps (1, 1) → cell (20, 20).
        let idx = 20 * 200 + 20;
        assert_eq!(field.values()[idx], 1.0);
        assert_eq!(field.mass(), 1.0);
    }

    #[test]
    fn dirac_rejects_bad_ages() {
        let grid = grid2(200, 0.05);
        assert!(init_density(&grid, &InitKind::DiracAges(vec![2.0, 1.0])).is_err());
        assert!(init_density(&grid, &InitKind::DiracAges(vec![-1.0, 1.0])).is_err());
        // Gap of 11 exceeds the resolved edge 9.95.
        assert!(init_density(&grid, &InitKind::DiracAges(vec![1.0, 12.0])).is_err());
    }

    #[test]
    fn product_exponential_has_exact_cell_masses() {
        let grid = GapGrid::new(1, 50, 0.1).unwrap();
        let field = init_density(&grid, &InitKind::ProductExponential { rate: 1.0 }).unwrap();
        let q = (-0.1f64).exp();
        for k in 0..49 {
            let expect = q.powi(k as i32) * (1.0 - q);
            assert_relative_eq!(field.values()[k], expect, max_relative = 1e-12);
        }
        assert_relative_eq!(field.values()[49], q.powi(49), max_relative = 1e-12);
        assert_relative_eq!(field.mass(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn uniform_box_covers_expected_cells() {
        let grid = grid2(10, 1.0);
        let field = init_density(
            &grid,
            &InitKind::UniformGapBox {
                lo: vec![0.0, 0.0],
                hi: vec![2.0, 1.0],
            },
        )
        .unwrap();
        assert_relative_eq!(field.mass(), 1.0, epsilon = 1e-13);
        assert_relative_eq!(field.values()[0], 0.5, epsilon = 1e-13);
        assert_relative_eq!(field.values()[10], 0.5, epsilon = 1e-13);
        assert!(init_density(
            &grid,
            &InitKind::UniformGapBox {
                lo: vec![1.0, 0.0],
                hi: vec![1.0, 1.0],
            },
        )
        .is_err());
    }

    #[test]
    fn marginal_tower_is_bit_exact() {
        let grid = GapGrid::new(3, 8, 0.5).unwrap();
        let vals: Vec<f64> = (0..grid.num_cells())
            .map(|i| ((i * 2654435761) % 1000) as f64 / 1000.0)
            .collect();
        let field = DensityField::from_values(grid, vals).unwrap();
        let m21 = field.marginal(2).unwrap().marginal(1).unwrap();
        let m1 = field.marginal(1).unwrap();
        assert_eq!(m21.values(), m1.values());
        assert!(field.marginal(0).is_err());
        assert!(field.marginal(4).is_err());
    }

    #[test]
    fn sigma_moment_hand_values() {
        let grid = grid2(200, 0.05);
        let dirac = init_density(&grid, &InitKind::DiracAges(vec![1.0, 2.0])).unwrap();
        assert!((dirac.sigma_moment() - 1.0).abs() <= 0.05);
        let origin = init_density(&grid, &InitKind::DiracAges(vec![0.0, 0.0])).unwrap();
        assert!(origin.sigma_moment() <= 0.05);
        let grid1: GapGrid<f64> = GapGrid::new(1, 200, 0.05).unwrap();
        let exp = init_density(&grid1, &InitKind::ProductExponential { rate: 1.0 }).unwrap();
        assert!((exp.sigma_moment() - 0.5).abs() <= 5e-3);
    }

    #[test]
    fn l1_distance_is_a_metric_on_fields() {
        let grid = grid2(6, 0.5);
        let a = init_density(&grid, &InitKind::ProductExponential { rate: 1.0 }).unwrap();
        let b = init_density(&grid, &InitKind::DiracAges(vec![0.5, 1.5])).unwrap();
        assert_eq!(a.l1_distance(&a).unwrap(), 0.0);
        let d = a.l1_distance(&b).unwrap();
        assert_relative_eq!(d, b.l1_distance(&a).unwrap(), epsilon = 1e-15);
        assert!(d > 0.0 && d <= 2.0 + 1e-12);
        let other = GapGrid::new(2, 7, 0.5).unwrap();
        let c = DensityField::zeros(other);
        assert!(matches!(a.l1_distance(&c), Err(GridError::GridMismatch)));
    }

    #[test]
    fn coupling_term_for_constant_components_is_exact() {
        // φ_i ≡ 2^{-i} up to 3: E^{(1)} = (1/4 + 1/8)·marginal.
        let spec = RateSpec::constants(&[0.5, 0.25, 0.125]).unwrap();
        let grid = GapGrid::new(3, 6, 0.5).unwrap();
        let field = init_density(&grid, &InitKind::ProductExponential { rate: 1.0 }).unwrap();
        let e = coupling_term(&field, &spec, 1).unwrap();
        let marg = field.marginal(1).unwrap();
        let eps = spec.tail_norm(1, Times::Finite(3)).unwrap();
        for (ev, mv) in e.values().iter().zip(marg.values()) {
            assert_relative_eq!(*ev, eps * mv, max_relative = 1e-13);
        }
    }

    #[test]
    fn coupling_term_sandwich() {
        let spec = RateSpec::clamped_identity(1.0, 1.4, 1.0).unwrap();
        let grid = GapGrid::new(3, 6, 0.5).unwrap();
        let field = init_density(&grid, &InitKind::ProductExponential { rate: 0.7 }).unwrap();
        let e = coupling_term(&field, &spec, 2).unwrap();
        let marg = field.marginal(2).unwrap();
        let eps = spec.tail_norm(2, Times::Finite(3)).unwrap();
        let mut total = 0.0;
        for (ev, mv) in e.values().iter().zip(marg.values()) {
            assert!(*ev >= -1e-15);
            assert!(*ev <= eps * mv + 1e-12);
            total += *ev;
        }
        assert!(total <= eps + 1e-12);
        assert!(coupling_term(&field, &spec, 0).is_err());
    }

    #[test]
    fn coarsen_preserves_mass_and_blocks() {
        let grid = grid2(8, 0.5);
        let vals: Vec<f64> = (0..64).map(|i| (i + 1) as f64).collect();
        let field = DensityField::from_values(grid, vals).unwrap();
        let coarse = field.coarsen(4).unwrap();
        assert_eq!(coarse.grid().cells_per_axis(), 2);
        assert_relative_eq!(coarse.mass(), field.mass(), max_relative = 1e-14);
        // Top-left 4x4 block of the 8x8 layout.
        let expect: f64 = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r * 8 + c + 1) as f64))
            .sum();
        assert_relative_eq!(coarse.values()[0], expect, max_relative = 1e-14);
        assert!(field.coarsen(3).is_err());
    }

    proptest! {
        #[test]
        fn marginals_conserve_mass(vals in proptest::collection::vec(0.0f64..1.0, 27)) {
            let grid = GapGrid::new(3, 3, 0.5).unwrap();
            let field = DensityField::from_values(grid, vals).unwrap();
            for k in 1..=3usize {
                let m = field.marginal(k).unwrap();
                prop_assert!((m.mass() - field.mass()).abs() <= 1e-12);
            }
            let m21 = field.marginal(2).unwrap().marginal(1).unwrap();
            let m1 = field.marginal(1).unwrap();
            prop_assert_eq!(m21.values(), m1.values());
        }
    }
}
