//! Discrete function spaces on the periodic slab.
//!
//! Horizontal directions are periodic with periods `L1`, `L2` and are
//! represented by truncated Fourier series on `N1 x N2` equispaced nodes;
//! the vertical direction is the interval `[-b0, 0]` collocated at the
//! Chebyshev–Gauss–Lobatto points
//!
//! ```text
//! x3_k = -(b0/2) (1 - cos(pi k / (Nz-1))),   k = 0, ..., Nz-1,
//! ```
//!
//! so index `0` is the top (`x3 = 0`) and index `Nz-1` the bottom
//! (`x3 = -b0`).
//!
//! # Conventions
//!
//! * Fourier coefficients are normalized as
//!   `f_hat(n) = (1/(N1 N2)) sum_x f(x) e^{-2 pi i n . x'}` with
//!   `n = (k1/L1, k2/L2)`, so Parseval reads
//!   `int |f|^2 = L1 L2 sum_n |f_hat(n)|^2`.
//! * **Nyquist-free representation.** Every field constructor projects out
//!   the Nyquist columns `|k_j| = N_j/2`. The Nyquist mode of a real DFT
//!   cannot carry a faithful first derivative (its multiplier would be
//!   purely imaginary on a real cosine), and keeping it makes the
//!   variable-coefficient elliptic operators inconsistent with their
//!   constant-coefficient preconditioners. All derivative multipliers are
//!   zeroed there and all pointwise products are re-projected, so the
//!   discrete space is closed under every operation in this crate.
//! * Pointwise products optionally apply the 2/3 rule (`GridSpec::dealias`);
//!   this is used for geometry coefficient products and nonlinear forcing,
//!   while operator applications use the plain Nyquist-projected product.
//! * Surface Sobolev norms are Fourier-multiplier norms,
//!   `||f||_{H^s}^2 = sum_n (1 + |2 pi n|^2)^s |f_hat(n)|^2 L1 L2`;
//!   slab norms are integer-order,
//!   `||f||_{H^k}^2 = sum_{|alpha| <= k} int |d^alpha f|^2`, with spectral
//!   horizontal derivatives, the Chebyshev differentiation matrix in `x3`,
//!   Clenshaw–Curtis quadrature in `x3` and the trapezoid rule in `x'`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabflowError};

/// Static description of the discrete slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Horizontal period in `x1`.
    pub l1: f64,
    /// Horizontal period in `x2`.
    pub l2: f64,
    /// Slab depth; the vertical coordinate spans `[-b0, 0]`.
    pub b0: f64,
    /// Fourier node count in `x1` (even, >= 4).
    pub n1: usize,
    /// Fourier node count in `x2` (even, >= 4).
    pub n2: usize,
    /// Chebyshev–Gauss–Lobatto node count in `x3` (>= 5).
    pub nz: usize,
    /// Apply the 2/3 rule inside [`SurfaceField::multiply`] /
    /// [`SlabField::multiply`].
    pub dealias: bool,
}

impl GridSpec {
    /// Validates the invariants documented on the fields.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.l1 > 0.0 && self.l1.is_finite()) {
            problems.push(format!("L1 must be positive and finite, got {}", self.l1));
        }
        if !(self.l2 > 0.0 && self.l2.is_finite()) {
            problems.push(format!("L2 must be positive and finite, got {}", self.l2));
        }
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            problems.push(format!("b0 must be positive and finite, got {}", self.b0));
        }
        if self.n1 < 4 || self.n1 % 2 != 0 {
            problems.push(format!("N1 must be even and >= 4, got {}", self.n1));
        }
        if self.n2 < 4 || self.n2 % 2 != 0 {
            problems.push(format!("N2 must be even and >= 4, got {}", self.n2));
        }
        if self.nz < 5 {
            problems.push(format!("Nz must be >= 5, got {}", self.nz));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SlabflowError::InvalidParameter(problems.join("; ")))
        }
    }
}

struct GridInner {
    spec: GridSpec,
    /// Vertical nodes, top (`0`) to bottom (`-b0`).
    x3: Vec<f64>,
    /// Chebyshev differentiation matrix scaled to `[-b0, 0]`.
    dz: Array2<f64>,
    /// Clenshaw–Curtis quadrature weights on `[-b0, 0]`.
    wz: Vec<f64>,
    /// Signed integer wavenumbers in DFT storage order (`0, 1, ..., -1`).
    k1: Vec<i64>,
    k2: Vec<i64>,
    /// First-derivative multipliers `2 pi i k/L`, zeroed at Nyquist.
    mult1: Vec<Complex64>,
    mult2: Vec<Complex64>,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridInner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridInner").field("spec", &self.spec).finish()
    }
}

/// Shared, immutable discrete slab: nodes, wavenumbers, differentiation
/// matrix, quadrature weights and FFT plans. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Grid(Arc<GridInner>);

/// Signed wavenumbers in DFT storage order: `0, 1, ..., N/2-1, -N/2, ..., -1`.
fn wavenumbers(n: usize) -> Vec<i64> {
    (0..n)
        .map(|i| if i < n / 2 { i as i64 } else { i as i64 - n as i64 })
        .collect()
}

/// Chebyshev differentiation matrix on the Gauss–Lobatto nodes
/// `t_j = cos(pi j/(N-1))` of `[-1, 1]` (Trefethen's construction with the
/// negative-sum trick on the diagonal).
fn cheb_matrix(n_nodes: usize) -> (Array2<f64>, Vec<f64>) {
    let n = n_nodes - 1;
    let t: Vec<f64> = (0..n_nodes).map(|j| (PI * j as f64 / n as f64).cos()).collect();
    let mut c = vec![1.0; n_nodes];
    c[0] = 2.0;
    c[n] = 2.0;
    for (j, cj) in c.iter_mut().enumerate() {
        if j % 2 == 1 {
            *cj = -*cj;
        }
    }
    let mut d = Array2::<f64>::zeros((n_nodes, n_nodes));
    for i in 0..n_nodes {
        for j in 0..n_nodes {
            if i != j {
                d[[i, j]] = (c[i] / c[j]) / (t[i] - t[j]);
            }
        }
    }
    for i in 0..n_nodes {
        let row_sum: f64 = (0..n_nodes).filter(|&j| j != i).map(|j| d[[i, j]]).sum();
        d[[i, i]] = -row_sum;
    }
    (d, t)
}

/// Clenshaw–Curtis weights for the Gauss–Lobatto nodes on `[-1, 1]`.
fn clencurt_weights(n_nodes: usize) -> Vec<f64> {
    let n = n_nodes - 1;
    let mut w = vec![0.0; n_nodes];
    let theta: Vec<f64> = (0..n_nodes).map(|j| PI * j as f64 / n as f64).collect();
    let mut v = vec![1.0; n - 1];
    for k in 1..=(n / 2) {
        let factor = if 2 * k == n { 1.0 } else { 2.0 };
        for (j, vj) in v.iter_mut().enumerate() {
            *vj -= factor * (2.0 * k as f64 * theta[j + 1]).cos() / (4.0 * (k * k) as f64 - 1.0);
        }
    }
    let end = 1.0 / ((n * n) as f64 - 1.0 + (n % 2) as f64);
    w[0] = end;
    w[n] = end;
    for j in 1..n {
        w[j] = 2.0 * v[j - 1] / n as f64;
    }
    w
}

impl Grid {
    /// Builds the grid, validating [`GridSpec`] invariants and planning FFTs.
    pub fn new(spec: GridSpec) -> Result<Grid> {
        spec.validate()?;
        let (d_ref, t) = cheb_matrix(spec.nz);
        // x3 = (b0/2)(t - 1) maps [1, -1] onto [0, -b0], top first.
        let x3: Vec<f64> = t.iter().map(|&tj| 0.5 * spec.b0 * (tj - 1.0)).collect();
        let dz = d_ref.mapv(|v| v * 2.0 / spec.b0);
        let wz: Vec<f64> =
            clencurt_weights(spec.nz).into_iter().map(|w| w * 0.5 * spec.b0).collect();
        let k1 = wavenumbers(spec.n1);
        let k2 = wavenumbers(spec.n2);
        let mult = |k: &[i64], n: usize, period: f64| -> Vec<Complex64> {
            k.iter()
                .map(|&kj| {
                    if kj.unsigned_abs() as usize * 2 == n {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, 2.0 * PI * kj as f64 / period)
                    }
                })
                .collect()
        };
        let mult1 = mult(&k1, spec.n1, spec.l1);
        let mult2 = mult(&k2, spec.n2, spec.l2);
        let mut planner = FftPlanner::<f64>::new();
        let fwd1 = planner.plan_fft_forward(spec.n1);
        let inv1 = planner.plan_fft_inverse(spec.n1);
        let fwd2 = planner.plan_fft_forward(spec.n2);
        let inv2 = planner.plan_fft_inverse(spec.n2);
        Ok(Grid(Arc::new(GridInner {
            spec,
            x3,
            dz,
            wz,
            k1,
            k2,
            mult1,
            mult2,
            fwd1,
            inv1,
            fwd2,
            inv2,
        })))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.0.spec
    }

    /// True when both grids were built from equal specs.
    pub fn same_as(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }

    pub(crate) fn check_same(&self, other: &Grid, what: &str) {
        assert!(
            self.same_as(other),
            "grid mismatch in {what}: {:?} vs {:?}",
            self.0.spec,
            other.0.spec
        );
    }

    /// Vertical collocation nodes, `x3[0] = 0` down to `x3[Nz-1] = -b0`.
    pub fn x3(&self) -> &[f64] {
        &self.0.x3
    }

    /// Chebyshev differentiation matrix on the `x3` nodes.
    pub fn dz(&self) -> &Array2<f64> {
        &self.0.dz
    }

    /// Clenshaw–Curtis quadrature weights on `[-b0, 0]`.
    pub fn wz(&self) -> &[f64] {
        &self.0.wz
    }

    /// Signed integer wavenumbers along `x1` in storage order.
    pub fn k1(&self) -> &[i64] {
        &self.0.k1
    }

    pub fn k2(&self) -> &[i64] {
        &self.0.k2
    }

    /// First-derivative multipliers along `x1` (zeroed at Nyquist).
    pub fn mult1(&self) -> &[Complex64] {
        &self.0.mult1
    }

    pub fn mult2(&self) -> &[Complex64] {
        &self.0.mult2
    }

    /// `|n| = sqrt((k1/L1)^2 + (k2/L2)^2)` for the mode at storage index
    /// `(i, j)`.
    pub fn abs_n(&self, i: usize, j: usize) -> f64 {
        let n1 = self.0.k1[i] as f64 / self.0.spec.l1;
        let n2 = self.0.k2[j] as f64 / self.0.spec.l2;
        n1.hypot(n2)
    }

    /// True when either index is the (unrepresentable) Nyquist column.
    pub fn is_nyquist(&self, i: usize, j: usize) -> bool {
        i == self.0.spec.n1 / 2 || j == self.0.spec.n2 / 2
    }

    /// True when the mode survives the 2/3 rule, `3 |k_j| <= N_j`.
    pub fn keep_two_thirds(&self, i: usize, j: usize) -> bool {
        3 * self.0.k1[i].unsigned_abs() as usize <= self.0.spec.n1
            && 3 * self.0.k2[j].unsigned_abs() as usize <= self.0.spec.n2
    }

    pub fn node_x1(&self, i: usize) -> f64 {
        i as f64 * self.0.spec.l1 / self.0.spec.n1 as f64
    }

    pub fn node_x2(&self, j: usize) -> f64 {
        j as f64 * self.0.spec.l2 / self.0.spec.n2 as f64
    }

    /// Horizontal trapezoid quadrature weight per node, `L1 L2/(N1 N2)`.
    pub fn horizontal_weight(&self) -> f64 {
        self.0.spec.l1 * self.0.spec.l2 / (self.0.spec.n1 * self.0.spec.n2) as f64
    }

    /// In-place 2D FFT over the first two axes of an `(N1, N2, m)` array of
    /// complex pencils, forward (`true`) or inverse (`false`). Forward is
    /// normalized by `1/(N1 N2)`; inverse is unnormalized so that the pair
    /// is an exact round trip.
    fn fft2_inplace(&self, data: &mut Array3<Complex64>, forward: bool) {
        let (n1, n2, m) = data.dim();
        assert_eq!((n1, n2), (self.0.spec.n1, self.0.spec.n2));
        let (fft1, fft2) = if forward {
            (&self.0.fwd1, &self.0.fwd2)
        } else {
            (&self.0.inv1, &self.0.inv2)
        };
        let mut buf2 = vec![Complex64::default(); n2];
        let mut scratch2 = vec![Complex64::default(); fft2.get_inplace_scratch_len()];
        for i in 0..n1 {
            for k in 0..m {
                for j in 0..n2 {
                    buf2[j] = data[[i, j, k]];
                }
                fft2.process_with_scratch(&mut buf2, &mut scratch2);
                for j in 0..n2 {
                    data[[i, j, k]] = buf2[j];
                }
            }
        }
        let mut buf1 = vec![Complex64::default(); n1];
        let mut scratch1 = vec![Complex64::default(); fft1.get_inplace_scratch_len()];
        for j in 0..n2 {
            for k in 0..m {
                for i in 0..n1 {
                    buf1[i] = data[[i, j, k]];
                }
                fft1.process_with_scratch(&mut buf1, &mut scratch1);
                for i in 0..n1 {
                    data[[i, j, k]] = buf1[i];
                }
            }
        }
        if forward {
            let scale = 1.0 / (n1 * n2) as f64;
            data.mapv_inplace(|v| v * scale);
        }
    }

    /// Forward transform of real pencils; coefficients follow the crate's
    /// `1/(N1 N2)` normalization.
    pub(crate) fn forward_real(&self, values: &Array3<f64>) -> Array3<Complex64> {
        let mut data = values.mapv(|v| Complex64::new(v, 0.0));
        self.fft2_inplace(&mut data, true);
        data
    }

    /// Inverse transform, discarding the imaginary part (coefficients are
    /// assumed Hermitian-symmetric).
    pub(crate) fn inverse_real(&self, coeffs: &Array3<Complex64>) -> Array3<f64> {
        let mut data = coeffs.clone();
        self.fft2_inplace(&mut data, false);
        data.mapv(|v| v.re)
    }

    /// Zeroes the Nyquist columns; when `two_thirds` also zeroes every mode
    /// with `3|k_j| > N_j`.
    pub(crate) fn project_spectral(&self, coeffs: &mut Array3<Complex64>, two_thirds: bool) {
        let (n1, n2, _) = coeffs.dim();
        for i in 0..n1 {
            for j in 0..n2 {
                let kill = self.is_nyquist(i, j) || (two_thirds && !self.keep_two_thirds(i, j));
                if kill {
                    coeffs.index_axis_mut(Axis(0), i).index_axis_mut(Axis(0), j).fill(
                        Complex64::default(),
                    );
                }
            }
        }
    }

    /// Projects physical values onto the Nyquist-free (optionally 2/3
    /// band-limited) space through one FFT round trip.
    fn project_values(&self, values: &mut Array3<f64>, two_thirds: bool) {
        let mut coeffs = self.forward_real(values);
        self.project_spectral(&mut coeffs, two_thirds);
        *values = self.inverse_real(&coeffs);
    }
}

/// Lifts an `(N1, N2)` array into the `(N1, N2, 1)` pencil layout.
fn lift2(values: Array2<f64>) -> Array3<f64> {
    let (n1, n2) = values.dim();
    values.into_shape_with_order((n1, n2, 1)).expect("contiguous 2d array")
}

fn drop3(values: Array3<f64>) -> Array2<f64> {
    let (n1, n2, m) = values.dim();
    assert_eq!(m, 1);
    values.into_shape_with_order((n1, n2)).expect("contiguous 3d array")
}

/// Real scalar field on the surface lattice `N1 x N2`.
///
/// Values live in the Nyquist-free trigonometric space (see the module
/// docs); every constructor projects its input there.
#[derive(Debug, Clone)]
pub struct SurfaceField {
    grid: Grid,
    values: Array2<f64>,
}

impl SurfaceField {
    pub fn zeros(grid: &Grid) -> Self {
        let values = Array2::zeros((grid.spec().n1, grid.spec().n2));
        SurfaceField { grid: grid.clone(), values }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        let values = Array2::from_elem((grid.spec().n1, grid.spec().n2), c);
        SurfaceField { grid: grid.clone(), values }
    }

    /// Builds from raw nodal values, projecting out Nyquist content.
    pub fn from_values(grid: &Grid, values: Array2<f64>) -> Self {
        assert_eq!(values.dim(), (grid.spec().n1, grid.spec().n2), "surface field shape");
        let mut lifted = lift2(values);
        grid.project_values(&mut lifted, false);
        SurfaceField { grid: grid.clone(), values: drop3(lifted) }
    }

    /// Builds from nodal values *without* the Nyquist projection. Reserved
    /// for pointwise-exact quantities (reciprocals, pointwise projections)
    /// whose consumers re-project every product.
    pub fn from_values_raw(grid: &Grid, values: Array2<f64>) -> Self {
        assert_eq!(values.dim(), (grid.spec().n1, grid.spec().n2), "surface field shape");
        SurfaceField { grid: grid.clone(), values }
    }

    /// Samples `f(x1, x2)` at the nodes (then projects).
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid.spec().n1, grid.spec().n2), |(i, j)| {
            f(grid.node_x1(i), grid.node_x2(j))
        });
        Self::from_values(grid, values)
    }

    /// Reconstructs from Fourier coefficients (crate normalization); the
    /// coefficients are assumed Hermitian and Nyquist columns are dropped.
    pub fn from_spectral(grid: &Grid, coeffs: Array2<Complex64>) -> Self {
        assert_eq!(coeffs.dim(), (grid.spec().n1, grid.spec().n2), "surface spectrum shape");
        let (n1, n2) = coeffs.dim();
        let mut lifted = coeffs.into_shape_with_order((n1, n2, 1)).expect("contiguous");
        grid.project_spectral(&mut lifted, false);
        let values = grid.inverse_real(&lifted);
        SurfaceField { grid: grid.clone(), values: drop3(values) }
    }

    /// Deterministic band-limited random field: uniform nodal values in
    /// `[-amplitude, amplitude]` truncated to `|k_j| <= max_mode`.
    pub fn random(grid: &Grid, seed: u64, max_mode: usize, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = Array2::from_shape_fn((grid.spec().n1, grid.spec().n2), |_| {
            rng.gen_range(-amplitude..amplitude)
        });
        let mut coeffs = grid.forward_real(&lift2(values));
        for i in 0..grid.spec().n1 {
            for j in 0..grid.spec().n2 {
                let keep = grid.k1()[i].unsigned_abs() as usize <= max_mode
                    && grid.k2()[j].unsigned_abs() as usize <= max_mode
                    && !grid.is_nyquist(i, j);
                if !keep {
                    coeffs[[i, j, 0]] = Complex64::default();
                }
            }
        }
        let values = grid.inverse_real(&coeffs);
        SurfaceField { grid: grid.clone(), values: drop3(values) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Fourier coefficients under the crate normalization.
    pub fn spectral(&self) -> Array2<Complex64> {
        let coeffs = self.grid.forward_real(&lift2(self.values.clone()));
        let (n1, n2, _) = coeffs.dim();
        coeffs.into_shape_with_order((n1, n2)).expect("contiguous")
    }

    /// Spectral derivative along horizontal axis `1` or `2`.
    pub fn deriv(&self, axis: usize) -> Self {
        assert!(axis == 1 || axis == 2, "horizontal axis must be 1 or 2");
        let mut coeffs = self.grid.forward_real(&lift2(self.values.clone()));
        for i in 0..self.grid.spec().n1 {
            for j in 0..self.grid.spec().n2 {
                let m =
                    if axis == 1 { self.grid.mult1()[i] } else { self.grid.mult2()[j] };
                coeffs[[i, j, 0]] *= m;
            }
        }
        let values = self.grid.inverse_real(&coeffs);
        SurfaceField { grid: self.grid.clone(), values: drop3(values) }
    }

    /// Pointwise product, Nyquist-projected, with the 2/3 rule when the
    /// grid's `dealias` flag is set.
    pub fn multiply(&self, other: &SurfaceField) -> Self {
        self.product_with(other, self.grid.spec().dealias)
    }

    /// Pointwise product with only the Nyquist projection (used inside
    /// operator applications regardless of the dealias flag).
    pub fn mul_raw(&self, other: &SurfaceField) -> Self {
        self.product_with(other, false)
    }

    fn product_with(&self, other: &SurfaceField, two_thirds: bool) -> Self {
        self.grid.check_same(&other.grid, "surface product");
        let mut values = lift2(&self.values * &other.values);
        self.grid.project_values(&mut values, two_thirds);
        SurfaceField { grid: self.grid.clone(), values: drop3(values) }
    }

    /// Inhomogeneous multiplier norm
    /// `(sum_n (1 + |2 pi n|^2)^s |f_hat|^2 L1 L2)^{1/2}`, `s` in `[-4, 8]`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        assert!((-4.0..=8.0).contains(&s), "surface Sobolev order out of range: {s}");
        self.multiplier_norm(|abs_n| (1.0 + (2.0 * PI * abs_n).powi(2)).powf(s))
    }

    /// Homogeneous multiplier norm `(sum_n |2 pi n|^{2s} |f_hat|^2 L1 L2)^{1/2}`
    /// (the zero mode contributes nothing for `s > 0`).
    pub fn sobolev_norm_homogeneous(&self, s: f64) -> f64 {
        self.multiplier_norm(|abs_n| {
            if abs_n == 0.0 {
                if s == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (2.0 * PI * abs_n).powf(2.0 * s)
            }
        })
    }

    fn multiplier_norm(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let coeffs = self.spectral();
        let area = self.grid.spec().l1 * self.grid.spec().l2;
        let mut total = 0.0;
        for i in 0..self.grid.spec().n1 {
            for j in 0..self.grid.spec().n2 {
                total += weight(self.grid.abs_n(i, j)) * coeffs[[i, j]].norm_sqr();
            }
        }
        (total * area).sqrt()
    }

    /// `L^2(Sigma)` norm (trapezoid quadrature, equal to the `s = 0`
    /// multiplier norm by Parseval).
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.horizontal_weight()).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Surface integral by the trapezoid rule.
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.grid.horizontal_weight()
    }

    pub fn scale(&self, c: f64) -> Self {
        SurfaceField { grid: self.grid.clone(), values: self.values.mapv(|v| v * c) }
    }
}

macro_rules! impl_linear_ops {
    ($ty:ident, $what:expr) => {
        impl Add for &$ty {
            type Output = $ty;
            fn add(self, rhs: &$ty) -> $ty {
                self.grid.check_same(&rhs.grid, concat!($what, " add"));
                $ty { grid: self.grid.clone(), values: &self.values + &rhs.values }
            }
        }
        impl Sub for &$ty {
            type Output = $ty;
            fn sub(self, rhs: &$ty) -> $ty {
                self.grid.check_same(&rhs.grid, concat!($what, " sub"));
                $ty { grid: self.grid.clone(), values: &self.values - &rhs.values }
            }
        }
        impl Mul<f64> for &$ty {
            type Output = $ty;
            fn mul(self, c: f64) -> $ty {
                self.scale(c)
            }
        }
        impl Neg for &$ty {
            type Output = $ty;
            fn neg(self) -> $ty {
                self.scale(-1.0)
            }
        }
        impl AddAssign<&$ty> for $ty {
            fn add_assign(&mut self, rhs: &$ty) {
                self.grid.check_same(&rhs.grid, concat!($what, " add_assign"));
                self.values += &rhs.values;
            }
        }
        impl SubAssign<&$ty> for $ty {
            fn sub_assign(&mut self, rhs: &$ty) {
                self.grid.check_same(&rhs.grid, concat!($what, " sub_assign"));
                self.values -= &rhs.values;
            }
        }
    };
}

impl_linear_ops!(SurfaceField, "surface");
impl_linear_ops!(SlabField, "slab");

/// Real scalar field on the `N1 x N2 x Nz` slab lattice; same Nyquist-free
/// representation contract as [`SurfaceField`], applied per vertical level.
#[derive(Debug, Clone)]
pub struct SlabField {
    grid: Grid,
    values: Array3<f64>,
}

impl SlabField {
    fn shape(grid: &Grid) -> (usize, usize, usize) {
        (grid.spec().n1, grid.spec().n2, grid.spec().nz)
    }

    pub fn zeros(grid: &Grid) -> Self {
        SlabField { grid: grid.clone(), values: Array3::zeros(Self::shape(grid)) }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        SlabField { grid: grid.clone(), values: Array3::from_elem(Self::shape(grid), c) }
    }

    pub fn from_values(grid: &Grid, values: Array3<f64>) -> Self {
        assert_eq!(values.dim(), Self::shape(grid), "slab field shape");
        let mut values = values;
        grid.project_values(&mut values, false);
        SlabField { grid: grid.clone(), values }
    }

    /// Builds from nodal values *without* the Nyquist projection (see
    /// [`SurfaceField::from_values_raw`]).
    pub fn from_values_raw(grid: &Grid, values: Array3<f64>) -> Self {
        assert_eq!(values.dim(), Self::shape(grid), "slab field shape");
        SlabField { grid: grid.clone(), values }
    }

    /// Samples `f(x1, x2, x3)` at the tensor nodes (then projects).
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let values = Array3::from_shape_fn(Self::shape(grid), |(i, j, k)| {
            f(grid.node_x1(i), grid.node_x2(j), grid.x3()[k])
        });
        Self::from_values(grid, values)
    }

    /// Deterministic random slab field: band-limited horizontally
    /// (`|k_j| <= max_mode`) and smooth vertically (random low-degree
    /// polynomial profiles in `x3`).
    pub fn random(grid: &Grid, seed: u64, max_mode: usize, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b0 = grid.spec().b0;
        let coef: Vec<[f64; 4]> = (0..4)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let horiz: Vec<SurfaceField> =
            (0..4).map(|m| SurfaceField::random(grid, seed.wrapping_add(m), max_mode, amplitude)).collect();
        let mut values = Array3::zeros(Self::shape(grid));
        for (m, (c, h)) in coef.iter().zip(horiz.iter()).enumerate() {
            let _ = m;
            for ((i, j, k), v) in values.indexed_iter_mut() {
                let s = (grid.x3()[k] + b0) / b0;
                let profile = c[0] + c[1] * s + c[2] * s * s + c[3] * s * s * s;
                *v += h.values()[[i, j]] * profile;
            }
        }
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    /// Per-mode vertical profiles `g_hat(n, x3_k)` (crate normalization).
    pub fn spectral(&self) -> Array3<Complex64> {
        self.grid.forward_real(&self.values)
    }

    pub fn from_spectral(grid: &Grid, coeffs: Array3<Complex64>) -> Self {
        assert_eq!(coeffs.dim(), Self::shape(grid), "slab spectrum shape");
        let mut coeffs = coeffs;
        grid.project_spectral(&mut coeffs, false);
        SlabField { grid: grid.clone(), values: grid.inverse_real(&coeffs) }
    }

    /// Spectral derivative along horizontal axis `1` or `2`.
    pub fn deriv(&self, axis: usize) -> Self {
        assert!(axis == 1 || axis == 2, "horizontal axis must be 1 or 2");
        let mut coeffs = self.spectral();
        for i in 0..self.grid.spec().n1 {
            for j in 0..self.grid.spec().n2 {
                let m =
                    if axis == 1 { self.grid.mult1()[i] } else { self.grid.mult2()[j] };
                for k in 0..self.grid.spec().nz {
                    coeffs[[i, j, k]] *= m;
                }
            }
        }
        SlabField { grid: self.grid.clone(), values: self.grid.inverse_real(&coeffs) }
    }

    /// Chebyshev collocation derivative in `x3`.
    pub fn deriv_z(&self) -> Self {
        let (n1, n2, nz) = self.values.dim();
        let flat = self
            .values
            .clone()
            .into_shape_with_order((n1 * n2, nz))
            .expect("contiguous slab values");
        let out = flat.dot(&self.grid.dz().t());
        let values = out.into_shape_with_order((n1, n2, nz)).expect("contiguous product");
        SlabField { grid: self.grid.clone(), values }
    }

    /// Derivative along axis `1`, `2` or `3`.
    pub fn derivative(&self, axis: usize) -> Self {
        match axis {
            1 | 2 => self.deriv(axis),
            3 => self.deriv_z(),
            _ => panic!("slab derivative axis must be 1, 2 or 3"),
        }
    }

    pub fn multiply(&self, other: &SlabField) -> Self {
        self.product_with(other, self.grid.spec().dealias)
    }

    pub fn mul_raw(&self, other: &SlabField) -> Self {
        self.product_with(other, false)
    }

    fn product_with(&self, other: &SlabField, two_thirds: bool) -> Self {
        self.grid.check_same(&other.grid, "slab product");
        let mut values = &self.values * &other.values;
        self.grid.project_values(&mut values, two_thirds);
        SlabField { grid: self.grid.clone(), values }
    }

    /// Trace at the top boundary `x3 = 0`.
    pub fn trace_top(&self) -> SurfaceField {
        let values = self.values.index_axis(Axis(2), 0).to_owned();
        SurfaceField { grid: self.grid.clone(), values }
    }

    /// Trace at the bottom boundary `x3 = -b0`.
    pub fn trace_bottom(&self) -> SurfaceField {
        let values = self.values.index_axis(Axis(2), self.grid.spec().nz - 1).to_owned();
        SurfaceField { grid: self.grid.clone(), values }
    }

    /// Volume integral: trapezoid in `x'`, Clenshaw–Curtis in `x3`.
    pub fn integral(&self) -> f64 {
        let hw = self.grid.horizontal_weight();
        let mut total = 0.0;
        for (k, &w) in self.grid.wz().iter().enumerate() {
            total += w * self.values.index_axis(Axis(2), k).sum();
        }
        total * hw
    }

    pub fn l2_norm(&self) -> f64 {
        let hw = self.grid.horizontal_weight();
        let mut total = 0.0;
        for (k, &w) in self.grid.wz().iter().enumerate() {
            let level = self.values.index_axis(Axis(2), k);
            total += w * level.iter().map(|v| v * v).sum::<f64>();
        }
        (total * hw).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Integer-order slab Sobolev norm
    /// `(sum_{|alpha| <= k} ||d^alpha f||_{L^2}^2)^{1/2}`, `0 <= k <= 4`.
    pub fn sobolev_norm(&self, k: usize) -> f64 {
        assert!(k <= 4, "slab Sobolev order must be 0..=4, got {k}");
        let mut total = 0.0;
        for a1 in 0..=k {
            for a2 in 0..=(k - a1) {
                for a3 in 0..=(k - a1 - a2) {
                    let mut g = self.clone();
                    for _ in 0..a1 {
                        g = g.deriv(1);
                    }
                    for _ in 0..a2 {
                        g = g.deriv(2);
                    }
                    for _ in 0..a3 {
                        g = g.deriv_z();
                    }
                    let nrm = g.l2_norm();
                    total += nrm * nrm;
                }
            }
        }
        total.sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        SlabField { grid: self.grid.clone(), values: self.values.mapv(|v| v * c) }
    }
}

/// Three-component vector field on the surface lattice.
#[derive(Debug, Clone)]
pub struct SurfaceVectorField {
    pub components: [SurfaceField; 3],
}

impl SurfaceVectorField {
    pub fn new(components: [SurfaceField; 3]) -> Self {
        components[0].grid().check_same(components[1].grid(), "surface vector");
        components[0].grid().check_same(components[2].grid(), "surface vector");
        SurfaceVectorField { components }
    }

    pub fn zeros(grid: &Grid) -> Self {
        SurfaceVectorField {
            components: [
                SurfaceField::zeros(grid),
                SurfaceField::zeros(grid),
                SurfaceField::zeros(grid),
            ],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn comp(&self, i: usize) -> &SurfaceField {
        &self.components[i]
    }

    /// Pointwise dot product (Nyquist-projected).
    pub fn dot(&self, other: &SurfaceVectorField) -> SurfaceField {
        let mut out = self.components[0].mul_raw(&other.components[0]);
        out += &self.components[1].mul_raw(&other.components[1]);
        out += &self.components[2].mul_raw(&other.components[2]);
        out
    }

    pub fn linf_norm(&self) -> f64 {
        self.components.iter().map(|c| c.linf_norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: f64) -> Self {
        SurfaceVectorField {
            components: [
                self.components[0].scale(c),
                self.components[1].scale(c),
                self.components[2].scale(c),
            ],
        }
    }
}

impl Add for &SurfaceVectorField {
    type Output = SurfaceVectorField;
    fn add(self, rhs: &SurfaceVectorField) -> SurfaceVectorField {
        SurfaceVectorField::new([
            &self.components[0] + &rhs.components[0],
            &self.components[1] + &rhs.components[1],
            &self.components[2] + &rhs.components[2],
        ])
    }
}

impl Sub for &SurfaceVectorField {
    type Output = SurfaceVectorField;
    fn sub(self, rhs: &SurfaceVectorField) -> SurfaceVectorField {
        SurfaceVectorField::new([
            &self.components[0] - &rhs.components[0],
            &self.components[1] - &rhs.components[1],
            &self.components[2] - &rhs.components[2],
        ])
    }
}

/// Three-component vector field on the slab lattice.
#[derive(Debug, Clone)]
pub struct SlabVectorField {
    pub components: [SlabField; 3],
}

impl SlabVectorField {
    pub fn new(components: [SlabField; 3]) -> Self {
        components[0].grid().check_same(components[1].grid(), "slab vector");
        components[0].grid().check_same(components[2].grid(), "slab vector");
        SlabVectorField { components }
    }

    pub fn zeros(grid: &Grid) -> Self {
        SlabVectorField {
            components: [SlabField::zeros(grid), SlabField::zeros(grid), SlabField::zeros(grid)],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn comp(&self, i: usize) -> &SlabField {
        &self.components[i]
    }

    pub fn trace_top(&self) -> SurfaceVectorField {
        SurfaceVectorField::new([
            self.components[0].trace_top(),
            self.components[1].trace_top(),
            self.components[2].trace_top(),
        ])
    }

    pub fn trace_bottom(&self) -> SurfaceVectorField {
        SurfaceVectorField::new([
            self.components[0].trace_bottom(),
            self.components[1].trace_bottom(),
            self.components[2].trace_bottom(),
        ])
    }

    pub fn dot(&self, other: &SlabVectorField) -> SlabField {
        let mut out = self.components[0].mul_raw(&other.components[0]);
        out += &self.components[1].mul_raw(&other.components[1]);
        out += &self.components[2].mul_raw(&other.components[2]);
        out
    }

    pub fn linf_norm(&self) -> f64 {
        self.components.iter().map(|c| c.linf_norm()).fold(0.0, f64::max)
    }

    /// Root sum of squared component `H^k` norms.
    pub fn sobolev_norm(&self, k: usize) -> f64 {
        self.components.iter().map(|c| c.sobolev_norm(k).powi(2)).sum::<f64>().sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.components.iter().map(|c| c.l2_norm().powi(2)).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        SlabVectorField {
            components: [
                self.components[0].scale(c),
                self.components[1].scale(c),
                self.components[2].scale(c),
            ],
        }
    }
}

impl Add for &SlabVectorField {
    type Output = SlabVectorField;
    fn add(self, rhs: &SlabVectorField) -> SlabVectorField {
        SlabVectorField::new([
            &self.components[0] + &rhs.components[0],
            &self.components[1] + &rhs.components[1],
            &self.components[2] + &rhs.components[2],
        ])
    }
}

impl Sub for &SlabVectorField {
    type Output = SlabVectorField;
    fn sub(self, rhs: &SlabVectorField) -> SlabVectorField {
        SlabVectorField::new([
            &self.components[0] - &rhs.components[0],
            &self.components[1] - &rhs.components[1],
            &self.components[2] - &rhs.components[2],
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n1: usize, n2: usize, nz: usize) -> Grid {
        Grid::new(GridSpec { l1: 1.0, l2: 1.0, b0: 1.0, n1, n2, nz, dealias: false }).unwrap()
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        let bad = GridSpec { l1: -1.0, l2: 1.0, b0: 1.0, n1: 7, n2: 8, nz: 3, dealias: false };
        let err = Grid::new(bad).unwrap_err().to_string();
        assert!(err.contains("L1"), "{err}");
        assert!(err.contains("N1"), "{err}");
        assert!(err.contains("Nz"), "{err}");
    }

    #[test]
    fn vertical_nodes_span_slab_top_first() {
        let g = grid(4, 4, 9);
        assert_abs_diff_eq!(g.x3()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.x3()[8], -1.0, epsilon = 1e-15);
        assert!(g.x3().windows(2).all(|w| w[0] > w[1]), "strictly decreasing");
    }

    #[test]
    fn transform_zero_and_single_mode() {
        let g = grid(8, 8, 5);
        let z = SurfaceField::zeros(&g);
        assert!(z.spectral().iter().all(|c| c.norm() == 0.0));

        let f = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * x1).cos());
        let coeffs = f.spectral();
        // k1 = +1 at storage index 1, k1 = -1 at storage index 7.
        assert_abs_diff_eq!(coeffs[[1, 0]].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(coeffs[[7, 0]].re, 0.5, epsilon = 1e-12);
        let rest: f64 = coeffs
            .indexed_iter()
            .filter(|((i, j), _)| !((*i == 1 || *i == 7) && *j == 0))
            .map(|(_, c)| c.norm())
            .sum();
        assert!(rest < 1e-12, "stray energy {rest}");
    }

    #[test]
    fn transform_round_trip_random() {
        let g = grid(8, 8, 5);
        let f = SurfaceField::random(&g, 7, 3, 1.0);
        let back = SurfaceField::from_spectral(&g, f.spectral());
        let err = (&f - &back).linf_norm();
        assert!(err < 1e-12 * f.linf_norm().max(1.0), "round trip error {err}");

        let s = SlabField::random(&g, 9, 3, 1.0);
        let back = SlabField::from_spectral(&g, s.spectral());
        let err = (&s - &back).linf_norm();
        assert!(err < 1e-12 * s.linf_norm().max(1.0), "slab round trip error {err}");
    }

    #[test]
    fn parseval_matches_quadrature() {
        let g = grid(16, 16, 5);
        let f = SurfaceField::random(&g, 3, 5, 2.0);
        let quad = f.l2_norm();
        let spectral = f.sobolev_norm(0.0);
        assert_abs_diff_eq!(quad, spectral, epsilon = 1e-10 * quad.max(1.0));
    }

    #[test]
    fn horizontal_derivative_analytic() {
        let g = grid(8, 8, 5);
        let f = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * x1).cos());
        let expected = SurfaceField::from_fn(&g, |x1, _| -2.0 * PI * (2.0 * PI * x1).sin());
        assert!((&f.deriv(1) - &expected).linf_norm() < 1e-12);
        // x2-independent field has exactly zero x2 derivative.
        assert_eq!(f.deriv(2).linf_norm(), 0.0);
    }

    #[test]
    fn horizontal_derivative_vs_fine_grid_oracle() {
        // Compare the spectral derivative of a band-limited field with
        // second-order central differences on an 8x refined evaluation of
        // the same trigonometric interpolant (exact on the coarse grid's
        // band, so the only error is the finite-difference truncation).
        let g = grid(16, 4, 5);
        let f = SurfaceField::random(&g, 21, 4, 1.0);
        let coeffs = f.spectral();
        let eval = |x1: f64| -> f64 {
            let mut acc = Complex64::default();
            for i in 0..16 {
                for j in 0..4 {
                    let phase = 2.0 * PI * (g.k1()[i] as f64 * x1);
                    acc += coeffs[[i, j]] * Complex64::new(0.0, phase).exp();
                }
            }
            acc.re
        };
        let h = 1.0 / (16.0 * 128.0);
        let d_spec = f.deriv(1);
        let mut max_rel = 0.0f64;
        for i in 0..16 {
            let x1 = g.node_x1(i);
            let fd = (-eval(x1 + 2.0 * h) + 8.0 * eval(x1 + h) - 8.0 * eval(x1 - h)
                + eval(x1 - 2.0 * h))
                / (12.0 * h);
            let rel = (d_spec.values()[[i, 0]] - fd).abs() / d_spec.linf_norm();
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-6, "finite-difference mismatch {max_rel}");
    }

    #[test]
    fn vertical_derivative_polynomials_and_exponential() {
        let g = grid(4, 4, 5);
        let lin = SlabField::from_fn(&g, |_, _, x3| x3);
        assert!((&lin.deriv_z() - &SlabField::constant(&g, 1.0)).linf_norm() < 1e-12);
        let quad = SlabField::from_fn(&g, |_, _, x3| x3 * x3);
        let expect = SlabField::from_fn(&g, |_, _, x3| 2.0 * x3);
        assert!((&quad.deriv_z() - &expect).linf_norm() < 1e-12);

        let g17 = grid(4, 4, 17);
        let e = SlabField::from_fn(&g17, |_, _, x3| x3.exp());
        assert!((&e.deriv_z() - &e).linf_norm() < 1e-10);
    }

    #[test]
    fn derivative_commutation_exact() {
        let g = grid(8, 8, 5);
        let f = SurfaceField::random(&g, 11, 3, 1.0);
        let a = f.deriv(1).deriv(2);
        let b = f.deriv(2).deriv(1);
        assert!((&a - &b).linf_norm() < 1e-13);
    }

    #[test]
    fn multiply_identity_and_product_to_sum() {
        let g = grid(8, 8, 5);
        let f = SurfaceField::random(&g, 5, 2, 1.0);
        let one = SurfaceField::constant(&g, 1.0);
        assert!((&f.multiply(&one) - &f).linf_norm() < 1e-13);

        let c = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * x1).cos());
        let expect =
            SurfaceField::from_fn(&g, |x1, _| 0.5 + 0.5 * (4.0 * PI * x1).cos());
        assert!((&c.multiply(&c) - &expect).linf_norm() < 1e-12);
    }

    #[test]
    fn dealiased_product_has_no_energy_above_cutoff() {
        let g = Grid::new(GridSpec {
            l1: 1.0,
            l2: 1.0,
            b0: 1.0,
            n1: 16,
            n2: 16,
            nz: 5,
            dealias: true,
        })
        .unwrap();
        let f = SurfaceField::random(&g, 1, 7, 1.0);
        let h = SurfaceField::random(&g, 2, 7, 1.0);
        let coeffs = f.multiply(&h).spectral();
        for i in 0..16 {
            for j in 0..16 {
                if !g.keep_two_thirds(i, j) {
                    assert!(coeffs[[i, j]].norm() < 1e-14, "energy above cutoff at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn surface_sobolev_norm_examples() {
        let g = grid(8, 8, 5);
        let f = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * x1).sin());
        assert_abs_diff_eq!(f.sobolev_norm(0.0), 0.5f64.sqrt(), epsilon = 1e-12);
        let expect = ((1.0 + 4.0 * PI * PI) / 2.0).sqrt();
        assert_abs_diff_eq!(f.sobolev_norm(1.0), expect, epsilon = 1e-12);
        assert_eq!(SurfaceField::zeros(&g).sobolev_norm(2.5), 0.0);
    }

    #[test]
    fn surface_sobolev_norm_monotone_in_order() {
        let g = grid(8, 8, 5);
        let f = SurfaceField::random(&g, 13, 3, 1.0);
        let mut prev = f.sobolev_norm(-4.0);
        for step in 1..=24 {
            let s = -4.0 + step as f64 * 0.5;
            let cur = f.sobolev_norm(s);
            assert!(cur >= prev - 1e-12, "norm not monotone at s = {s}");
            prev = cur;
        }
    }

    #[test]
    fn slab_sobolev_norm_examples() {
        let g = grid(8, 8, 9);
        assert_abs_diff_eq!(SlabField::constant(&g, 1.0).sobolev_norm(0), 1.0, epsilon = 1e-12);
        let f = SlabField::from_fn(&g, |x1, _, _| (2.0 * PI * x1).sin());
        assert_abs_diff_eq!(f.sobolev_norm(0), 0.5f64.sqrt(), epsilon = 1e-12);

        // f = sin(2 pi x1) x3: int f^2 = (1/2)(b0^3/3), int |grad f|^2 =
        // (4 pi^2 / 2)(b0^3/3) + 1/2, all on the unit cell with b0 = 1.
        let f = SlabField::from_fn(&g, |x1, _, x3| (2.0 * PI * x1).sin() * x3);
        let exact = (1.0 / 6.0 + 4.0 * PI * PI / 6.0 + 0.5).sqrt();
        assert_abs_diff_eq!(f.sobolev_norm(1), exact, epsilon = 1e-8);
    }

    #[test]
    fn traces_and_integral() {
        let g = grid(8, 8, 9);
        let f = SlabField::from_fn(&g, |x1, _, x3| (2.0 * PI * x1).cos() + x3);
        let top = f.trace_top();
        let expect_top = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * x1).cos());
        assert!((&top - &expect_top).linf_norm() < 1e-12);
        let bottom = f.trace_bottom();
        let expect_bot = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * x1).cos() - 1.0);
        assert!((&bottom - &expect_bot).linf_norm() < 1e-12);
        // int (cos + x3) over unit-cell slab = -1/2.
        assert_abs_diff_eq!(f.integral(), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn random_fields_are_deterministic() {
        let g = grid(8, 8, 5);
        let a = SurfaceField::random(&g, 42, 3, 1.0);
        let b = SurfaceField::random(&g, 42, 3, 1.0);
        assert_eq!(a.values(), b.values());
        let c = SurfaceField::random(&g, 43, 3, 1.0);
        assert!((&a - &c).linf_norm() > 0.0);
    }

    #[test]
    fn nyquist_projection_is_built_in() {
        let g = grid(8, 8, 5);
        // A pure Nyquist signal projects to zero at construction.
        let f = SurfaceField::from_fn(&g, |x1, _| (8.0 * PI * x1).cos());
        assert!(f.linf_norm() < 1e-13, "Nyquist content survived: {}", f.linf_norm());
        // Products that alias into the Nyquist column are re-projected.
        let a = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * 3.0 * x1).cos());
        let b = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * 1.0 * x1).cos());
        let coeffs = a.mul_raw(&b).spectral();
        for j in 0..8 {
            assert!(coeffs[[4, j]].norm() < 1e-14, "Nyquist column populated");
        }
    }
}
