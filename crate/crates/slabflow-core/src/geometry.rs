//! Flattening machinery: the parameterized Poisson extension, the epsilon
//! selection rule, the coefficient fields of the flattening map and the
//! transformed differential operators.
//!
//! The moving domain `{-b(x') < x3 < eta(t, x')}` is pulled back to the
//! fixed slab through `Phi(x) = (x1, x2, phi(x))` built from the extension
//! `etabar = P^eps eta`, where `P^eps` acts per Fourier mode as
//!
//! ```text
//! (P^eps f)(x', x3) = sum_n f_hat(n) e^{eps |n| x3} e^{2 pi i n . x'},
//! |n| = sqrt((k1/L1)^2 + (k2/L2)^2).
//! ```
//!
//! Note the exponent uses `|n|`, not `2 pi |n|` — the finite-depth
//! extension is defined with the bare frequency modulus, so it is harmonic
//! only when `eps` absorbs the `2 pi`. With `btilde = 1 + x3/b0` the
//! coefficient fields are
//!
//! ```text
//! A = x3 d1(b)/b0 + d1(etabar) btilde,    B = x3 d2(b)/b0 + d2(etabar) btilde,
//! J = b/b0 + etabar/b0 + d3(etabar) btilde,    K = 1/J,
//! ```
//!
//! the transform matrix is the triangular
//! `Amat = [(1, 0, -AK), (0, 1, -BK), (0, 0, K)]`, and the transformed
//! operators are `(grad_A f)_i = Amat_ij d_j f`, `div_A g = Amat_ij d_j g_i`,
//! `lap_A = div_A grad_A`, `(D_A u)_ij = (grad_A)_i u_j + (grad_A)_j u_i`
//! and `S_A(p, u) = p I - D_A u`.
//!
//! Time dependence enters through `dt(etabar) = P^eps(dt eta)` (`eps` is
//! frozen per run); the divergence-preserving matrix is
//! `M = K grad(Phi) = [(K,0,0),(0,K,0),(AK,BK,1)]` with the closed-form
//! inverse `M^{-1} = J Amat^T = [(J,0,0),(0,J,0),(-A,-B,1)]`, and
//! `R = dt(M) M^{-1}` has the nonzero entries
//!
//! ```text
//! R_11 = R_22 = -K dt(J),    R_31 = J dt(AK),    R_32 = J dt(BK),
//! ```
//!
//! all other entries (including `R_33`) vanishing because `dt(M)_33 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabflowError};
use crate::spectral::{Grid, SlabField, SlabVectorField, SurfaceField, SurfaceVectorField};

/// Parameters of the Poisson extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionParams {
    /// Extension decay rate, in `(0, 1]`.
    pub epsilon: f64,
    /// Separation parameter from `min(eta0 + b) = 2 b0 delta`.
    pub delta: f64,
    /// The universal constant `C` of the epsilon rule (default 1).
    pub c_poisson: f64,
}

/// Fixed lower boundary `x3 = -b(x')`.
#[derive(Debug, Clone)]
pub struct BottomProfile {
    /// Depth function (positive everywhere).
    pub b: SurfaceField,
    /// Reference depth of the flattened slab.
    pub b0: f64,
}

impl BottomProfile {
    /// Flat bottom at the grid's reference depth.
    pub fn flat(grid: &Grid) -> Self {
        let b0 = grid.spec().b0;
        BottomProfile { b: SurfaceField::constant(grid, b0), b0 }
    }

    /// Varying bottom; `b` must be positive, `b0` is taken from the grid.
    pub fn new(b: SurfaceField) -> Result<Self> {
        let min = b.min_value();
        if min <= 0.0 {
            return Err(SlabflowError::InvalidParameter(format!(
                "bottom profile must be positive, min(b) = {min:.6e}"
            )));
        }
        let b0 = b.grid().spec().b0;
        Ok(BottomProfile { b, b0 })
    }
}

/// The nonzero entries of `R = dt(M) M^{-1}`.
#[derive(Debug, Clone)]
pub struct RMatrix {
    /// `R_11 = R_22 = -K dt(J)`.
    pub r11: SlabField,
    /// `R_31 = J dt(AK)`.
    pub r31: SlabField,
    /// `R_32 = J dt(BK)`.
    pub r32: SlabField,
}

impl RMatrix {
    /// `R u` for a slab vector field.
    pub fn apply(&self, u: &SlabVectorField) -> SlabVectorField {
        SlabVectorField::new([
            self.r11.mul_raw(u.comp(0)),
            self.r11.mul_raw(u.comp(1)),
            &self.r31.mul_raw(u.comp(0)) + &self.r32.mul_raw(u.comp(1)),
        ])
    }

    /// `R^T v`.
    pub fn apply_transpose(&self, v: &SlabVectorField) -> SlabVectorField {
        let grid = v.grid().clone();
        SlabVectorField::new([
            &self.r11.mul_raw(v.comp(0)) + &self.r31.mul_raw(v.comp(2)),
            &self.r11.mul_raw(v.comp(1)) + &self.r32.mul_raw(v.comp(2)),
            SlabField::zeros(&grid),
        ])
    }
}

/// Immutable bundle of all geometric coefficient fields for one surface
/// configuration (and optionally its time derivative).
#[derive(Debug, Clone)]
pub struct GeometryPack {
    grid: Grid,
    pub params: ExtensionParams,
    pub bottom: BottomProfile,
    /// Surface function and (optionally) its time derivative.
    pub eta: SurfaceField,
    pub deta_dt: Option<SurfaceField>,
    /// `P^eps eta` and `P^eps (dt eta)`.
    pub etabar: SlabField,
    pub detabar: Option<SlabField>,
    /// `btilde = 1 + x3/b0`.
    pub btilde: SlabField,
    /// Coefficients `A`, `B`, `J`, `K` of the flattening map.
    pub coef_a: SlabField,
    pub coef_b: SlabField,
    pub jac: SlabField,
    pub kfac: SlabField,
    /// Cached products `A K`, `B K` and the perturbation `K - 1`.
    pub ak: SlabField,
    pub bk: SlabField,
    pub km1: SlabField,
    /// Outward top normal `N = (-d1 eta, -d2 eta, 1)`.
    pub ntop: SurfaceVectorField,
    /// Outward-from-fluid bottom conormal direction `nu = (d1 b, d2 b, 1)`
    /// up to normalization (the image of `e3` under `J Amat` on `Sigma_b`).
    pub nu_bottom: SurfaceVectorField,
    /// `dt J` and the `R` matrix, present when `deta_dt` was supplied.
    pub dt_j: Option<SlabField>,
    pub rmat: Option<RMatrix>,
    /// Grid minimum of the Jacobian `J`.
    pub min_j: f64,
}

/// Residual report of the exact geometric identities.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryIdentityReport {
    /// `max_x |d_k (J Amat_jk)|` for each row `j` (Piola identity).
    pub piola: [f64; 3],
    /// `max |J Amat e3 - N|` on the top boundary.
    pub surface_normal: f64,
    /// `max |J Amat e3 - nu|` on the bottom boundary.
    pub bottom_normal: f64,
    /// `max |R^T N + dt N|` on the top boundary (when `R` is present).
    pub r_identity: Option<f64>,
}

/// Extends a surface field into the slab, per mode `f_hat(n) e^{eps |n| x3}`.
pub fn poisson_extend(f: &SurfaceField, epsilon: f64) -> SlabField {
    assert!(
        epsilon > 0.0 && epsilon <= 1.0,
        "extension epsilon must lie in (0, 1], got {epsilon}"
    );
    let grid = f.grid().clone();
    let coeffs = f.spectral();
    let (n1, n2, nz) = (grid.spec().n1, grid.spec().n2, grid.spec().nz);
    let mut slab = ndarray::Array3::zeros((n1, n2, nz));
    for i in 0..n1 {
        for j in 0..n2 {
            let rate = epsilon * grid.abs_n(i, j);
            for k in 0..nz {
                slab[[i, j, k]] = coeffs[[i, j]] * (rate * grid.x3()[k]).exp();
            }
        }
    }
    SlabField::from_spectral(&grid, slab)
}

/// Broadcasts a surface field to a slab field constant in `x3`.
pub fn lift_surface(f: &SurfaceField) -> SlabField {
    let grid = f.grid().clone();
    let (n1, n2, nz) = (grid.spec().n1, grid.spec().n2, grid.spec().nz);
    let values = ndarray::Array3::from_shape_fn((n1, n2, nz), |(i, j, _)| f.values()[[i, j]]);
    SlabField::from_values(&grid, values)
}

/// Selects the extension rate from the initial surface:
/// `delta = min(eta0 + b)/(2 b0)` and
/// `eps = min(1, delta^2 / (4 C^2 max(||eta0||_{5/2}^2, 1e-12)))`,
/// then verifies that the initial Jacobian satisfies `min J0 > delta`.
pub fn choose_epsilon(
    eta0: &SurfaceField,
    bottom: &BottomProfile,
    c_poisson: f64,
) -> Result<ExtensionParams> {
    if c_poisson <= 0.0 {
        return Err(SlabflowError::InvalidParameter(format!(
            "C_poisson must be positive, got {c_poisson}"
        )));
    }
    let clearance = (eta0 + &bottom.b).min_value();
    if clearance <= 0.0 {
        return Err(SlabflowError::SurfaceTouchesBottom { min: clearance });
    }
    let delta = clearance / (2.0 * bottom.b0);
    let eta_norm_sq = eta0.sobolev_norm(2.5).powi(2).max(1e-12);
    let epsilon = (delta * delta / (4.0 * c_poisson * c_poisson * eta_norm_sq)).min(1.0);
    let params = ExtensionParams { epsilon, delta, c_poisson };
    let pack = build_geometry(eta0, None, bottom, &params)?;
    if pack.min_j <= delta {
        return Err(SlabflowError::EpsilonRuleFailed { min_j: pack.min_j, delta, epsilon });
    }
    Ok(params)
}

/// Builds all coefficient fields for a surface configuration. When
/// `deta_dt` is supplied, the time derivatives of the coefficients (and the
/// `R` matrix) are obtained by differentiating the closed forms, never by
/// finite-differencing fields.
pub fn build_geometry(
    eta: &SurfaceField,
    deta_dt: Option<&SurfaceField>,
    bottom: &BottomProfile,
    params: &ExtensionParams,
) -> Result<GeometryPack> {
    let grid = eta.grid().clone();
    grid.check_same(bottom.b.grid(), "geometry bottom");
    let b0 = bottom.b0;

    let etabar = poisson_extend(eta, params.epsilon);
    let btilde = SlabField::from_fn(&grid, |_, _, x3| 1.0 + x3 / b0);
    let x3_field = SlabField::from_fn(&grid, |_, _, x3| x3);
    let b_slab = lift_surface(&bottom.b);
    let db1 = lift_surface(&bottom.b.deriv(1));
    let db2 = lift_surface(&bottom.b.deriv(2));

    let coef_a = &x3_field.multiply(&db1).scale(1.0 / b0) + &etabar.deriv(1).multiply(&btilde);
    let coef_b = &x3_field.multiply(&db2).scale(1.0 / b0) + &etabar.deriv(2).multiply(&btilde);
    let jac = &(&b_slab.scale(1.0 / b0) + &etabar.scale(1.0 / b0))
        + &etabar.deriv_z().multiply(&btilde);
    let min_j = jac.min_value();
    if min_j <= 0.0 {
        return Err(SlabflowError::DegenerateMap { min_j });
    }
    // K is the definitional pointwise reciprocal, kept unprojected so that
    // K J = 1 holds exactly at the nodes; every operator product involving
    // K is re-projected, so the solution space stays band-limited. The 2/3
    // rule, when enabled, applies to the coefficient *products* below.
    let kfac = SlabField::from_values_raw(&grid, jac.values().mapv(|j| 1.0 / j));
    let km1 = &kfac - &SlabField::constant(&grid, 1.0);
    let ak = coef_a.multiply(&kfac);
    let bk = coef_b.multiply(&kfac);

    let ntop = SurfaceVectorField::new([
        -&eta.deriv(1),
        -&eta.deriv(2),
        SurfaceField::constant(&grid, 1.0),
    ]);
    let nu_bottom = SurfaceVectorField::new([
        bottom.b.deriv(1),
        bottom.b.deriv(2),
        SurfaceField::constant(&grid, 1.0),
    ]);

    let (detabar, dt_j, rmat) = if let Some(deta) = deta_dt {
        grid.check_same(deta.grid(), "geometry deta_dt");
        let detabar = poisson_extend(deta, params.epsilon);
        // dt A = d1(dt etabar) btilde, dt J = dt(etabar)/b0 + d3(dt etabar) btilde,
        // dt K = -K^2 dt J (b is static).
        let dt_a = detabar.deriv(1).multiply(&btilde);
        let dt_b = detabar.deriv(2).multiply(&btilde);
        let dt_j = &detabar.scale(1.0 / b0) + &detabar.deriv_z().multiply(&btilde);
        let dt_k = -&kfac.multiply(&kfac).multiply(&dt_j);
        let dt_ak = &dt_a.multiply(&kfac) + &coef_a.multiply(&dt_k);
        let dt_bk = &dt_b.multiply(&kfac) + &coef_b.multiply(&dt_k);
        let rmat = RMatrix {
            r11: -&kfac.multiply(&dt_j),
            r31: jac.multiply(&dt_ak),
            r32: jac.multiply(&dt_bk),
        };
        (Some(detabar), Some(dt_j), Some(rmat))
    } else {
        (None, None, None)
    };

    Ok(GeometryPack {
        grid,
        params: *params,
        bottom: bottom.clone(),
        eta: eta.clone(),
        deta_dt: deta_dt.cloned(),
        etabar,
        detabar,
        btilde,
        coef_a,
        coef_b,
        jac,
        kfac,
        ak,
        bk,
        km1,
        ntop,
        nu_bottom,
        dt_j,
        rmat,
        min_j,
    })
}

impl GeometryPack {
    /// Flat equilibrium pack (`eta = 0`, flat bottom, `eps = 1`).
    pub fn flat(grid: &Grid) -> GeometryPack {
        let params = ExtensionParams { epsilon: 1.0, delta: 0.5, c_poisson: 1.0 };
        build_geometry(&SurfaceField::zeros(grid), None, &BottomProfile::flat(grid), &params)
            .expect("flat geometry is nondegenerate")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `grad_A f = (d1 f - AK d3 f, d2 f - BK d3 f, K d3 f)`, assembled as
    /// the Euclidean gradient plus Nyquist-projected perturbation products
    /// so the flat part is never truncated.
    pub fn grad_a(&self, f: &SlabField) -> SlabVectorField {
        let fz = f.deriv_z();
        SlabVectorField::new([
            &f.deriv(1) - &self.ak.mul_raw(&fz),
            &f.deriv(2) - &self.bk.mul_raw(&fz),
            &fz + &self.km1.mul_raw(&fz),
        ])
    }

    /// `div_A g = d1 g1 - AK d3 g1 + d2 g2 - BK d3 g2 + K d3 g3`.
    pub fn div_a(&self, g: &SlabVectorField) -> SlabField {
        let g1z = g.comp(0).deriv_z();
        let g2z = g.comp(1).deriv_z();
        let g3z = g.comp(2).deriv_z();
        let mut out = &g.comp(0).deriv(1) - &self.ak.mul_raw(&g1z);
        out += &(&g.comp(1).deriv(2) - &self.bk.mul_raw(&g2z));
        out += &(&g3z + &self.km1.mul_raw(&g3z));
        out
    }

    /// `lap_A f = div_A grad_A f`.
    pub fn lap_a(&self, f: &SlabField) -> SlabField {
        self.div_a(&self.grad_a(f))
    }

    /// Symmetric gradient `(D_A u)_ij = (grad_A)_i u_j + (grad_A)_j u_i`.
    pub fn sym_grad_a(&self, u: &SlabVectorField) -> SymTensorField {
        let g: Vec<SlabVectorField> = (0..3).map(|j| self.grad_a(u.comp(j))).collect();
        SymTensorField {
            s: [
                g[0].comp(0).scale(2.0),
                g[1].comp(1).scale(2.0),
                g[2].comp(2).scale(2.0),
                g[1].comp(0) + g[0].comp(1),
                g[2].comp(0) + g[0].comp(2),
                g[2].comp(1) + g[1].comp(2),
            ],
        }
    }

    /// Stress tensor `S_A(p, u) = p I - D_A u`.
    pub fn stress_a(&self, p: &SlabField, u: &SlabVectorField) -> SymTensorField {
        let d = self.sym_grad_a(u);
        SymTensorField {
            s: [
                p - &d.s[0],
                p - &d.s[1],
                p - &d.s[2],
                -&d.s[3],
                -&d.s[4],
                -&d.s[5],
            ],
        }
    }

    /// Row-wise transformed divergence of a symmetric tensor,
    /// `(div_A S)_i = div_A (S_i1, S_i2, S_i3)`.
    pub fn div_a_tensor(&self, s: &SymTensorField) -> SlabVectorField {
        SlabVectorField::new([
            self.div_a(&SlabVectorField::new([
                s.get(0, 0).clone(),
                s.get(0, 1).clone(),
                s.get(0, 2).clone(),
            ])),
            self.div_a(&SlabVectorField::new([
                s.get(1, 0).clone(),
                s.get(1, 1).clone(),
                s.get(1, 2).clone(),
            ])),
            self.div_a(&SlabVectorField::new([
                s.get(2, 0).clone(),
                s.get(2, 1).clone(),
                s.get(2, 2).clone(),
            ])),
        ])
    }

    /// Traction `S_A(p, u) N` on the top boundary.
    pub fn stress_normal_top(&self, p: &SlabField, u: &SlabVectorField) -> SurfaceVectorField {
        let s = self.stress_a(p, u);
        let mut out = Vec::with_capacity(3);
        for i in 0..3 {
            let mut acc = s.get(i, 0).trace_top().mul_raw(self.ntop.comp(0));
            acc += &s.get(i, 1).trace_top().mul_raw(self.ntop.comp(1));
            acc += &s.get(i, 2).trace_top().mul_raw(self.ntop.comp(2));
            out.push(acc);
        }
        SurfaceVectorField::new([out.remove(0), out.remove(0), out.remove(0)])
    }

    /// Divergence-preserving map `M w = (K w1, K w2, AK w1 + BK w2 + w3)`:
    /// sends divergence-free fields to divergence-A-free fields.
    pub fn m_apply(&self, w: &SlabVectorField) -> SlabVectorField {
        SlabVectorField::new([
            self.kfac.mul_raw(w.comp(0)),
            self.kfac.mul_raw(w.comp(1)),
            &(&self.ak.mul_raw(w.comp(0)) + &self.bk.mul_raw(w.comp(1))) + w.comp(2),
        ])
    }

    /// Computes the residuals of the exact geometric identities.
    pub fn verify_identities(&self) -> GeometryIdentityReport {
        // J Amat in closed form: rows (J, 0, -A), (0, J, -B), (0, 0, 1).
        let piola = [
            (&self.jac.deriv(1) - &self.coef_a.deriv_z()).linf_norm(),
            (&self.jac.deriv(2) - &self.coef_b.deriv_z()).linf_norm(),
            0.0,
        ];
        let ja_e3_top = SurfaceVectorField::new([
            -&self.coef_a.trace_top(),
            -&self.coef_b.trace_top(),
            SurfaceField::constant(&self.grid, 1.0),
        ]);
        let surface_normal = (&ja_e3_top - &self.ntop).linf_norm();
        let ja_e3_bot = SurfaceVectorField::new([
            -&self.coef_a.trace_bottom(),
            -&self.coef_b.trace_bottom(),
            SurfaceField::constant(&self.grid, 1.0),
        ]);
        let bottom_normal = (&ja_e3_bot - &self.nu_bottom).linf_norm();

        let r_identity = match (&self.rmat, &self.deta_dt) {
            (Some(r), Some(deta)) => {
                // R^T N + dt N on Sigma with N = (-d1 eta, -d2 eta, 1),
                // dt N = (-d1 dt eta, -d2 dt eta, 0).
                let r11 = r.r11.trace_top();
                let r31 = r.r31.trace_top();
                let r32 = r.r32.trace_top();
                let res1 = &(&r11.mul_raw(self.ntop.comp(0)) + &r31) - &deta.deriv(1);
                let res2 = &(&r11.mul_raw(self.ntop.comp(1)) + &r32) - &deta.deriv(2);
                Some(res1.linf_norm().max(res2.linf_norm()))
            }
            _ => None,
        };
        GeometryIdentityReport { piola, surface_normal, bottom_normal, r_identity }
    }
}

/// Symmetric 3x3 tensor field, stored as `(11, 22, 33, 12, 13, 23)`.
#[derive(Debug, Clone)]
pub struct SymTensorField {
    s: [SlabField; 6],
}

impl SymTensorField {
    pub fn get(&self, i: usize, j: usize) -> &SlabField {
        match (i.min(j), i.max(j)) {
            (0, 0) => &self.s[0],
            (1, 1) => &self.s[1],
            (2, 2) => &self.s[2],
            (0, 1) => &self.s[3],
            (0, 2) => &self.s[4],
            (1, 2) => &self.s[5],
            _ => panic!("tensor index out of range: ({i}, {j})"),
        }
    }

    /// Frobenius `L^2` norm `(int sum_ij |S_ij|^2)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                total += self.get(i, j).l2_norm().powi(2);
            }
        }
        total.sqrt()
    }
}

/// Tangential projection at the initial surface:
/// `Pi0(v) = v - (v . N0) N0 / |N0|^2` with `N0 = (-d1 eta0, -d2 eta0, 1)`.
pub fn project_tangent(v: &SurfaceVectorField, eta0: &SurfaceField) -> SurfaceVectorField {
    let grid = eta0.grid().clone();
    // Pointwise 3x3 projection at every node: exactly idempotent and
    // exactly annihilates N0. The result is intentionally unprojected
    // (pointwise-exact), mirroring the raw-coefficient convention.
    let n1 = -&eta0.deriv(1);
    let n2 = -&eta0.deriv(2);
    let mut out = [
        v.comp(0).values().clone(),
        v.comp(1).values().clone(),
        v.comp(2).values().clone(),
    ];
    for i in 0..grid.spec().n1 {
        for j in 0..grid.spec().n2 {
            let n = [n1.values()[[i, j]], n2.values()[[i, j]], 1.0];
            let n_sq = n[0] * n[0] + n[1] * n[1] + 1.0;
            let dot = out[0][[i, j]] * n[0] + out[1][[i, j]] * n[1] + out[2][[i, j]];
            for (c, nc) in n.iter().enumerate() {
                out[c][[i, j]] -= dot * nc / n_sq;
            }
        }
    }
    let [o0, o1, o2] = out;
    SurfaceVectorField::new([
        SurfaceField::from_values_raw(&grid, o0),
        SurfaceField::from_values_raw(&grid, o1),
        SurfaceField::from_values_raw(&grid, o2),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid(n1: usize, n2: usize, nz: usize) -> Grid {
        Grid::new(GridSpec { l1: 1.0, l2: 1.0, b0: 1.0, n1, n2, nz, dealias: false }).unwrap()
    }

    fn default_params() -> ExtensionParams {
        ExtensionParams { epsilon: 0.3, delta: 0.45, c_poisson: 1.0 }
    }

    #[test]
    fn poisson_extend_constant_and_single_mode() {
        let g = grid(8, 8, 17);
        let c = SurfaceField::constant(&g, 2.5);
        let ext = poisson_extend(&c, 0.5);
        assert!((&ext - &SlabField::constant(&g, 2.5)).linf_norm() < 1e-13);

        let eps = 0.3;
        let f = SurfaceField::from_fn(&g, |x1, _| (2.0 * PI * x1).cos());
        let ext = poisson_extend(&f, eps);
        let expect = SlabField::from_fn(&g, |x1, _, x3| (eps * x3).exp() * (2.0 * PI * x1).cos());
        assert!((&ext - &expect).linf_norm() < 1e-12);
        // sup |d3 etabar| = eps, attained at the surface.
        let dz = ext.deriv_z();
        assert_abs_diff_eq!(dz.linf_norm(), eps, epsilon = 1e-10);
        assert_abs_diff_eq!(dz.trace_top().linf_norm(), eps, epsilon = 1e-10);
    }

    #[test]
    fn poisson_extend_trace_is_exact() {
        let g = grid(16, 16, 9);
        let f = SurfaceField::random(&g, 5, 5, 1.0);
        let ext = poisson_extend(&f, 0.07);
        assert!((&ext.trace_top() - &f).linf_norm() < 1e-12);
    }

    #[test]
    fn poisson_lemma_h1_bound() {
        // ||P^eps f||_{H^1}^2 <= (pi/eps) ||f||_{H^{1/2}-homog}^2
        //                        + (pi b0/eps) ||f||_0^2.
        let g = grid(16, 16, 17);
        let eps = 0.1;
        for seed in [1u64, 2, 3] {
            let f = SurfaceField::random(&g, seed, 5, 1.0);
            let lhs = poisson_extend(&f, eps).sobolev_norm(1).powi(2);
            let rhs = (PI / eps) * f.sobolev_norm_homogeneous(0.5).powi(2)
                + (PI * g.spec().b0 / eps) * f.sobolev_norm(0.0).powi(2);
            assert!(lhs <= rhs, "H1 bound violated: {lhs} > {rhs} (seed {seed})");
        }
    }

    #[test]
    fn poisson_lemma_general_bound() {
        // ||P^eps f||_{H^q}^2 <= (C/eps) ||f||_{H^{q-1/2}}^2, C = pi (1 + b0).
        let g = grid(16, 16, 17);
        let c = PI * (1.0 + g.spec().b0);
        for eps in [0.05, 0.2, 0.8] {
            for q in [1usize, 2] {
                let f = SurfaceField::random(&g, 11 + q as u64, 5, 1.0);
                let lhs = poisson_extend(&f, eps).sobolev_norm(q).powi(2);
                let rhs = (c / eps) * f.sobolev_norm(q as f64 - 0.5).powi(2);
                assert!(lhs <= rhs, "H{q} bound violated at eps {eps}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn epsilon_scaling_single_mode_slope() {
        // For single-mode f the vertical-derivative sup is exactly linear
        // in eps; the log-log slope over a dyadic ladder must be 1.
        let g = grid(8, 8, 33);
        let f = SurfaceField::from_fn(&g, |x1, _| 0.7 * (2.0 * PI * x1).cos());
        let sups: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&eps| poisson_extend(&f, eps).deriv_z().linf_norm())
            .collect();
        for w in sups.windows(2) {
            let slope = (w[0] / w[1]).ln() / 2f64.ln();
            assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
        }
        // Multimode: sup decreases monotonically as eps decreases.
        let f = SurfaceField::random(&g, 17, 3, 1.0);
        let sups: Vec<f64> = [0.8, 0.4, 0.2, 0.1]
            .iter()
            .map(|&eps| poisson_extend(&f, eps).deriv_z().linf_norm())
            .collect();
        assert!(sups.windows(2).all(|w| w[1] < w[0]), "not monotone: {sups:?}");
    }

    #[test]
    fn choose_epsilon_flat_equilibrium() {
        let g = grid(8, 8, 9);
        let params =
            choose_epsilon(&SurfaceField::zeros(&g), &BottomProfile::flat(&g), 1.0).unwrap();
        assert_abs_diff_eq!(params.delta, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(params.epsilon, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn choose_epsilon_worked_example() {
        let g = grid(32, 4, 17);
        let eta0 = SurfaceField::from_fn(&g, |x1, _| 0.1 * (2.0 * PI * x1).cos());
        let params = choose_epsilon(&eta0, &BottomProfile::flat(&g), 1.0).unwrap();
        assert_abs_diff_eq!(params.delta, 0.45, epsilon = 1e-12);
        let norm_sq = 0.005 * (1.0 + 4.0 * PI * PI).powf(2.5);
        let expect = (0.45f64 * 0.45 / (4.0 * norm_sq)).min(1.0);
        assert_abs_diff_eq!(params.epsilon, expect, epsilon = 1e-10);
        let pack = build_geometry(&eta0, None, &BottomProfile::flat(&g), &params).unwrap();
        assert!(pack.min_j > params.delta);
    }

    #[test]
    fn choose_epsilon_rejects_touching_surface() {
        let g = grid(8, 8, 9);
        let eta0 = SurfaceField::from_fn(&g, |x1, _| 0.5 * (2.0 * PI * x1).cos() - 0.5);
        let err = choose_epsilon(&eta0, &BottomProfile::flat(&g), 1.0).unwrap_err();
        assert!(matches!(err, SlabflowError::SurfaceTouchesBottom { .. }), "{err}");
    }

    #[test]
    fn flat_geometry_is_trivial() {
        let g = grid(8, 8, 9);
        let pack = GeometryPack::flat(&g);
        assert!(pack.coef_a.linf_norm() < 1e-14);
        assert!(pack.coef_b.linf_norm() < 1e-14);
        assert!((&pack.jac - &SlabField::constant(&g, 1.0)).linf_norm() < 1e-14);
        assert!(pack.km1.linf_norm() < 1e-14);
        assert!(pack.ntop.comp(0).linf_norm() < 1e-14);
        assert!((pack.ntop.comp(2).linf_norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn surface_jacobian_closed_form() {
        let g = grid(32, 4, 17);
        let a = 0.05;
        let eta = SurfaceField::from_fn(&g, |x1, _| a * (2.0 * PI * x1).cos());
        let params = default_params();
        let pack = build_geometry(&eta, None, &BottomProfile::flat(&g), &params).unwrap();
        let b0 = g.spec().b0;
        let expect = SurfaceField::from_fn(&g, |x1, _| {
            1.0 + a * (1.0 / b0 + params.epsilon) * (2.0 * PI * x1).cos()
        });
        assert!((&pack.jac.trace_top() - &expect).linf_norm() < 1e-10);
    }

    #[test]
    fn k_is_definitional_reciprocal() {
        let g = grid(16, 16, 9);
        let eta = SurfaceField::random(&g, 3, 3, 0.05);
        let pack =
            build_geometry(&eta, None, &BottomProfile::flat(&g), &default_params()).unwrap();
        let max_dev = pack
            .jac
            .values()
            .iter()
            .zip(pack.kfac.values().iter())
            .map(|(j, k)| (j * k - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-10, "K J - 1 pointwise deviation {max_dev}");
    }

    #[test]
    fn operators_reduce_to_euclidean_on_flat_pack() {
        let g = grid(8, 8, 9);
        let pack = GeometryPack::flat(&g);
        let u = SlabVectorField::new([
            SlabField::zeros(&g),
            SlabField::zeros(&g),
            SlabField::from_fn(&g, |_, _, x3| x3 + 1.0),
        ]);
        let div = pack.div_a(&u);
        assert!((&div - &SlabField::constant(&g, 1.0)).linf_norm() < 1e-12);

        let p = SlabField::constant(&g, 1.0);
        let traction = pack.stress_normal_top(&p, &SlabVectorField::zeros(&g));
        assert!(traction.comp(0).linf_norm() < 1e-13);
        assert!(traction.comp(1).linf_norm() < 1e-13);
        assert!((traction.comp(2) - &SurfaceField::constant(&g, 1.0)).linf_norm() < 1e-13);
    }

    /// Random discretely divergence-free field as the curl of a smooth
    /// band-limited potential (spectral partials commute exactly).
    fn random_div_free(g: &Grid, seed: u64) -> SlabVectorField {
        let psi: Vec<SlabField> = (0..3).map(|i| SlabField::random(g, seed + i, 2, 0.3)).collect();
        SlabVectorField::new([
            &psi[2].deriv(2) - &psi[1].deriv_z(),
            &psi[0].deriv_z() - &psi[2].deriv(1),
            &psi[1].deriv(1) - &psi[0].deriv(2),
        ])
    }

    #[test]
    fn m_maps_div_free_to_div_a_free() {
        let g = grid(32, 8, 13);
        let eta = SurfaceField::from_fn(&g, |x1, _| 0.05 * (2.0 * PI * x1).cos());
        let pack =
            build_geometry(&eta, None, &BottomProfile::flat(&g), &default_params()).unwrap();
        let w = random_div_free(&g, 31);
        let div_w = SlabField::linf_norm(
            &(&(&w.comp(0).deriv(1) + &w.comp(1).deriv(2)) + &w.comp(2).deriv_z()),
        );
        assert!(div_w < 1e-10, "potential construction not divergence-free: {div_w}");
        let residual = pack.div_a(&pack.m_apply(&w)).linf_norm();
        let scale = w.linf_norm();
        assert!(residual < 1e-8 * scale.max(1.0), "div_A(Mw) = {residual}");
    }

    #[test]
    fn stokes_operator_identity_on_div_a_free_fields() {
        // div_A S_A(p, u) = grad_A p - lap_A u whenever div_A u = 0.
        let g = grid(32, 8, 13);
        let eta = SurfaceField::from_fn(&g, |x1, _| 0.05 * (2.0 * PI * x1).cos());
        let pack =
            build_geometry(&eta, None, &BottomProfile::flat(&g), &default_params()).unwrap();
        let u = pack.m_apply(&random_div_free(&g, 77));
        let p = SlabField::random(&g, 99, 3, 1.0);
        let lhs = pack.div_a_tensor(&pack.stress_a(&p, &u));
        let gp = pack.grad_a(&p);
        let rhs = SlabVectorField::new([
            &gp.comp(0).clone() - &pack.lap_a(u.comp(0)),
            &gp.comp(1).clone() - &pack.lap_a(u.comp(1)),
            &gp.comp(2).clone() - &pack.lap_a(u.comp(2)),
        ]);
        let scale = lhs.linf_norm().max(rhs.linf_norm());
        let rel = (&lhs - &rhs).linf_norm() / scale;
        assert!(rel < 1e-8, "stress-divergence identity residual {rel}");
    }

    #[test]
    fn project_tangent_examples() {
        let g = grid(8, 8, 9);
        let zero_eta = SurfaceField::zeros(&g);
        let v = SurfaceVectorField::new([
            SurfaceField::constant(&g, 1.0),
            SurfaceField::constant(&g, 2.0),
            SurfaceField::constant(&g, 3.0),
        ]);
        let proj = project_tangent(&v, &zero_eta);
        assert!((proj.comp(0) - &SurfaceField::constant(&g, 1.0)).linf_norm() < 1e-13);
        assert!((proj.comp(1) - &SurfaceField::constant(&g, 2.0)).linf_norm() < 1e-13);
        assert!(proj.comp(2).linf_norm() < 1e-13);

        let eta0 = SurfaceField::random(&g, 4, 2, 0.2);
        let n0 = SurfaceVectorField::new([
            -&eta0.deriv(1),
            -&eta0.deriv(2),
            SurfaceField::constant(&g, 1.0),
        ]);
        assert!(project_tangent(&n0, &eta0).linf_norm() < 1e-11);

        let v = SurfaceVectorField::new([
            SurfaceField::random(&g, 5, 2, 1.0),
            SurfaceField::random(&g, 6, 2, 1.0),
            SurfaceField::random(&g, 7, 2, 1.0),
        ]);
        let once = project_tangent(&v, &eta0);
        let twice = project_tangent(&once, &eta0);
        assert!((&once - &twice).linf_norm() < 1e-11, "projection not idempotent");
    }

    #[test]
    fn identities_flat_static() {
        let g = grid(8, 8, 9);
        let report = GeometryPack::flat(&g).verify_identities();
        assert!(report.piola.iter().all(|&r| r < 1e-12), "{:?}", report.piola);
        assert!(report.surface_normal < 1e-13);
        assert!(report.bottom_normal < 1e-13);
        assert!(report.r_identity.is_none());
    }

    #[test]
    fn identities_curved_and_time_dependent() {
        let g = Grid::new(GridSpec {
            l1: 1.0,
            l2: 1.0,
            b0: 1.0,
            n1: 32,
            n2: 4,
            nz: 17,
            dealias: false,
        })
        .unwrap();
        // eta(t) = 0.05 cos(2 pi x1) cos(t), evaluated at t = 0.3 with the
        // closed-form time derivative supplied.
        let t: f64 = 0.3;
        let eta =
            SurfaceField::from_fn(&g, |x1, _| 0.05 * (2.0 * PI * x1).cos() * t.cos());
        let deta =
            SurfaceField::from_fn(&g, |x1, _| -0.05 * (2.0 * PI * x1).cos() * t.sin());
        let pack = build_geometry(&eta, Some(&deta), &BottomProfile::flat(&g), &default_params())
            .unwrap();
        let report = pack.verify_identities();
        assert!(report.piola.iter().all(|&r| r < 1e-8), "piola {:?}", report.piola);
        assert!(report.surface_normal < 1e-10, "surface {}", report.surface_normal);
        assert!(report.bottom_normal < 1e-10, "bottom {}", report.bottom_normal);
        let r_res = report.r_identity.unwrap();
        assert!(r_res < 1e-8, "R identity {r_res}");
    }

    #[test]
    fn degenerate_map_is_rejected() {
        let g = grid(8, 8, 9);
        // Huge negative eta pushes the surface through the bottom.
        let eta = SurfaceField::constant(&g, -2.0);
        let err = build_geometry(&eta, None, &BottomProfile::flat(&g), &default_params())
            .unwrap_err();
        assert!(matches!(err, SlabflowError::DegenerateMap { .. }), "{err}");
    }
}
