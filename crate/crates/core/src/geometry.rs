//! Flow-map differential geometry: the coefficient matrix A = (grad eta)^{-T}
//! computed by cofactors, the Jacobian J = det grad eta, transported normals
//! and tangent frame on the boundary planes, covariant operators, and the
//! closed-form first variations of J and A.
//!
//! Flow maps are stored as periodic displacements u = eta - x; the identity
//! part is differentiated analytically (it is not periodic and cannot live in
//! the Fourier basis).



use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Side, SurfaceField, VectorField, TWO_PI};

pub const DEGENERATE_J_THRESHOLD: f64 = 1e-8;

/// A flow map eta: Omega -> R^3 represented by its periodic displacement.
#[derive(Clone, Debug)]
pub struct FlowMap {
    displacement: VectorField,
}

impl FlowMap {
    pub fn identity(grid: &Grid) -> Self {
        FlowMap {
            displacement: VectorField::zeros(grid),
        }
    }

    pub fn from_displacement(displacement: VectorField) -> Self {
        FlowMap { displacement }
    }

    pub fn displacement(&self) -> &VectorField {
        &self.displacement
    }

    pub fn grid(&self) -> &Grid {
        self.displacement.grid()
    }

    /// eta = x + u evaluated on the grid (for output only; not periodic).
    pub fn values(&self) -> VectorField {
        let g = self.grid().clone();
        let id = VectorField::from_fns(&g, |x1, _, _| x1, |_, x2, _| x2, |_, _, x3| x3);
        id.lin_comb(1.0, &self.displacement, 1.0)
    }

    /// eta + s * delta for a periodic direction delta.
    pub fn perturbed(&self, delta: &VectorField, s: f64) -> FlowMap {
        FlowMap {
            displacement: self.displacement.lin_comb(1.0, delta, s),
        }
    }

    /// grad eta = I + grad u, entry (i,j) = d_j eta_i.
    pub fn gradient(&self) -> MatrixField {
        let g = self.grid();
        MatrixField::from_fn(|i, j| {
            let mut d = self.displacement.comp(i).diff(j + 1);
            if i == j {
                d = d.map(|v| v + 1.0);
            }
            let _ = g;
            d
        })
    }

    /// Squared H^k norm of the displacement plus the analytic contribution of
    /// the identity part (constant; reported so that the flow-map norm in the
    /// energy functional is nonzero at equilibrium, as for the continuous map).
    pub fn map_sobolev_sq(&self, k: usize) -> Result<f64> {
        let u = self.displacement.sobolev_norm(k)?;
        Ok(u * u + identity_map_sobolev_sq(k))
    }
}

/// Closed-form H^k(Omega)^3 squared norm of the identity map on
/// T^2 x (0,1) with period 2 pi.
pub fn identity_map_sobolev_sq(k: usize) -> f64 {
    let measure = TWO_PI * TWO_PI;
    let l2 = 2.0 * TWO_PI.powi(4) / 3.0 + measure / 3.0;
    if k == 0 {
        l2
    } else {
        l2 + 3.0 * measure
    }
}

/// 3x3 matrix of scalar fields, row-major: entry(i,j) = m[i][j].
#[derive(Clone, Debug)]
pub struct MatrixField {
    pub entries: [[ScalarField; 3]; 3],
}

impl MatrixField {
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> ScalarField) -> Self {
        MatrixField {
            entries: [
                [f(0, 0), f(0, 1), f(0, 2)],
                [f(1, 0), f(1, 1), f(1, 2)],
                [f(2, 0), f(2, 1), f(2, 2)],
            ],
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarField {
        &self.entries[i][j]
    }
}

/// All derived quantities of a flow map snapshot.
#[derive(Clone, Debug)]
pub struct GeometryCache {
    pub eta: FlowMap,
    /// grad_eta entry (i,j) = d_j eta_i.
    pub grad_eta: MatrixField,
    /// Cofactor matrix J*A (exact polynomial of grad eta entries).
    pub ja: MatrixField,
    /// A = (grad eta)^{-T}.
    pub a: MatrixField,
    pub jac: ScalarField,
    /// Transported normal n~ = A N per boundary plane.
    pub n_tilde: [[SurfaceField; 3]; 2],
    pub n_tilde_mag: [SurfaceField; 2],
    /// Unit transported normal.
    pub n_unit: [[SurfaceField; 3]; 2],
    /// Orthonormal tangent frame tau1, tau2 per plane.
    pub tau1: [[SurfaceField; 3]; 2],
    pub tau2: [[SurfaceField; 3]; 2],
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Bottom => 0,
        Side::Top => 1,
    }
}

impl GeometryCache {
    pub fn grid(&self) -> &Grid {
        self.eta.grid()
    }

    pub fn n_tilde(&self, side: Side) -> &[SurfaceField; 3] {
        &self.n_tilde[side_index(side)]
    }

    pub fn n_tilde_mag(&self, side: Side) -> &SurfaceField {
        &self.n_tilde_mag[side_index(side)]
    }

    pub fn n_unit(&self, side: Side) -> &[SurfaceField; 3] {
        &self.n_unit[side_index(side)]
    }

    pub fn tau1(&self, side: Side) -> &[SurfaceField; 3] {
        &self.tau1[side_index(side)]
    }

    pub fn tau2(&self, side: Side) -> &[SurfaceField; 3] {
        &self.tau2[side_index(side)]
    }

    pub fn min_jacobian(&self) -> f64 {
        self.jac.min_value()
    }
}

/// Gradient matrix of a periodic vector field: entry (i,j) = d_j u_i.
pub fn gradient(u: &VectorField) -> MatrixField {
    MatrixField::from_fn(|i, j| u.comp(i).diff(j + 1))
}

fn cofactor(grad: &MatrixField, i: usize, j: usize) -> ScalarField {
    // Cyclic rows/columns give cof(M)_{ij} without an explicit sign factor:
    // cof_{ij} = M[i+1][j+1] M[i+2][j+2] - M[i+1][j+2] M[i+2][j+1].
    let r = [(i + 1) % 3, (i + 2) % 3];
    let c = [(j + 1) % 3, (j + 2) % 3];
    let t1 = grad.entry(r[0], c[0]).mul_raw(grad.entry(r[1], c[1]));
    let t2 = grad.entry(r[0], c[1]).mul_raw(grad.entry(r[1], c[0]));
    t1.lin_comb(1.0, &t2, -1.0)
}

fn surf_dot(a: &[SurfaceField; 3], b: &[SurfaceField; 3]) -> SurfaceField {
    a[0].mul(&b[0])
        .lin_comb(1.0, &a[1].mul(&b[1]), 1.0)
        .lin_comb(1.0, &a[2].mul(&b[2]), 1.0)
}

pub fn surf_cross(a: &[SurfaceField; 3], b: &[SurfaceField; 3]) -> [SurfaceField; 3] {
    [
        a[1].mul(&b[2]).lin_comb(1.0, &a[2].mul(&b[1]), -1.0),
        a[2].mul(&b[0]).lin_comb(1.0, &a[0].mul(&b[2]), -1.0),
        a[0].mul(&b[1]).lin_comb(1.0, &a[1].mul(&b[0]), -1.0),
    ]
}

/// Build the geometry cache for a flow map.
pub fn compute_geometry(eta: &FlowMap) -> Result<GeometryCache> {
    let grid = eta.grid().clone();
    let grad_eta = eta.gradient();

    // J A = cof(grad eta): exact rational-free algebra of the gradient
    // entries, kept raw so pointwise identities hold at the nodes.
    let ja = MatrixField::from_fn(|i, j| cofactor(&grad_eta, i, j));

    // J = sum_j d_j eta_0 * cof_{0j}
    let mut jac = ScalarField::zeros(&grid);
    for j in 0..3 {
        let t = grad_eta.entry(0, j).mul_raw(ja.entry(0, j));
        jac.add_assign_scaled(&t, 1.0);
    }
    let min_j = jac.min_value();
    if !min_j.is_finite() || min_j <= DEGENERATE_J_THRESHOLD {
        return Err(Error::DegenerateMap {
            min_j,
            threshold: DEGENERATE_J_THRESHOLD,
        });
    }

    let jinv = jac.recip();
    let a = MatrixField::from_fn(|i, j| ja.entry(i, j).mul_raw(&jinv));

    let mut n_tilde_v: Vec<[SurfaceField; 3]> = Vec::with_capacity(2);
    let mut n_mag_v: Vec<SurfaceField> = Vec::with_capacity(2);
    let mut n_unit_v: Vec<[SurfaceField; 3]> = Vec::with_capacity(2);
    let mut tau1_v: Vec<[SurfaceField; 3]> = Vec::with_capacity(2);
    let mut tau2_v: Vec<[SurfaceField; 3]> = Vec::with_capacity(2);

    for side in Side::BOTH {
        let s = side.normal_sign();
        let nt: [SurfaceField; 3] = [
            a.entry(0, 2).trace(side).map(|v| s * v),
            a.entry(1, 2).trace(side).map(|v| s * v),
            a.entry(2, 2).trace(side).map(|v| s * v),
        ];
        let mag = surf_dot(&nt, &nt).map(f64::sqrt);
        let inv_mag = mag.map(|v| 1.0 / v);
        let nu = [nt[0].mul(&inv_mag), nt[1].mul(&inv_mag), nt[2].mul(&inv_mag)];

        // tangent frame from the boundary traces of d_1 eta and d_2 eta
        let e1: [SurfaceField; 3] = [
            grad_eta.entry(0, 0).trace(side),
            grad_eta.entry(1, 0).trace(side),
            grad_eta.entry(2, 0).trace(side),
        ];
        let e2: [SurfaceField; 3] = [
            grad_eta.entry(0, 1).trace(side),
            grad_eta.entry(1, 1).trace(side),
            grad_eta.entry(2, 1).trace(side),
        ];
        let e1n = surf_dot(&e1, &e1).map(f64::sqrt);
        let inv_e1n = e1n.map(|v| 1.0 / v);
        let t1 = [e1[0].mul(&inv_e1n), e1[1].mul(&inv_e1n), e1[2].mul(&inv_e1n)];
        // Gram-Schmidt: tau_hat = e2 - (e1.e2/|e1|^2) e1
        let proj = surf_dot(&e1, &e2).mul(&inv_e1n).mul(&inv_e1n);
        let th: [SurfaceField; 3] = [
            e2[0].lin_comb(1.0, &proj.mul(&e1[0]), -1.0),
            e2[1].lin_comb(1.0, &proj.mul(&e1[1]), -1.0),
            e2[2].lin_comb(1.0, &proj.mul(&e1[2]), -1.0),
        ];
        let thn = surf_dot(&th, &th).map(f64::sqrt);
        let inv_thn = thn.map(|v| 1.0 / v);
        let t2 = [th[0].mul(&inv_thn), th[1].mul(&inv_thn), th[2].mul(&inv_thn)];

        n_tilde_v.push(nt);
        n_mag_v.push(mag);
        n_unit_v.push(nu);
        tau1_v.push(t1);
        tau2_v.push(t2);
    }

    let n_tilde = [n_tilde_v.remove(0), n_tilde_v.remove(0)];
    let n_tilde_mag = [n_mag_v.remove(0), n_mag_v.remove(0)];
    let n_unit = [n_unit_v.remove(0), n_unit_v.remove(0)];
    let tau1 = [tau1_v.remove(0), tau1_v.remove(0)];
    let tau2 = [tau2_v.remove(0), tau2_v.remove(0)];

    Ok(GeometryCache {
        eta: eta.clone(),
        grad_eta,
        ja,
        a,
        jac,
        n_tilde,
        n_tilde_mag,
        n_unit,
        tau1,
        tau2,
    })
}

/// Max over i of the sup-norm of d_j (J A_{ij}); vanishes analytically.
pub fn piola_residual(cache: &GeometryCache) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..3 {
        let mut div = ScalarField::zeros(cache.grid());
        for j in 0..3 {
            div.add_assign_scaled(&cache.ja.entry(i, j).diff(j + 1), 1.0);
        }
        worst = worst.max(div.sup_norm());
    }
    worst
}

/// First variation of (J, A) in direction delta_eta:
/// dJ = J A_{ij} d_j(delta_eta_i), dA_{ij} = -A_{il} d_l(delta_eta_m) A_{mj}.
pub fn geometry_directional_derivative(
    cache: &GeometryCache,
    delta_eta: &VectorField,
) -> (ScalarField, MatrixField) {
    // Pointwise algebraic identities: raw products, so the result matches a
    // finite-difference oracle of the (pointwise-exact) cofactor geometry.
    let grad_d = gradient(delta_eta);
    let mut dj = ScalarField::zeros(cache.grid());
    for i in 0..3 {
        for j in 0..3 {
            dj.add_assign_scaled(&cache.ja.entry(i, j).mul_raw(grad_d.entry(i, j)), 1.0);
        }
    }
    let da = MatrixField::from_fn(|i, j| {
        let mut acc = ScalarField::zeros(cache.grid());
        for l in 0..3 {
            for m in 0..3 {
                let t = cache
                    .a
                    .entry(i, l)
                    .mul_raw(grad_d.entry(m, l))
                    .mul_raw(cache.a.entry(m, j));
                acc.add_assign_scaled(&t, -1.0);
            }
        }
        acc
    });
    (dj, da)
}

/// Covariant gradient (nabla_a f)_i = A_{ij} d_j f.
pub fn covariant_gradient(cache: &GeometryCache, f: &ScalarField) -> VectorField {
    let d = [f.diff(1), f.diff(2), f.diff(3)];
    VectorField {
        components: [0, 1, 2].map(|i| {
            let mut acc = ScalarField::zeros(cache.grid());
            for j in 0..3 {
                acc.add_assign_scaled(&cache.a.entry(i, j).mul(&d[j]), 1.0);
            }
            acc
        }),
    }
}

/// Covariant divergence div_a u = A_{ij} d_j u_i.
pub fn covariant_divergence(cache: &GeometryCache, u: &VectorField) -> ScalarField {
    let mut acc = ScalarField::zeros(cache.grid());
    for i in 0..3 {
        for j in 0..3 {
            acc.add_assign_scaled(&cache.a.entry(i, j).mul(&u.comp(i).diff(j + 1)), 1.0);
        }
    }
    acc
}

/// Covariant Laplacian Delta_a f = div_a (nabla_a f).
pub fn covariant_laplacian(cache: &GeometryCache, f: &ScalarField) -> ScalarField {
    covariant_divergence(cache, &covariant_gradient(cache, f))
}

/// Covariant curl (curl_a u)_i = eps_{ijk} A_{jl} d_l u_k.
pub fn covariant_curl(cache: &GeometryCache, u: &VectorField) -> VectorField {
    let grad_u = gradient(u); // (k, l) = d_l u_k
    let term = |j: usize, k: usize| -> ScalarField {
        let mut acc = ScalarField::zeros(cache.grid());
        for l in 0..3 {
            acc.add_assign_scaled(&cache.a.entry(j, l).mul(grad_u.entry(k, l)), 1.0);
        }
        acc
    };
    VectorField {
        components: [
            term(1, 2).lin_comb(1.0, &term(2, 1), -1.0),
            term(2, 0).lin_comb(1.0, &term(0, 2), -1.0),
            term(0, 1).lin_comb(1.0, &term(1, 0), -1.0),
        ],
    }
}

/// Covariant flux of a scalar across a boundary plane:
/// (nabla_a f . n~) = N_j A_{ij} A_{il} d_l f restricted to the plane.
pub fn covariant_flux(cache: &GeometryCache, f: &ScalarField, side: Side) -> SurfaceField {
    let grad = covariant_gradient(cache, f);
    let nt = cache.n_tilde(side);
    let tr = [
        grad.comp(0).trace(side),
        grad.comp(1).trace(side),
        grad.comp(2).trace(side),
    ];
    surf_dot(&tr, nt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VerticalScheme;
    use ndarray::Zip;
    use rand::Rng;
    use rand::SeedableRng;

    fn grid() -> Grid {
        Grid::new(8, 8, 9, VerticalScheme::ChebyshevCollocation).unwrap()
    }

    fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        let mut err: f64 = 0.0;
        Zip::from(a.values()).and(b.values()).for_each(|x, y| {
            err = err.max((x - y).abs());
        });
        err
    }

    /// Band-limited periodic displacement whose quadratic products stay
    /// inside the dealias window.
    pub(crate) fn smooth_displacement(grid: &Grid, amp: f64, seed: u64) -> VectorField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c0: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c1: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c2: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |c: Vec<f64>| {
            move |x1: f64, x2: f64, x3: f64| {
                c[0] * x1.sin() * x3
                    + c[1] * x2.cos() * (x3 * x3 - x3)
                    + c[2] * (x1 + x2).sin() * x3 * (1.0 - x3)
                    + c[3] * x1.cos()
                    + c[4] * x2.sin() * x3
                    + c[5] * x3 * x3
            }
        };
        let (f0, f1, f2) = (f(c0), f(c1), f(c2));
        VectorField::from_fns(
            grid,
            move |x1, x2, x3| amp * f0(x1, x2, x3),
            move |x1, x2, x3| amp * f1(x1, x2, x3),
            move |x1, x2, x3| amp * f2(x1, x2, x3),
        )
    }

    pub(crate) fn smooth_map(grid: &Grid, amp: f64, seed: u64) -> FlowMap {
        FlowMap::from_displacement(smooth_displacement(grid, amp, seed))
    }

    #[test]
    fn identity_map_geometry() {
        let g = grid();
        let cache = compute_geometry(&FlowMap::identity(&g)).unwrap();
        assert!(max_diff(&cache.jac, &ScalarField::constant(&g, 1.0)) <= 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    max_diff(cache.a.entry(i, j), &ScalarField::constant(&g, expect)) <= 1e-12
                );
            }
        }
        for side in Side::BOTH {
            let s = side.normal_sign();
            assert!(cache.n_tilde(side)[2].map(|v| v - s).sup_norm() <= 1e-12);
            assert!(cache.n_tilde(side)[0].sup_norm() <= 1e-12);
            assert!(cache.tau1(side)[0].map(|v| v - 1.0).sup_norm() <= 1e-12);
            assert!(cache.tau2(side)[1].map(|v| v - 1.0).sup_norm() <= 1e-12);
        }
        assert!(piola_residual(&cache) <= 1e-13);
    }

    #[test]
    fn shear_map_geometry() {
        let g = grid();
        let a = 0.3;
        let eta = FlowMap::from_displacement(VectorField::from_fns(
            &g,
            move |_, _, x3| a * x3,
            |_, _, _| 0.0,
            |_, _, _| 0.0,
        ));
        let cache = compute_geometry(&eta).unwrap();
        assert!(max_diff(&cache.jac, &ScalarField::constant(&g, 1.0)) <= 1e-12);
        let expect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.3, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    max_diff(cache.a.entry(i, j), &ScalarField::constant(&g, expect[i][j]))
                        <= 1e-12,
                    "A[{i}][{j}]"
                );
            }
        }
        assert!(piola_residual(&cache) <= 1e-10);
    }

    #[test]
    fn squeeze_map_geometry() {
        let g = grid();
        let eta = FlowMap::from_displacement(VectorField::from_fns(
            &g,
            |_, _, _| 0.0,
            |_, _, _| 0.0,
            |_, _, x3| -0.5 * x3,
        ));
        let cache = compute_geometry(&eta).unwrap();
        assert!(max_diff(&cache.jac, &ScalarField::constant(&g, 0.5)) <= 1e-12);
        for (i, expect) in [1.0, 1.0, 2.0].into_iter().enumerate() {
            assert!(max_diff(cache.a.entry(i, i), &ScalarField::constant(&g, expect)) <= 1e-12);
        }
    }

    #[test]
    fn degenerate_map_rejected() {
        let g = grid();
        let eta = FlowMap::from_displacement(VectorField::from_fns(
            &g,
            |_, _, _| 0.0,
            |_, _, _| 0.0,
            |_, _, x3| -x3,
        ));
        assert!(matches!(
            compute_geometry(&eta),
            Err(Error::DegenerateMap { .. })
        ));
    }

    #[test]
    fn piola_residual_small_for_band_limited_maps() {
        let g = Grid::new(16, 16, 17, VerticalScheme::ChebyshevCollocation).unwrap();
        for seed in 0..3 {
            let eta = smooth_map(&g, 0.05, seed);
            let cache = compute_geometry(&eta).unwrap();
            let r = piola_residual(&cache);
            assert!(r <= 1e-9, "seed {seed}: residual {r:.3e}");
        }
    }

    #[test]
    fn directional_derivative_matches_finite_differences() {
        let g = grid();
        let eta = smooth_map(&g, 0.08, 7);
        let delta = smooth_displacement(&g, 1.0, 8);
        let cache = compute_geometry(&eta).unwrap();
        let (dj, da) = geometry_directional_derivative(&cache, &delta);
        let h = 1e-5;
        let plus = compute_geometry(&eta.perturbed(&delta, h)).unwrap();
        let minus = compute_geometry(&eta.perturbed(&delta, -h)).unwrap();
        let fd_j = plus.jac.lin_comb(1.0 / (2.0 * h), &minus.jac, -1.0 / (2.0 * h));
        let scale_j = dj.sup_norm().max(1e-3);
        assert!(max_diff(&dj, &fd_j) <= 1e-5 * scale_j, "dJ mismatch");
        for i in 0..3 {
            for j in 0..3 {
                let fd = plus
                    .a
                    .entry(i, j)
                    .lin_comb(1.0 / (2.0 * h), minus.a.entry(i, j), -1.0 / (2.0 * h));
                let scale = da.entry(i, j).sup_norm().max(1e-3);
                assert!(max_diff(da.entry(i, j), &fd) <= 2e-5 * scale, "dA[{i}][{j}]");
            }
        }
    }

    #[test]
    fn directional_derivative_trivial_cases() {
        let g = grid();
        let cache = compute_geometry(&FlowMap::identity(&g)).unwrap();
        let delta = VectorField::from_fns(&g, |_, _, x3| x3, |_, _, _| 0.0, |_, _, _| 0.0);
        let (dj, da) = geometry_directional_derivative(&cache, &delta);
        assert!(dj.sup_norm() <= 1e-12);
        // dA = -(grad delta)^T at the identity: only dA[3][1] = -1 survives
        assert!(max_diff(da.entry(2, 0), &ScalarField::constant(&g, -1.0)) <= 1e-12);
        let c = 0.7;
        let delta2 =
            VectorField::from_fns(&g, |_, _, _| 0.0, |_, _, _| 0.0, move |_, _, x3| c * x3);
        let (dj2, _) = geometry_directional_derivative(&cache, &delta2);
        assert!(max_diff(&dj2, &ScalarField::constant(&g, c)) <= 1e-12);
    }

    #[test]
    fn covariant_ops_reduce_to_euclidean_at_identity() {
        let g = grid();
        let cache = compute_geometry(&FlowMap::identity(&g)).unwrap();
        let f = ScalarField::from_fn(&g, |x1, x2, x3| x1.sin() * x2.cos() + x3 * x3);
        let grad = covariant_gradient(&cache, &f);
        assert!(max_diff(grad.comp(0), &f.diff(1)) <= 1e-11);
        assert!(max_diff(grad.comp(2), &f.diff(3)) <= 1e-11);
        let lap = covariant_laplacian(&cache, &f);
        let mut euclid = f.diff(1).diff(1);
        euclid.add_assign_scaled(&f.diff(2).diff(2), 1.0);
        euclid.add_assign_scaled(&f.diff(3).diff(3), 1.0);
        assert!(max_diff(&lap, &euclid) <= 1e-9 * euclid.sup_norm().max(1.0));
        let curl = covariant_curl(&cache, &grad);
        assert!(curl.sup_norm() <= 1e-10 * grad.sup_norm().max(1.0));
    }

    #[test]
    fn covariant_gradient_shear_closed_form() {
        let g = grid();
        let a = 0.3;
        let eta = FlowMap::from_displacement(VectorField::from_fns(
            &g,
            move |_, _, x3| a * x3,
            |_, _, _| 0.0,
            |_, _, _| 0.0,
        ));
        let cache = compute_geometry(&eta).unwrap();
        let f = ScalarField::from_fn(&g, |_, _, x3| x3);
        let grad = covariant_gradient(&cache, &f);
        // nabla_a x3 = column 3 of A = (0, 0, 1)
        assert!(grad.comp(0).sup_norm() <= 1e-11);
        assert!(max_diff(grad.comp(2), &ScalarField::constant(&g, 1.0)) <= 1e-11);
        assert!(max_diff(cache.a.entry(2, 0), &ScalarField::constant(&g, -a)) <= 1e-12);
    }

    #[test]
    fn vector_identity_on_boundary() {
        // |n~|^2 f = (f.n~) n~ + n~ x (f x n~) pointwise on the planes
        let g = grid();
        let eta = smooth_map(&g, 0.05, 3);
        let cache = compute_geometry(&eta).unwrap();
        let f = [
            SurfaceField::from_fn(&g, Side::Top, |x1, x2| (x1 + x2).sin() + 0.3),
            SurfaceField::from_fn(&g, Side::Top, |x1, _| x1.cos()),
            SurfaceField::from_fn(&g, Side::Top, |_, x2| 0.5 * x2.sin() - 1.0),
        ];
        let nt = cache.n_tilde(Side::Top);
        let mag = cache.n_tilde_mag(Side::Top);
        let dot = surf_dot(&f, nt);
        let fxn = surf_cross(&f, nt);
        let nxfxn = surf_cross(nt, &fxn);
        for i in 0..3 {
            let lhs = mag.mul(mag).mul(&f[i]);
            let rhs = dot.mul(&nt[i]).lin_comb(1.0, &nxfxn[i], 1.0);
            let err = lhs.lin_comb(1.0, &rhs, -1.0).sup_norm();
            assert!(err <= 1e-10, "component {i}: {err:.3e}");
        }
    }

    #[test]
    fn laplacian_curl_curl_identity() {
        // -Delta f = curl_a curl_a f - grad_a div_a f at the identity map
        let g = grid();
        let cache = compute_geometry(&FlowMap::identity(&g)).unwrap();
        let f = VectorField::from_fns(
            &g,
            |x1, x2, x3| x1.sin() * x2.cos() * (1.0 + 0.5 * x3 * x3),
            |x1, _, x3| (x1).cos() * x3,
            |_, x2, x3| x2.sin() * (x3 * x3 - x3),
        );
        let curl = covariant_curl(&cache, &f);
        let curlcurl = covariant_curl(&cache, &curl);
        let div = covariant_divergence(&cache, &f);
        let graddiv = covariant_gradient(&cache, &div);
        for i in 0..3 {
            let mut lap = f.comp(i).diff(1).diff(1);
            lap.add_assign_scaled(&f.comp(i).diff(2).diff(2), 1.0);
            lap.add_assign_scaled(&f.comp(i).diff(3).diff(3), 1.0);
            let rhs = curlcurl.comp(i).lin_comb(1.0, &graddiv.comp(i), -1.0);
            let err = max_diff(&lap.scale(-1.0), &rhs);
            assert!(err <= 1e-8 * lap.sup_norm().max(1.0), "component {i}: {err:.3e}");
        }
    }

    #[test]
    fn frame_orthonormal_on_boundary() {
        let g = grid();
        let eta = smooth_map(&g, 0.05, 11);
        let cache = compute_geometry(&eta).unwrap();
        for side in Side::BOTH {
            let t1 = cache.tau1(side);
            let t2 = cache.tau2(side);
            let n = cache.n_unit(side);
            assert!(surf_dot(t1, t2).sup_norm() <= 1e-10);
            assert!(surf_dot(t1, n).sup_norm() <= 1e-10);
            assert!(surf_dot(t2, n).sup_norm() <= 1e-10);
            assert!(surf_dot(t1, t1).map(|v| v - 1.0).sup_norm() <= 1e-10);
            assert!(surf_dot(n, n).map(|v| v - 1.0).sup_norm() <= 1e-10);
        }
    }
}
