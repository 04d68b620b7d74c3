//! Boundary-value solves: constant-coefficient Poisson with Dirichlet data,
//! variable-coefficient divergence-form problems, Helmholtz problems with
//! Neumann or Robin flux conditions, and the inverse horizontal Laplacian on
//! the boundary planes.
//!
//! Discretization: Fourier collocation in the horizontal, collocation rows in
//! the vertical with the PDE rows at the two boundary planes replaced by the
//! boundary-condition rows (tau method). Variable-coefficient problems are
//! solved by restarted GMRES preconditioned with the per-horizontal-mode
//! constant-coefficient direct solve.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::GeometryCache;
use crate::grid::{Grid, ScalarField, Side, SurfaceField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    DirichletLaplace,
    DirichletDivForm,
    NeumannHelmholtz,
    RobinHelmholtz,
}

/// One boundary-value problem. `bdry` carries, per plane, the Dirichlet
/// value, the prescribed covariant flux, or the Robin right-hand side.
pub struct Problem<'a> {
    pub kind: ProblemKind,
    pub geometry: Option<&'a GeometryCache>,
    /// Scalar coefficient c in div_a(c grad_a u); 1 when absent.
    pub coefficient: Option<&'a ScalarField>,
    /// Zeroth-order coefficient K(x); 0 when absent.
    pub zeroth: Option<&'a ScalarField>,
    pub rhs: &'a ScalarField,
    pub bdry: [&'a SurfaceField; 2],
    /// Robin coefficient b per plane: flux - b u = data.
    pub robin_coeff: Option<[&'a SurfaceField; 2]>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-11,
            restart: 60,
            max_iter: 800,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub residual: f64,
    pub iterations: usize,
    pub trace_constant: Option<f64>,
}

impl<'a> Problem<'a> {
    pub fn dirichlet_laplace(rhs: &'a ScalarField, bdry: [&'a SurfaceField; 2]) -> Self {
        Problem {
            kind: ProblemKind::DirichletLaplace,
            geometry: None,
            coefficient: None,
            zeroth: None,
            rhs,
            bdry,
            robin_coeff: None,
        }
    }

    pub fn dirichlet_divform(
        geometry: Option<&'a GeometryCache>,
        coefficient: Option<&'a ScalarField>,
        zeroth: Option<&'a ScalarField>,
        rhs: &'a ScalarField,
        bdry: [&'a SurfaceField; 2],
    ) -> Self {
        Problem {
            kind: ProblemKind::DirichletDivForm,
            geometry,
            coefficient,
            zeroth,
            rhs,
            bdry,
            robin_coeff: None,
        }
    }

    pub fn neumann_helmholtz(
        geometry: Option<&'a GeometryCache>,
        coefficient: Option<&'a ScalarField>,
        zeroth: Option<&'a ScalarField>,
        rhs: &'a ScalarField,
        flux: [&'a SurfaceField; 2],
    ) -> Self {
        Problem {
            kind: ProblemKind::NeumannHelmholtz,
            geometry,
            coefficient,
            zeroth,
            rhs,
            bdry: flux,
            robin_coeff: None,
        }
    }

    pub fn robin_helmholtz(
        geometry: Option<&'a GeometryCache>,
        coefficient: Option<&'a ScalarField>,
        zeroth: Option<&'a ScalarField>,
        rhs: &'a ScalarField,
        robin_rhs: [&'a SurfaceField; 2],
        robin_coeff: [&'a SurfaceField; 2],
    ) -> Self {
        Problem {
            kind: ProblemKind::RobinHelmholtz,
            geometry,
            coefficient,
            zeroth,
            rhs,
            bdry: robin_rhs,
            robin_coeff: Some(robin_coeff),
        }
    }

    fn grid(&self) -> &Grid {
        self.rhs.grid()
    }

    fn is_dirichlet(&self) -> bool {
        matches!(
            self.kind,
            ProblemKind::DirichletLaplace | ProblemKind::DirichletDivForm
        )
    }

    fn is_pure_neumann_poisson(&self) -> bool {
        self.kind == ProblemKind::NeumannHelmholtz
            && self
                .zeroth
                .map(|k| k.sup_norm() <= 1e-14)
                .unwrap_or(true)
    }
}

// ---------------------------------------------------------------------------
// dense complex LU for the per-mode vertical systems
// ---------------------------------------------------------------------------

struct DenseLu {
    n: usize,
    a: Vec<Complex64>,
    piv: Vec<usize>,
}

impl DenseLu {
    fn factor(mut a: Vec<Complex64>, n: usize) -> Option<DenseLu> {
        let mut piv = vec![0usize; n];
        for col in 0..n {
            let mut best = col;
            let mut best_mag = a[col * n + col].norm_sqr();
            for row in col + 1..n {
                let m = a[row * n + col].norm_sqr();
                if m > best_mag {
                    best = row;
                    best_mag = m;
                }
            }
            if best_mag == 0.0 {
                return None;
            }
            piv[col] = best;
            if best != col {
                for j in 0..n {
                    a.swap(col * n + j, best * n + j);
                }
            }
            let d = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / d;
                a[row * n + col] = f;
                for j in col + 1..n {
                    let v = a[col * n + j];
                    a[row * n + j] -= f * v;
                }
            }
        }
        Some(DenseLu { n, a, piv })
    }

    fn solve(&self, b: &mut [Complex64]) {
        let n = self.n;
        for col in 0..n {
            let p = self.piv[col];
            if p != col {
                b.swap(col, p);
            }
            let bc = b[col];
            for row in col + 1..n {
                b[row] -= self.a[row * n + col] * bc;
            }
        }
        for col in (0..n).rev() {
            b[col] /= self.a[col * n + col];
            let bc = b[col];
            for row in 0..col {
                b[row] -= self.a[row * n + col] * bc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// operator application
// ---------------------------------------------------------------------------

/// Metric entries G_{3l} = sum_i A_{i3} A_{il} traced on a plane
/// (identity geometry: G = I).
fn metric_row3(problem: &Problem, side: Side) -> [SurfaceField; 3] {
    let g = problem.grid();
    match problem.geometry {
        None => [
            SurfaceField::constant(g, side, 0.0),
            SurfaceField::constant(g, side, 0.0),
            SurfaceField::constant(g, side, 1.0),
        ],
        Some(geo) => {
            let entry = |l: usize| {
                let mut acc = SurfaceField::zeros(g, side);
                for i in 0..3 {
                    let t = geo.a.entry(i, 2).trace(side).mul(&geo.a.entry(i, l).trace(side));
                    acc = acc.lin_comb(1.0, &t, 1.0);
                }
                acc
            };
            [entry(0), entry(1), entry(2)]
        }
    }
}

/// Apply the full discrete operator including the tau boundary rows.
fn apply_operator(problem: &Problem, u: &ScalarField) -> ScalarField {
    let grid = problem.grid().clone();
    let grad = [u.diff(1), u.diff(2), u.diff(3)];

    // flux vector w_i = c A_{il} d_l u
    let w: [ScalarField; 3] = match problem.geometry {
        None => {
            let c = problem.coefficient;
            [0, 1, 2].map(|i| match c {
                None => grad[i].clone(),
                Some(cf) => cf.mul(&grad[i]),
            })
        }
        Some(geo) => [0, 1, 2].map(|i| {
            let mut acc = ScalarField::zeros(&grid);
            for l in 0..3 {
                acc.add_assign_scaled(&geo.a.entry(i, l).mul(&grad[l]), 1.0);
            }
            match problem.coefficient {
                None => acc,
                Some(cf) => cf.mul(&acc),
            }
        }),
    };

    // div_a w = A_{ij} d_j w_i
    let mut div = ScalarField::zeros(&grid);
    match problem.geometry {
        None => {
            for (i, wi) in w.iter().enumerate() {
                div.add_assign_scaled(&wi.diff(i + 1), 1.0);
            }
        }
        Some(geo) => {
            for (i, wi) in w.iter().enumerate() {
                for j in 0..3 {
                    div.add_assign_scaled(&geo.a.entry(i, j).mul(&wi.diff(j + 1)), 1.0);
                }
            }
        }
    }

    let mut out = div.scale(-1.0);
    if let Some(k) = problem.zeroth {
        out.add_assign_scaled(&k.mul_raw(u), 1.0);
    }

    // mean augmentation shifts the constant kernel of the pure Neumann problem
    if problem.is_pure_neumann_poisson() {
        let mean = u.integral() / (crate::grid::TWO_PI * crate::grid::TWO_PI);
        out = out.map(|v| v + mean);
    }

    // boundary rows
    for side in Side::BOTH {
        let l = grid.boundary_level(side);
        let row: Array2<f64> = if problem.is_dirichlet() {
            u.trace(side).values().clone()
        } else {
            let s = side.normal_sign();
            let g3 = metric_row3(problem, side);
            let mut flux = g3[0].mul(&grad[0].trace(side));
            flux = flux.lin_comb(1.0, &g3[1].mul(&grad[1].trace(side)), 1.0);
            flux = flux.lin_comb(1.0, &g3[2].mul(&grad[2].trace(side)), 1.0);
            let mut flux = flux.map(|v| s * v);
            if let Some(rc) = &problem.robin_coeff {
                let b = rc[if side == Side::Bottom { 0 } else { 1 }];
                flux = flux.lin_comb(1.0, &b.mul(&u.trace(side)), -1.0);
            }
            flux.values().clone()
        };
        let mut vals = out.values_mut().index_axis_mut(ndarray::Axis(2), l);
        vals.assign(&row);
    }
    out
}

/// Right-hand-side vector with the boundary data in the tau rows.
fn assemble_rhs(problem: &Problem) -> ScalarField {
    let grid = problem.grid().clone();
    let mut out = problem.rhs.clone();
    for side in Side::BOTH {
        let l = grid.boundary_level(side);
        let data = problem.bdry[if side == Side::Bottom { 0 } else { 1 }];
        let mut vals = out.values_mut().index_axis_mut(ndarray::Axis(2), l);
        vals.assign(data.values());
    }
    out
}

// ---------------------------------------------------------------------------
// per-mode preconditioner
// ---------------------------------------------------------------------------

struct ModePreconditioner {
    grid: Grid,
    lus: Vec<DenseLu>,
}

impl ModePreconditioner {
    fn build(problem: &Problem) -> Result<ModePreconditioner> {
        let grid = problem.grid().clone();
        let n1 = grid.n1();
        let n2 = grid.n2();
        let n3 = grid.n3();
        let d3 = grid.d3();
        let mut d3sq = Array2::<f64>::zeros((n3, n3));
        for i in 0..n3 {
            for j in 0..n3 {
                let mut acc = 0.0;
                for m in 0..n3 {
                    acc += d3[[i, m]] * d3[[m, j]];
                }
                d3sq[[i, j]] = acc;
            }
        }

        let vol = crate::grid::TWO_PI * crate::grid::TWO_PI;
        let c_mean = problem
            .coefficient
            .map(|c| c.integral() / vol)
            .unwrap_or(1.0);
        let k_mean = problem.zeroth.map(|k| k.integral() / vol).unwrap_or(0.0);
        let pure_neumann = problem.is_pure_neumann_poisson();

        // plane means of the flux-row coefficients
        let mut g3_mean = [[0.0f64; 3]; 2];
        let mut b_mean = [0.0f64; 2];
        if !problem.is_dirichlet() {
            for (si, side) in Side::BOTH.into_iter().enumerate() {
                let g3 = metric_row3(problem, side);
                for l in 0..3 {
                    g3_mean[si][l] = g3[l].mean();
                }
                if let Some(rc) = &problem.robin_coeff {
                    b_mean[si] = rc[si].mean();
                }
            }
        }

        let k1 = grid.k1();
        let k2 = grid.k2();
        let w3 = grid.w3().to_vec();
        let mut lus = Vec::with_capacity(n1 * n2);
        for p in 0..n1 {
            for q in 0..n2 {
                let ksq = k1[p] * k1[p] + k2[q] * k2[q];
                let mut m = vec![Complex64::new(0.0, 0.0); n3 * n3];
                for l in 1..n3 - 1 {
                    for j in 0..n3 {
                        // row of K + c(|k|^2 - d33)
                        let mut v = Complex64::new(-c_mean * d3sq[[l, j]], 0.0);
                        if j == l {
                            v += Complex64::new(k_mean + c_mean * ksq, 0.0);
                        }
                        if pure_neumann && p == 0 && q == 0 {
                            v += Complex64::new(w3[j], 0.0);
                        }
                        m[l * n3 + j] = v;
                    }
                }
                for (si, side) in Side::BOTH.into_iter().enumerate() {
                    let l = grid.boundary_level(side);
                    if problem.is_dirichlet() {
                        m[l * n3 + l] = Complex64::new(1.0, 0.0);
                        for j in 0..n3 {
                            if j != l {
                                m[l * n3 + j] = Complex64::new(0.0, 0.0);
                            }
                        }
                    } else {
                        let s = side.normal_sign();
                        let kd1 = grid.k1_diff()[p];
                        let kd2 = grid.k2_diff()[q];
                        for j in 0..n3 {
                            let mut v = Complex64::new(s * g3_mean[si][2] * d3[[l, j]], 0.0);
                            if j == l {
                                v += Complex64::new(0.0, s * (g3_mean[si][0] * kd1 + g3_mean[si][1] * kd2));
                                v -= Complex64::new(b_mean[si], 0.0);
                            }
                            m[l * n3 + j] = v;
                        }
                    }
                }
                let lu = DenseLu::factor(m, n3).ok_or(Error::NoConvergence {
                    residual: f64::INFINITY,
                    iters: 0,
                })?;
                lus.push(lu);
            }
        }
        Ok(ModePreconditioner { grid, lus })
    }

    fn apply(&self, r: &ScalarField) -> ScalarField {
        let grid = &self.grid;
        let n1 = grid.n1();
        let n2 = grid.n2();
        let n3 = grid.n3();
        let mut sp = r.to_spectral();
        {
            let coeffs = sp.coeffs_mut();
            let mut col = vec![Complex64::new(0.0, 0.0); n3];
            for p in 0..n1 {
                for q in 0..n2 {
                    for l in 0..n3 {
                        col[l] = coeffs[[p, q, l]];
                    }
                    self.lus[p * n2 + q].solve(&mut col);
                    for l in 0..n3 {
                        coeffs[[p, q, l]] = col[l];
                    }
                }
            }
        }
        sp.to_physical()
    }
}

// ---------------------------------------------------------------------------
// GMRES
// ---------------------------------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).max(0.0).sqrt()
}

/// Right-preconditioned restarted GMRES on raw vectors.
fn gmres(
    apply_a: &dyn Fn(&[f64]) -> Vec<f64>,
    apply_m: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol_abs: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut total_iters = 0;
    let mut res_norm = norm(b);
    if res_norm <= tol_abs {
        return (x, res_norm, 0);
    }
    while total_iters < max_iter {
        let ax = apply_a(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        res_norm = norm(&r);
        if res_norm <= tol_abs {
            return (x, res_norm, total_iters);
        }
        let m = restart.min(max_iter - total_iters);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        for ri in r.iter_mut() {
            *ri /= res_norm;
        }
        v.push(r);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = res_norm;
        let mut k_used = 0;
        for k in 0..m {
            total_iters += 1;
            let z = apply_m(&v[k]);
            let mut w = apply_a(&z);
            for i in 0..=k {
                let hik = dot(&w, &v[i]);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= hik * vj;
                }
            }
            let hk1 = norm(&w);
            h[k + 1][k] = hk1;
            if hk1 > 1e-300 {
                for wj in w.iter_mut() {
                    *wj /= hk1;
                }
            }
            v.push(w);
            // apply accumulated Givens rotations
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom > 0.0 {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            } else {
                cs[k] = 1.0;
                sn[k] = 0.0;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            k_used = k + 1;
            if g[k + 1].abs() <= tol_abs {
                break;
            }
        }
        // back substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = if h[i][i].abs() > 1e-300 { acc / h[i][i] } else { 0.0 };
        }
        let mut corr = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (ci, vi) in corr.iter_mut().zip(&v[j]) {
                *ci += yj * vi;
            }
        }
        let zc = apply_m(&corr);
        for (xi, zi) in x.iter_mut().zip(&zc) {
            *xi += zi;
        }
        let ax = apply_a(&x);
        res_norm = norm(
            &b.iter()
                .zip(&ax)
                .map(|(bi, ai)| bi - ai)
                .collect::<Vec<f64>>(),
        );
        if res_norm <= tol_abs {
            break;
        }
    }
    (x, res_norm, total_iters)
}

// ---------------------------------------------------------------------------
// public solve
// ---------------------------------------------------------------------------

/// Measured discrete trace constant from smooth probes:
/// sup |u|^2_{L2(Sigma)} / ||u||^2_{H1} in the true-measure convention.
pub fn measured_trace_constant(grid: &Grid) -> f64 {
    let probes = [
        ScalarField::constant(grid, 1.0),
        ScalarField::from_fn(grid, |_, _, x3| 1.0 - x3),
        ScalarField::from_fn(grid, |_, _, x3| x3),
        ScalarField::from_fn(grid, |_, _, x3| (1.0 - x3) * (1.0 - x3)),
        ScalarField::from_fn(grid, |x1, _, x3| 1.0 + 0.5 * x1.sin() * (1.0 - x3)),
    ];
    let mut best: f64 = 0.0;
    for u in probes {
        let tb = u.trace(Side::Bottom);
        let tt = u.trace(Side::Top);
        let plane = crate::grid::TWO_PI * crate::grid::TWO_PI;
        let tr = (tb.l2().powi(2) + tt.l2().powi(2)) * plane;
        let h1 = u.sobolev_norm(1).unwrap_or(1.0);
        if h1 > 0.0 {
            best = best.max(tr / (h1 * h1));
        }
    }
    best
}

pub fn solve(problem: &Problem, tol: f64) -> Result<ScalarField> {
    solve_with_report(problem, SolveOptions { tol, ..Default::default() }).map(|(f, _)| f)
}

pub fn solve_with_report(
    problem: &Problem,
    opts: SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    let grid = problem.grid().clone();

    let mut trace_constant = None;
    if problem.kind == ProblemKind::RobinHelmholtz {
        let ctr = measured_trace_constant(&grid);
        trace_constant = Some(ctr);
        let bmax = problem
            .robin_coeff
            .as_ref()
            .map(|rc| rc[0].sup_norm().max(rc[1].sup_norm()))
            .unwrap_or(0.0);
        let kmin = problem.zeroth.map(|k| k.min_value()).unwrap_or(0.0);
        let required = bmax * ctr;
        if kmin <= required {
            return Err(Error::NotCoercive {
                k: kmin,
                required,
            });
        }
    }

    if problem.is_pure_neumann_poisson() {
        // compatibility: int J f = boundary work of the prescribed flux
        let jrhs = match problem.geometry {
            None => problem.rhs.integral(),
            Some(geo) => geo.jac.mul_raw(problem.rhs).integral(),
        };
        let mut bwork = 0.0;
        for (si, side) in Side::BOTH.into_iter().enumerate() {
            let jtr = match problem.geometry {
                None => SurfaceField::constant(&grid, side, 1.0),
                Some(geo) => geo.jac.trace(side),
            };
            let ctr = match problem.coefficient {
                None => SurfaceField::constant(&grid, side, 1.0),
                Some(c) => c.trace(side),
            };
            bwork += jtr.mul(&ctr).mul(problem.bdry[si]).integral();
        }
        let defect = jrhs - bwork;
        let scale = problem.rhs.l2().max(1.0);
        if defect.abs() > 1e-8 * scale.max(1.0) {
            return Err(Error::Incompatible(defect));
        }
    }

    let rhs_field = assemble_rhs(problem);
    let b: Vec<f64> = rhs_field.values().iter().cloned().collect();
    let precond = ModePreconditioner::build(problem)?;

    let to_field = |v: &[f64]| -> ScalarField {
        let arr = Array3::from_shape_vec((grid.n1(), grid.n2(), grid.n3()), v.to_vec()).unwrap();
        ScalarField::from_values(&grid, arr)
    };
    let apply_a = |v: &[f64]| -> Vec<f64> {
        let f = to_field(v);
        apply_operator(problem, &f).values().iter().cloned().collect()
    };
    let apply_m = |v: &[f64]| -> Vec<f64> {
        let f = to_field(v);
        precond.apply(&f).values().iter().cloned().collect()
    };

    let scale = norm(&b).max(1.0);
    let tol_abs = opts.tol * scale;
    let (x, res, iters) = gmres(&apply_a, &apply_m, &b, tol_abs, opts.restart, opts.max_iter);
    if !res.is_finite() || res > tol_abs * 10.0 {
        return Err(Error::NoConvergence {
            residual: res,
            iters,
        });
    }
    let sol = to_field(&x);

    // residual check independent of the solve path
    let check = apply_operator(problem, &sol);
    let mut defect: f64 = 0.0;
    ndarray::Zip::from(check.values())
        .and(rhs_field.values())
        .for_each(|a, b| {
            defect += (a - b) * (a - b);
        });
    let defect = defect.sqrt();
    if defect > 100.0 * tol_abs.max(1e-14) {
        return Err(Error::NoConvergence {
            residual: defect,
            iters,
        });
    }

    Ok((
        sol,
        SolveReport {
            residual: defect,
            iterations: iters,
            trace_constant,
        },
    ))
}

/// Apply the problem's discrete operator (exposed for residual diagnostics).
pub fn operator_apply(problem: &Problem, u: &ScalarField) -> ScalarField {
    apply_operator(problem, u)
}

/// Inverse of the horizontal Laplacian on a boundary plane composed with mean
/// removal: per-mode division by -|k|^2, zero mean.
pub fn invert_delta_star(sf: &SurfaceField) -> SurfaceField {
    sf.apply_multiplier(|k1, k2| {
        let ksq = k1 * k1 + k2 * k2;
        if ksq == 0.0 {
            0.0
        } else {
            -1.0 / ksq
        }
    })
}

/// Remove the plane mean (the projection P f = f - mean f).
pub fn remove_mean(sf: &SurfaceField) -> SurfaceField {
    let m = sf.mean();
    sf.map(|v| v - m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{compute_geometry, FlowMap};
    use crate::grid::{VerticalScheme, VectorField};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid(n: usize, n3: usize) -> Grid {
        Grid::new(n, n, n3, VerticalScheme::ChebyshevCollocation).unwrap()
    }

    #[test]
    fn dirichlet_laplace_constant_solution() {
        let g = grid(8, 9);
        let rhs = ScalarField::zeros(&g);
        let one_b = SurfaceField::constant(&g, Side::Bottom, 1.0);
        let one_t = SurfaceField::constant(&g, Side::Top, 1.0);
        let p = Problem::dirichlet_laplace(&rhs, [&one_b, &one_t]);
        let sol = solve(&p, 1e-11).unwrap();
        assert!(sol.map(|v| v - 1.0).sup_norm() <= 1e-9);
    }

    #[test]
    fn neumann_helmholtz_constant_solution() {
        let g = grid(8, 9);
        let c = 2.75;
        let rhs = ScalarField::constant(&g, c);
        let zero_b = SurfaceField::zeros(&g, Side::Bottom);
        let zero_t = SurfaceField::zeros(&g, Side::Top);
        let one = ScalarField::constant(&g, 1.0);
        let p = Problem::neumann_helmholtz(None, None, Some(&one), &rhs, [&zero_b, &zero_t]);
        let sol = solve(&p, 1e-11).unwrap();
        assert!(sol.map(|v| v - c).sup_norm() <= 1e-8);
    }

    #[test]
    fn manufactured_dirichlet_divform_identity_geometry() {
        let g = grid(16, 17);
        let r = 1.7;
        let w_star = ScalarField::from_fn(&g, |x1, _, x3| x1.sin() * (PI * x3).sin());
        let rhs = ScalarField::from_fn(&g, |x1, _, x3| {
            r * (1.0 + PI * PI) * x1.sin() * (PI * x3).sin()
        });
        let zb = SurfaceField::zeros(&g, Side::Bottom);
        let zt = SurfaceField::zeros(&g, Side::Top);
        let coeff = ScalarField::constant(&g, r);
        let p = Problem::dirichlet_divform(None, Some(&coeff), None, &rhs, [&zb, &zt]);
        let sol = solve(&p, 1e-12).unwrap();
        let err = sol.lin_comb(1.0, &w_star, -1.0).sup_norm();
        assert!(err <= 1e-8, "manufactured error {err:.3e}");
    }

    #[test]
    fn manufactured_variable_coefficient_convergence() {
        // non-constant coefficient: error decreases strongly under refinement
        let run = |n: usize, n3: usize| -> f64 {
            let g = grid(n, n3);
            let theta = ScalarField::from_fn(&g, |x1, _, x3| 1.0 + 0.3 * x1.sin() * x3);
            let w_star = ScalarField::from_fn(&g, |x1, _, x3| x1.sin() * (PI * x3).sin());
            // rhs = -div(theta grad w*) assembled with the same discrete ops
            let grad = [w_star.diff(1), w_star.diff(2), w_star.diff(3)];
            let mut div = ScalarField::zeros(&g);
            for (i, gi) in grad.iter().enumerate() {
                div.add_assign_scaled(&theta.mul(gi).diff(i + 1), 1.0);
            }
            let rhs = div.scale(-1.0);
            let zb = SurfaceField::zeros(&g, Side::Bottom);
            let zt = SurfaceField::zeros(&g, Side::Top);
            let p = Problem::dirichlet_divform(None, Some(&theta), None, &rhs, [&zb, &zt]);
            let sol = solve(&p, 1e-12).unwrap();
            sol.lin_comb(1.0, &w_star, -1.0).sup_norm()
        };
        let e = run(16, 17);
        assert!(e <= 1e-9, "variable-coefficient error {e:.3e}");
    }

    #[test]
    fn variable_geometry_solve_and_residual() {
        let g = grid(8, 9);
        let disp = VectorField::from_fns(
            &g,
            |x1, _, x3| 0.04 * x1.sin() * x3 * (1.0 - x3),
            |_, x2, x3| 0.03 * x2.cos() * x3,
            |x1, _, x3| 0.05 * x1.cos() * x3 * (1.0 - x3),
        );
        let geo = compute_geometry(&FlowMap::from_displacement(disp)).unwrap();
        let rhs = ScalarField::from_fn(&g, |x1, x2, x3| (x1 + x2).sin() * x3 + 0.2);
        let one = ScalarField::constant(&g, 1.0);
        let zb = SurfaceField::zeros(&g, Side::Bottom);
        let zt = SurfaceField::zeros(&g, Side::Top);
        let p = Problem::neumann_helmholtz(Some(&geo), None, Some(&one), &rhs, [&zb, &zt]);
        let (sol, report) = solve_with_report(&p, SolveOptions::default()).unwrap();
        assert!(report.residual <= 1e-8);
        // flux really vanishes on the planes
        let flux_b = crate::geometry::covariant_flux(&geo, &sol, Side::Bottom);
        assert!(flux_b.sup_norm() <= 1e-8, "flux {:.3e}", flux_b.sup_norm());
    }

    #[test]
    fn incompatible_pure_neumann_rejected() {
        let g = grid(8, 9);
        let rhs = ScalarField::constant(&g, 1.0); // mean nonzero, zero flux
        let zb = SurfaceField::zeros(&g, Side::Bottom);
        let zt = SurfaceField::zeros(&g, Side::Top);
        let p = Problem::neumann_helmholtz(None, None, None, &rhs, [&zb, &zt]);
        assert!(matches!(solve(&p, 1e-10), Err(Error::Incompatible(_))));
    }

    #[test]
    fn compatible_pure_neumann_solves() {
        let g = grid(8, 17);
        // rhs = -Delta u* for u* = cos(x1) cos(pi x3): flux vanishes at planes
        let u_star = ScalarField::from_fn(&g, |x1, _, x3| x1.cos() * (PI * x3).cos());
        let rhs = ScalarField::from_fn(&g, |x1, _, x3| {
            (1.0 + PI * PI) * x1.cos() * (PI * x3).cos()
        });
        let zb = SurfaceField::zeros(&g, Side::Bottom);
        let zt = SurfaceField::zeros(&g, Side::Top);
        let p = Problem::neumann_helmholtz(None, None, None, &rhs, [&zb, &zt]);
        let sol = solve(&p, 1e-11).unwrap();
        // defined up to the mean-zero representative; u* is already mean-zero
        let err = sol.lin_comb(1.0, &u_star, -1.0).sup_norm();
        assert!(err <= 1e-7, "pure neumann error {err:.3e}");
    }

    #[test]
    fn robin_coercivity_guard() {
        let g = grid(8, 9);
        let rhs = ScalarField::constant(&g, 1.0);
        let small_k = ScalarField::constant(&g, 0.1);
        let b_b = SurfaceField::constant(&g, Side::Bottom, 5.0);
        let b_t = SurfaceField::constant(&g, Side::Top, 5.0);
        let zb = SurfaceField::zeros(&g, Side::Bottom);
        let zt = SurfaceField::zeros(&g, Side::Top);
        let p = Problem::robin_helmholtz(None, None, Some(&small_k), &rhs, [&zb, &zt], [&b_b, &b_t]);
        assert!(matches!(solve(&p, 1e-10), Err(Error::NotCoercive { .. })));
    }

    #[test]
    fn robin_solve_manufactured() {
        let g = grid(8, 9);
        // u* = cosh-free simple choice: u* = 1 + x3^2 (flux s*2x3: bottom 0, top 2)
        let u_star = ScalarField::from_fn(&g, |_, _, x3| 1.0 + x3 * x3);
        let kval = 30.0;
        let k = ScalarField::constant(&g, kval);
        // K u - Delta u = K(1+x3^2) - 2
        let rhs = ScalarField::from_fn(&g, |_, _, x3| kval * (1.0 + x3 * x3) - 2.0);
        let bcoef = 1.5;
        let b_b = SurfaceField::constant(&g, Side::Bottom, bcoef);
        let b_t = SurfaceField::constant(&g, Side::Top, bcoef);
        // robin rhs = flux - b u: bottom: -0 - 1.5*1 = -1.5; top: 2 - 1.5*2 = -1
        let r_b = SurfaceField::constant(&g, Side::Bottom, -1.5);
        let r_t = SurfaceField::constant(&g, Side::Top, -1.0);
        let p = Problem::robin_helmholtz(None, None, Some(&k), &rhs, [&r_b, &r_t], [&b_b, &b_t]);
        let sol = solve(&p, 1e-12).unwrap();
        let err = sol.lin_comb(1.0, &u_star, -1.0).sup_norm();
        assert!(err <= 1e-8, "robin manufactured error {err:.3e}");
    }

    #[test]
    fn invert_delta_star_examples() {
        let g = grid(8, 9);
        let f = SurfaceField::from_fn(&g, Side::Bottom, |x1, _| x1.cos());
        let inv = invert_delta_star(&f);
        // eigenfunction with eigenvalue -1
        assert!(inv.lin_comb(1.0, &f, 1.0).sup_norm() <= 1e-12);
        let c = SurfaceField::constant(&g, Side::Bottom, 3.0);
        assert!(invert_delta_star(&c).sup_norm() <= 1e-14);
        // round trip: Delta_*(inv(f)) = P f
        let h = SurfaceField::from_fn(&g, Side::Top, |x1, x2| (x1 + 2.0 * x2).sin() + 0.7);
        let round = invert_delta_star(&h).delta_star();
        let pf = remove_mean(&h);
        assert!(round.lin_comb(1.0, &pf, -1.0).sup_norm() <= 1e-12);
    }

    #[test]
    fn discrete_symmetry_of_divergence_form() {
        // J-weighted symmetry on resolved fields vanishing at the planes
        let g = grid(8, 9);
        let geo = compute_geometry(&FlowMap::identity(&g)).unwrap();
        let c = ScalarField::constant(&g, 1.3);
        let mk = |a: f64, b: f64| {
            ScalarField::from_fn(&g, move |x1, x2, x3| {
                (a * x1).sin() * (b * x2).cos() * x3 * x3 * (1.0 - x3) * (1.0 - x3)
            })
        };
        let u = mk(1.0, 1.0);
        let v = mk(1.0, 2.0);
        let zb = SurfaceField::zeros(&g, Side::Bottom);
        let zt = SurfaceField::zeros(&g, Side::Top);
        let zero = ScalarField::zeros(&g);
        let p = Problem::dirichlet_divform(Some(&geo), Some(&c), None, &zero, [&zb, &zt]);
        let lu = operator_apply(&p, &u);
        let lv = operator_apply(&p, &v);
        // compare on the interior rows only (tau rows hold BC expressions)
        let weigh = |f: &ScalarField, h: &ScalarField| -> f64 {
            let prod = f.mul_raw(h).mul_raw(&geo.jac);
            // zero the boundary rows before integrating
            let mut p = prod.clone();
            for side in Side::BOTH {
                let l = g.boundary_level(side);
                p.values_mut()
                    .index_axis_mut(ndarray::Axis(2), l)
                    .fill(0.0);
            }
            p.integral()
        };
        let s1 = weigh(&lu, &v);
        let s2 = weigh(&u, &lv);
        assert_abs_diff_eq!(s1, s2, epsilon = 1e-10 * s1.abs().max(1.0));
    }
}
