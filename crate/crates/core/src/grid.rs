//! Discretization of the slab T² x (0,1): Fourier modes in the two periodic
//! horizontal directions, a collocation grid in the vertical, discrete
//! differential operators and discrete Sobolev norms.
//!
//! Horizontal period is fixed to 2*pi in both directions (integer
//! wavenumbers), vertical extent to (0,1) with both boundary planes on the
//! grid. Interior norms carry the true measure of the domain; surface norms
//! on T² use the mean-square (unit-measure) convention so that a single unit
//! Fourier mode has |f|_0 = 1.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Vertical discretization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VerticalScheme {
    ChebyshevCollocation,
    UniformFd4,
}

impl VerticalScheme {
    pub fn tag(self) -> u8 {
        match self {
            VerticalScheme::ChebyshevCollocation => 0,
            VerticalScheme::UniformFd4 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(VerticalScheme::ChebyshevCollocation),
            1 => Ok(VerticalScheme::UniformFd4),
            other => Err(Error::InvalidGrid(format!("unknown scheme tag {other}"))),
        }
    }
}

/// Which boundary plane of the slab.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Top,
}

impl Side {
    /// Outward normal is N = normal_sign() * e3.
    pub fn normal_sign(self) -> f64 {
        match self {
            Side::Bottom => -1.0,
            Side::Top => 1.0,
        }
    }

    pub const BOTH: [Side; 2] = [Side::Bottom, Side::Top];
}

struct GridInner {
    n1: usize,
    n2: usize,
    n3: usize,
    scheme: VerticalScheme,
    x1: Vec<f64>,
    x2: Vec<f64>,
    x3: Vec<f64>,
    /// Signed wavenumber per FFT bin (Nyquist stored as +n/2).
    k1: Vec<f64>,
    k2: Vec<f64>,
    /// Wavenumber used for spectral differentiation (Nyquist zeroed).
    k1_diff: Vec<f64>,
    k2_diff: Vec<f64>,
    /// Vertical differentiation matrix (row l: d/dx3 at node l).
    d3: Array2<f64>,
    /// Vertical quadrature weights on [0,1].
    w3: Vec<f64>,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
}

/// Grid specification plus derived tables; cheap to clone (shared).
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("n1", &self.inner.n1)
            .field("n2", &self.inner.n2)
            .field("n3", &self.inner.n3)
            .field("scheme", &self.inner.scheme)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n1 == other.inner.n1
            && self.inner.n2 == other.inner.n2
            && self.inner.n3 == other.inner.n3
            && self.inner.scheme == other.inner.scheme
    }
}

fn signed_wavenumbers(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut k = vec![0.0; n];
    let mut kd = vec![0.0; n];
    for p in 0..n {
        let s = if p <= n / 2 {
            p as f64
        } else {
            p as f64 - n as f64
        };
        k[p] = s;
        kd[p] = if p == n / 2 { 0.0 } else { s };
    }
    (k, kd)
}

/// Chebyshev-Gauss-Lobatto nodes mapped to [0,1], ascending.
fn chebyshev_nodes(n3: usize) -> Vec<f64> {
    let m = (n3 - 1) as f64;
    (0..n3)
        .map(|i| 0.5 * (1.0 - (PI * i as f64 / m).cos()))
        .collect()
}

/// Differentiation matrix for arbitrary distinct nodes via barycentric weights.
fn barycentric_diff_matrix(x: &[f64], w: &[f64]) -> Array2<f64> {
    let n = x.len();
    let mut d = Array2::zeros((n, n));
    for j in 0..n {
        let mut diag = 0.0;
        for k in 0..n {
            if k != j {
                let v = (w[k] / w[j]) / (x[j] - x[k]);
                d[[j, k]] = v;
                diag -= v;
            }
        }
        d[[j, j]] = diag;
    }
    d
}

/// Clenshaw-Curtis weights on [0,1] for the ascending mapped CGL nodes.
fn clenshaw_curtis_weights(n3: usize) -> Vec<f64> {
    let n = n3 - 1; // polynomial degree
    let mut w = vec![0.0; n3];
    if n == 0 {
        w[0] = 1.0;
        return w;
    }
    let theta: Vec<f64> = (0..=n).map(|j| PI * j as f64 / n as f64).collect();
    let mut v = vec![1.0; n - 1];
    if n % 2 == 0 {
        w[0] = 1.0 / ((n * n - 1) as f64);
        w[n] = w[0];
        for k in 1..n / 2 {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * k as f64 * theta[i + 1]).cos() / ((4 * k * k - 1) as f64);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (n as f64 * theta[i + 1]).cos() / ((n * n - 1) as f64);
        }
    } else {
        w[0] = 1.0 / (n * n) as f64;
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * k as f64 * theta[i + 1]).cos() / ((4 * k * k - 1) as f64);
            }
        }
    }
    for i in 1..n {
        w[i] = 2.0 * v[i - 1] / n as f64;
    }
    // scale from [-1,1] to [0,1]; node order reversal leaves weights in place
    // because they are symmetric.
    for wi in w.iter_mut() {
        *wi *= 0.5;
    }
    w
}

/// Fornberg finite-difference weights for derivative order m at z from nodes x.
fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

fn fd4_diff_matrix(x: &[f64]) -> Array2<f64> {
    let n = x.len();
    let width = 5.min(n);
    let mut d = Array2::zeros((n, n));
    for l in 0..n {
        let start = l.saturating_sub(2).min(n - width);
        let stencil = &x[start..start + width];
        let w = fornberg_weights(x[l], stencil, 1);
        for (j, wj) in w.iter().enumerate() {
            d[[l, start + j]] = *wj;
        }
    }
    d
}

fn uniform_quadrature_weights(n3: usize) -> Vec<f64> {
    let h = 1.0 / (n3 - 1) as f64;
    let mut w = vec![h; n3];
    if n3 >= 8 {
        // Gregory end-corrected trapezoid, 4th order.
        let corr = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
        for (i, c) in corr.iter().enumerate() {
            w[i] = c * h;
            w[n3 - 1 - i] = c * h;
        }
    } else if n3 % 2 == 1 {
        // composite Simpson
        w[0] = h / 3.0;
        w[n3 - 1] = h / 3.0;
        for (i, wi) in w.iter_mut().enumerate().take(n3 - 1).skip(1) {
            *wi = if i % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
        }
    } else {
        w[0] = h / 2.0;
        w[n3 - 1] = h / 2.0;
    }
    w
}

impl Grid {
    /// Build a grid; this is the `make_grid` entry point.
    pub fn new(n1: usize, n2: usize, n3: usize, scheme: VerticalScheme) -> Result<Grid> {
        for (name, n) in [("n1", n1), ("n2", n2)] {
            if n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} = {n} must be even")));
            }
            if !(4..=1024).contains(&n) {
                return Err(Error::InvalidGrid(format!("{name} = {n} outside [4, 1024]")));
            }
        }
        if !(5..=1024).contains(&n3) {
            return Err(Error::InvalidGrid(format!("n3 = {n3} outside [5, 1024]")));
        }

        let x1 = (0..n1).map(|i| TWO_PI * i as f64 / n1 as f64).collect();
        let x2 = (0..n2).map(|i| TWO_PI * i as f64 / n2 as f64).collect();
        let (x3, d3, w3) = match scheme {
            VerticalScheme::ChebyshevCollocation => {
                let x3 = chebyshev_nodes(n3);
                let m = n3 - 1;
                let bw: Vec<f64> = (0..n3)
                    .map(|i| {
                        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                        if i == 0 || i == m {
                            0.5 * s
                        } else {
                            s
                        }
                    })
                    .collect();
                let d3 = barycentric_diff_matrix(&x3, &bw);
                let w3 = clenshaw_curtis_weights(n3);
                (x3, d3, w3)
            }
            VerticalScheme::UniformFd4 => {
                let x3: Vec<f64> = (0..n3).map(|i| i as f64 / (n3 - 1) as f64).collect();
                let d3 = fd4_diff_matrix(&x3);
                let w3 = uniform_quadrature_weights(n3);
                (x3, d3, w3)
            }
        };

        let (k1, k1_diff) = signed_wavenumbers(n1);
        let (k2, k2_diff) = signed_wavenumbers(n2);
        let mut planner = FftPlanner::new();
        let fwd1 = planner.plan_fft_forward(n1);
        let inv1 = planner.plan_fft_inverse(n1);
        let fwd2 = planner.plan_fft_forward(n2);
        let inv2 = planner.plan_fft_inverse(n2);

        Ok(Grid {
            inner: Arc::new(GridInner {
                n1,
                n2,
                n3,
                scheme,
                x1,
                x2,
                x3,
                k1,
                k2,
                k1_diff,
                k2_diff,
                d3,
                w3,
                fwd1,
                inv1,
                fwd2,
                inv2,
            }),
        })
    }

    pub fn n1(&self) -> usize {
        self.inner.n1
    }
    pub fn n2(&self) -> usize {
        self.inner.n2
    }
    pub fn n3(&self) -> usize {
        self.inner.n3
    }
    pub fn scheme(&self) -> VerticalScheme {
        self.inner.scheme
    }
    pub fn x1(&self) -> &[f64] {
        &self.inner.x1
    }
    pub fn x2(&self) -> &[f64] {
        &self.inner.x2
    }
    pub fn x3(&self) -> &[f64] {
        &self.inner.x3
    }
    pub fn k1(&self) -> &[f64] {
        &self.inner.k1
    }
    pub fn k2(&self) -> &[f64] {
        &self.inner.k2
    }
    pub fn k1_diff(&self) -> &[f64] {
        &self.inner.k1_diff
    }
    pub fn k2_diff(&self) -> &[f64] {
        &self.inner.k2_diff
    }
    pub fn d3(&self) -> &Array2<f64> {
        &self.inner.d3
    }
    pub fn w3(&self) -> &[f64] {
        &self.inner.w3
    }

    /// Cell measure of one horizontal grid cell (trapezoid = exact on T²).
    pub fn horizontal_cell(&self) -> f64 {
        (TWO_PI / self.inner.n1 as f64) * (TWO_PI / self.inner.n2 as f64)
    }

    pub fn boundary_level(&self, side: Side) -> usize {
        match side {
            Side::Bottom => 0,
            Side::Top => self.inner.n3 - 1,
        }
    }

    /// Forward 2-D FFT along the horizontal axes; coefficients normalized so
    /// that f = sum_k c_k exp(i k.x).
    fn fft2_volume(&self, data: &mut Array3<Complex64>, forward: bool) {
        let g = &self.inner;
        let (f1, f2): (&Arc<dyn Fft<f64>>, &Arc<dyn Fft<f64>>) = if forward {
            (&g.fwd1, &g.fwd2)
        } else {
            (&g.inv1, &g.inv2)
        };
        let mut scratch1 = vec![Complex64::default(); f1.get_inplace_scratch_len()];
        let mut buf1 = vec![Complex64::default(); g.n1];
        for mut lane in data.lanes_mut(Axis(0)) {
            for (b, v) in buf1.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            f1.process_with_scratch(&mut buf1, &mut scratch1);
            for (v, b) in lane.iter_mut().zip(buf1.iter()) {
                *v = *b;
            }
        }
        let mut scratch2 = vec![Complex64::default(); f2.get_inplace_scratch_len()];
        let mut buf2 = vec![Complex64::default(); g.n2];
        for mut lane in data.lanes_mut(Axis(1)) {
            for (b, v) in buf2.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            f2.process_with_scratch(&mut buf2, &mut scratch2);
            for (v, b) in lane.iter_mut().zip(buf2.iter()) {
                *v = *b;
            }
        }
        if forward {
            let norm = 1.0 / (g.n1 * g.n2) as f64;
            data.mapv_inplace(|c| c * norm);
        }
    }

    fn fft2_plane(&self, data: &mut Array2<Complex64>, forward: bool) {
        let g = &self.inner;
        let (f1, f2): (&Arc<dyn Fft<f64>>, &Arc<dyn Fft<f64>>) = if forward {
            (&g.fwd1, &g.fwd2)
        } else {
            (&g.inv1, &g.inv2)
        };
        let mut scratch1 = vec![Complex64::default(); f1.get_inplace_scratch_len()];
        let mut buf1 = vec![Complex64::default(); g.n1];
        for mut lane in data.lanes_mut(Axis(0)) {
            for (b, v) in buf1.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            f1.process_with_scratch(&mut buf1, &mut scratch1);
            for (v, b) in lane.iter_mut().zip(buf1.iter()) {
                *v = *b;
            }
        }
        let mut scratch2 = vec![Complex64::default(); f2.get_inplace_scratch_len()];
        let mut buf2 = vec![Complex64::default(); g.n2];
        for mut lane in data.lanes_mut(Axis(1)) {
            for (b, v) in buf2.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            f2.process_with_scratch(&mut buf2, &mut scratch2);
            for (v, b) in lane.iter_mut().zip(buf2.iter()) {
                *v = *b;
            }
        }
        if forward {
            let norm = 1.0 / (g.n1 * g.n2) as f64;
            data.mapv_inplace(|c| c * norm);
        }
    }
}

/// Scalar field in physical representation on the tensor grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    values: Array3<f64>,
}

/// Scalar field in horizontal-spectral representation: complex Fourier
/// coefficients per horizontal mode, physical in the vertical.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Array3<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: Array3::zeros((grid.n1(), grid.n2(), grid.n3())),
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: Array3::from_elem((grid.n1(), grid.n2(), grid.n3()), c),
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut values = Array3::zeros((grid.n1(), grid.n2(), grid.n3()));
        for (i1, &x1) in grid.x1().iter().enumerate() {
            for (i2, &x2) in grid.x2().iter().enumerate() {
                for (l, &x3) in grid.x3().iter().enumerate() {
                    values[[i1, i2, l]] = f(x1, x2, x3);
                }
            }
        }
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Grid, values: Array3<f64>) -> Self {
        assert_eq!(values.dim(), (grid.n1(), grid.n2(), grid.n3()));
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_spectral(&self) -> SpectralField {
        let mut coeffs = self.values.mapv(|v| Complex64::new(v, 0.0));
        self.grid.fft2_volume(&mut coeffs, true);
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// a*self + b*other.
    pub fn lin_comb(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let mut values = self.values.clone();
        Zip::from(&mut values).and(&other.values).for_each(|v, &o| {
            *v = a * *v + b * o;
        });
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.mapv(|v| a * v),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &ScalarField, b: f64) {
        debug_assert_eq!(self.grid, other.grid);
        Zip::from(&mut self.values)
            .and(&other.values)
            .for_each(|v, &o| *v += b * o);
    }

    /// Pointwise product followed by 2/3-rule dealiasing (products of
    /// Jacobian entries appear in every operator, so products are always
    /// filtered back into the resolved band).
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let mut values = self.values.clone();
        Zip::from(&mut values)
            .and(&other.values)
            .for_each(|v, &o| *v *= o);
        let raw = ScalarField {
            grid: self.grid.clone(),
            values,
        };
        raw.dealias()
    }

    /// Pointwise product without dealiasing.
    pub fn mul_raw(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let mut values = self.values.clone();
        Zip::from(&mut values)
            .and(&other.values)
            .for_each(|v, &o| *v *= o);
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.mapv(f),
        }
    }

    /// Pointwise reciprocal (rational: evaluated at nodes, not dealiased).
    pub fn recip(&self) -> ScalarField {
        self.map(|v| 1.0 / v)
    }

    /// Truncate horizontal modes above 2/3 of the Nyquist band.
    pub fn dealias(&self) -> ScalarField {
        let mut sp = self.to_spectral();
        sp.dealias_inplace();
        sp.to_physical()
    }

    /// Spatial derivative along a 1-based axis (1,2 horizontal spectral,
    /// 3 vertical collocation).
    pub fn diff(&self, axis: usize) -> ScalarField {
        match axis {
            1 | 2 => {
                let mut sp = self.to_spectral();
                sp.diff_horizontal_inplace(axis);
                sp.to_physical()
            }
            3 => self.diff_vertical(),
            _ => panic!("axis must be 1, 2 or 3"),
        }
    }

    fn diff_vertical(&self) -> ScalarField {
        let g = &self.grid;
        let d3 = g.d3();
        let n3 = g.n3();
        let mut values = Array3::zeros(self.values.raw_dim());
        for i1 in 0..g.n1() {
            for i2 in 0..g.n2() {
                for l in 0..n3 {
                    let mut acc = 0.0;
                    for m in 0..n3 {
                        acc += d3[[l, m]] * self.values[[i1, i2, m]];
                    }
                    values[[i1, i2, l]] = acc;
                }
            }
        }
        ScalarField {
            grid: g.clone(),
            values,
        }
    }

    /// Quadrature of the field over the slab (true measure (2pi)^2 x 1).
    pub fn integral(&self) -> f64 {
        let g = &self.grid;
        let cell = g.horizontal_cell();
        let w3 = g.w3();
        let mut acc = 0.0;
        for i1 in 0..g.n1() {
            for i2 in 0..g.n2() {
                for (l, w) in w3.iter().enumerate() {
                    acc += self.values[[i1, i2, l]] * w;
                }
            }
        }
        acc * cell
    }

    pub fn l2_sq(&self) -> f64 {
        let g = &self.grid;
        let cell = g.horizontal_cell();
        let w3 = g.w3();
        let mut acc = 0.0;
        for i1 in 0..g.n1() {
            for i2 in 0..g.n2() {
                for (l, w) in w3.iter().enumerate() {
                    let v = self.values[[i1, i2, l]];
                    acc += v * v * w;
                }
            }
        }
        acc * cell
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().max(0.0).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Discrete surrogate of the H^k(Omega) norm: sum over all multi-indices
    /// |alpha| <= k of quadrature-weighted L² norms of mixed derivatives.
    pub fn sobolev_norm(&self, k: usize) -> Result<f64> {
        if k > 4 {
            return Err(Error::UnsupportedOrder(k));
        }
        let base = self.to_spectral();
        let mut acc = 0.0;
        for a1 in 0..=k {
            for a2 in 0..=(k - a1) {
                let mut sp = base.clone();
                for _ in 0..a1 {
                    sp.diff_horizontal_inplace(1);
                }
                for _ in 0..a2 {
                    sp.diff_horizontal_inplace(2);
                }
                let mut phys = sp.to_physical();
                acc += phys.l2_sq();
                for _ in 0..(k - a1 - a2) {
                    phys = phys.diff_vertical();
                    acc += phys.l2_sq();
                }
            }
        }
        Ok(acc.max(0.0).sqrt())
    }

    /// Restriction to a boundary plane (exact: nodes include the planes).
    pub fn trace(&self, side: Side) -> SurfaceField {
        let l = self.grid.boundary_level(side);
        let values = self.values.index_axis(Axis(2), l).to_owned();
        SurfaceField {
            grid: self.grid.clone(),
            side,
            values,
        }
    }
}

impl SpectralField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array3<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.coeffs
    }

    pub fn to_physical(&self) -> ScalarField {
        let mut data = self.coeffs.clone();
        self.grid.fft2_volume(&mut data, false);
        ScalarField {
            grid: self.grid.clone(),
            values: data.mapv(|c| c.re),
        }
    }

    pub fn diff_horizontal_inplace(&mut self, axis: usize) {
        let g = self.grid.clone();
        let (kd, other) = match axis {
            1 => (g.k1_diff(), false),
            2 => (g.k2_diff(), true),
            _ => panic!("horizontal axis must be 1 or 2"),
        };
        for (p, c) in self.coeffs.outer_iter_mut().enumerate() {
            let mut c = c;
            if !other {
                let ik = Complex64::new(0.0, kd[p]);
                c.mapv_inplace(|v| v * ik);
            } else {
                for (q, mut lane) in c.outer_iter_mut().enumerate() {
                    let ik = Complex64::new(0.0, kd[q]);
                    lane.mapv_inplace(|v| v * ik);
                }
            }
        }
    }

    /// Apply a multiplier depending on the horizontal wavenumber pair.
    pub fn apply_multiplier(&mut self, m: impl Fn(f64, f64) -> f64) {
        let g = self.grid.clone();
        let k1 = g.k1();
        let k2 = g.k2();
        for ((p, q, _), c) in self.coeffs.indexed_iter_mut() {
            let mv = m(k1[p], k2[q]);
            *c *= mv;
        }
    }

    pub fn dealias_inplace(&mut self) {
        let g = self.grid.clone();
        let cut1 = (g.n1() / 3) as f64;
        let cut2 = (g.n2() / 3) as f64;
        let k1 = g.k1();
        let k2 = g.k2();
        for ((p, q, _), c) in self.coeffs.indexed_iter_mut() {
            if k1[p].abs() > cut1 || k2[q].abs() > cut2 {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Field on one boundary plane of the slab.
#[derive(Clone, Debug)]
pub struct SurfaceField {
    grid: Grid,
    side: Side,
    values: Array2<f64>,
}

impl SurfaceField {
    pub fn zeros(grid: &Grid, side: Side) -> Self {
        SurfaceField {
            grid: grid.clone(),
            side,
            values: Array2::zeros((grid.n1(), grid.n2())),
        }
    }

    pub fn constant(grid: &Grid, side: Side, c: f64) -> Self {
        SurfaceField {
            grid: grid.clone(),
            side,
            values: Array2::from_elem((grid.n1(), grid.n2()), c),
        }
    }

    pub fn from_fn(grid: &Grid, side: Side, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Array2::zeros((grid.n1(), grid.n2()));
        for (i1, &x1) in grid.x1().iter().enumerate() {
            for (i2, &x2) in grid.x2().iter().enumerate() {
                values[[i1, i2]] = f(x1, x2);
            }
        }
        SurfaceField {
            grid: grid.clone(),
            side,
            values,
        }
    }

    pub fn from_values(grid: &Grid, side: Side, values: Array2<f64>) -> Self {
        assert_eq!(values.dim(), (grid.n1(), grid.n2()));
        SurfaceField {
            grid: grid.clone(),
            side,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn side(&self) -> Side {
        self.side
    }
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn lin_comb(&self, a: f64, other: &SurfaceField, b: f64) -> SurfaceField {
        debug_assert_eq!(self.grid, other.grid);
        let mut values = self.values.clone();
        Zip::from(&mut values).and(&other.values).for_each(|v, &o| {
            *v = a * *v + b * o;
        });
        SurfaceField {
            grid: self.grid.clone(),
            side: self.side,
            values,
        }
    }

    pub fn mul(&self, other: &SurfaceField) -> SurfaceField {
        debug_assert_eq!(self.grid, other.grid);
        let mut values = self.values.clone();
        Zip::from(&mut values)
            .and(&other.values)
            .for_each(|v, &o| *v *= o);
        SurfaceField {
            grid: self.grid.clone(),
            side: self.side,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SurfaceField {
        SurfaceField {
            grid: self.grid.clone(),
            side: self.side,
            values: self.values.mapv(f),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / (self.values.len() as f64)
    }

    /// Discrete surface integral with the true T² measure (2pi)^2.
    pub fn integral(&self) -> f64 {
        self.mean() * TWO_PI * TWO_PI
    }

    pub fn spectral(&self) -> Array2<Complex64> {
        let mut data = self.values.mapv(|v| Complex64::new(v, 0.0));
        self.grid.fft2_plane(&mut data, true);
        data
    }

    pub fn from_spectral(grid: &Grid, side: Side, mut coeffs: Array2<Complex64>) -> SurfaceField {
        grid.fft2_plane(&mut coeffs, false);
        SurfaceField {
            grid: grid.clone(),
            side,
            values: coeffs.mapv(|c| c.re),
        }
    }

    /// Horizontal derivative along axis 1 or 2 (spectral).
    pub fn diff(&self, axis: usize) -> SurfaceField {
        let mut coeffs = self.spectral();
        let g = &self.grid;
        let kd = match axis {
            1 => g.k1_diff(),
            2 => g.k2_diff(),
            _ => panic!("surface axis must be 1 or 2"),
        };
        for ((p, q), c) in coeffs.indexed_iter_mut() {
            let k = if axis == 1 { kd[p] } else { kd[q] };
            *c *= Complex64::new(0.0, k);
        }
        SurfaceField::from_spectral(g, self.side, coeffs)
    }

    /// Apply a real multiplier m(k1, k2) per horizontal mode.
    pub fn apply_multiplier(&self, m: impl Fn(f64, f64) -> f64) -> SurfaceField {
        let mut coeffs = self.spectral();
        let g = &self.grid;
        let k1 = g.k1();
        let k2 = g.k2();
        for ((p, q), c) in coeffs.indexed_iter_mut() {
            *c *= m(k1[p], k2[q]);
        }
        SurfaceField::from_spectral(g, self.side, coeffs)
    }

    /// Horizontal Laplacian on the plane.
    pub fn delta_star(&self) -> SurfaceField {
        self.apply_multiplier(|k1, k2| -(k1 * k1 + k2 * k2))
    }

    /// Fourier-multiplier norm (1+|k|^2)^{s/2} in the mean-square convention:
    /// a single unit mode at k=(1,0) with s=1 has norm sqrt(2).
    pub fn fractional_norm(&self, s: f64) -> f64 {
        assert!(
            (-1.5..=3.5).contains(&s),
            "surface norm order s = {s} outside [-3/2, 7/2]"
        );
        let coeffs = self.spectral();
        let g = &self.grid;
        let k1 = g.k1();
        let k2 = g.k2();
        let mut acc = 0.0;
        for ((p, q), c) in coeffs.indexed_iter() {
            let w = (1.0 + k1[p] * k1[p] + k2[q] * k2[q]).powf(s);
            acc += w * c.norm_sqr();
        }
        acc.max(0.0).sqrt()
    }

    /// Plane L² norm in the mean-square convention (equals fractional_norm(0)).
    pub fn l2(&self) -> f64 {
        let mut acc = 0.0;
        for v in self.values.iter() {
            acc += v * v;
        }
        (acc / self.values.len() as f64).max(0.0).sqrt()
    }

    /// Discrete inner product in the mean convention.
    pub fn inner(&self, other: &SurfaceField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let mut acc = 0.0;
        Zip::from(&self.values).and(&other.values).for_each(|&a, &b| {
            acc += a * b;
        });
        acc / self.values.len() as f64
    }
}

/// Three scalar components sharing one grid.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub components: [ScalarField; 3],
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            components: [
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
            ],
        }
    }

    pub fn from_fns(
        grid: &Grid,
        f1: impl FnMut(f64, f64, f64) -> f64,
        f2: impl FnMut(f64, f64, f64) -> f64,
        f3: impl FnMut(f64, f64, f64) -> f64,
    ) -> Self {
        VectorField {
            components: [
                ScalarField::from_fn(grid, f1),
                ScalarField::from_fn(grid, f2),
                ScalarField::from_fn(grid, f3),
            ],
        }
    }

    /// The identity flow map eta(x) = x.
    pub fn identity_map(grid: &Grid) -> Self {
        VectorField::from_fns(grid, |x1, _, _| x1, |_, x2, _| x2, |_, _, x3| x3)
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn comp(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn lin_comb(&self, a: f64, other: &VectorField, b: f64) -> VectorField {
        VectorField {
            components: [
                self.components[0].lin_comb(a, &other.components[0], b),
                self.components[1].lin_comb(a, &other.components[1], b),
                self.components[2].lin_comb(a, &other.components[2], b),
            ],
        }
    }

    pub fn scale(&self, a: f64) -> VectorField {
        VectorField {
            components: [
                self.components[0].scale(a),
                self.components[1].scale(a),
                self.components[2].scale(a),
            ],
        }
    }

    pub fn sobolev_norm(&self, k: usize) -> Result<f64> {
        let mut acc = 0.0;
        for c in &self.components {
            let n = c.sobolev_norm(k)?;
            acc += n * n;
        }
        Ok(acc.sqrt())
    }

    pub fn l2_sq(&self) -> f64 {
        self.components.iter().map(|c| c.l2_sq()).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.sup_norm()))
    }

    pub fn trace(&self, side: Side) -> [SurfaceField; 3] {
        [
            self.components[0].trace(side),
            self.components[1].trace(side),
            self.components[2].trace(side),
        ]
    }
}

/// Convenience: `make_grid` as named in the module contract.
pub fn make_grid(n1: usize, n2: usize, n3: usize, scheme: VerticalScheme) -> Result<Grid> {
    Grid::new(n1, n2, n3, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cheb_grid() -> Grid {
        Grid::new(8, 8, 9, VerticalScheme::ChebyshevCollocation).unwrap()
    }

    #[test]
    fn make_grid_validates_counts() {
        assert!(Grid::new(7, 8, 9, VerticalScheme::ChebyshevCollocation).is_err());
        assert!(Grid::new(8, 8, 3, VerticalScheme::ChebyshevCollocation).is_err());
        assert!(Grid::new(2, 8, 9, VerticalScheme::ChebyshevCollocation).is_err());
        let g = Grid::new(4, 4, 5, VerticalScheme::UniformFd4).unwrap();
        assert_abs_diff_eq!(g.x3()[1] - g.x3()[0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn chebyshev_nodes_include_boundaries() {
        let g = cheb_grid();
        assert_abs_diff_eq!(g.x3()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.x3()[8], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spectral_round_trip() {
        let g = cheb_grid();
        let f = ScalarField::from_fn(&g, |x1, x2, x3| {
            (x1).sin() * (2.0 * x2).cos() + 0.3 * x3 * x3 + 0.1
        });
        let back = f.to_spectral().to_physical();
        let mut err: f64 = 0.0;
        Zip::from(f.values()).and(back.values()).for_each(|a, b| {
            err = err.max((a - b).abs());
        });
        assert!(err <= 1e-12 * f.sup_norm().max(1.0));
    }

    #[test]
    fn horizontal_derivative_exact_for_resolved_mode() {
        let g = cheb_grid();
        let f = ScalarField::from_fn(&g, |x1, _, _| x1.sin());
        let d = f.diff(1);
        let expect = ScalarField::from_fn(&g, |x1, _, _| x1.cos());
        let mut err: f64 = 0.0;
        Zip::from(d.values()).and(expect.values()).for_each(|a, b| {
            err = err.max((a - b).abs());
        });
        assert!(err <= 1e-12);
    }

    #[test]
    fn constant_has_zero_derivative() {
        let g = cheb_grid();
        let f = ScalarField::constant(&g, 3.25);
        for axis in 1..=3 {
            assert!(f.diff(axis).sup_norm() <= 1e-12);
        }
    }

    #[test]
    fn vertical_derivative_exact_for_polynomials() {
        let g = cheb_grid();
        let f = ScalarField::from_fn(&g, |_, _, x3| x3 * x3);
        let d = f.diff(3);
        let expect = ScalarField::from_fn(&g, |_, _, x3| 2.0 * x3);
        let mut err: f64 = 0.0;
        Zip::from(d.values()).and(expect.values()).for_each(|a, b| {
            err = err.max((a - b).abs());
        });
        assert!(err <= 1e-12);
    }

    #[test]
    fn fd4_vertical_derivative_order() {
        let g4 = Grid::new(4, 4, 17, VerticalScheme::UniformFd4).unwrap();
        let g8 = Grid::new(4, 4, 33, VerticalScheme::UniformFd4).unwrap();
        let err = |g: &Grid| {
            let f = ScalarField::from_fn(g, |_, _, x3| (2.0 * x3).sin());
            let d = f.diff(3);
            let expect = ScalarField::from_fn(g, |_, _, x3| 2.0 * (2.0 * x3).cos());
            let mut e: f64 = 0.0;
            Zip::from(d.values()).and(expect.values()).for_each(|a, b| {
                e = e.max((a - b).abs());
            });
            e
        };
        let e1 = err(&g4);
        let e2 = err(&g8);
        assert!(e2 < e1 / 10.0, "e1={e1:.3e} e2={e2:.3e}");
    }

    #[test]
    fn sobolev_norm_of_sine() {
        let g = Grid::new(16, 16, 17, VerticalScheme::ChebyshevCollocation).unwrap();
        let f = ScalarField::from_fn(&g, |x1, _, _| x1.sin());
        let n0 = f.sobolev_norm(0).unwrap();
        // ||sin x1||_{L2}^2 = (2 pi)(2 pi)(1)(1/2)
        let expect = (2.0 * PI * PI).sqrt();
        assert_abs_diff_eq!(n0, expect, epsilon = 1e-10);
        let n1 = f.sobolev_norm(1).unwrap();
        assert_abs_diff_eq!(n1, 2.0_f64.sqrt() * expect, epsilon = 1e-10);
    }

    #[test]
    fn sobolev_norm_zero_and_order_guard() {
        let g = cheb_grid();
        let z = ScalarField::zeros(&g);
        assert_eq!(z.sobolev_norm(3).unwrap(), 0.0);
        assert!(z.sobolev_norm(5).is_err());
    }

    #[test]
    fn sobolev_norm_monotone_in_order() {
        let g = cheb_grid();
        let f = ScalarField::from_fn(&g, |x1, x2, x3| (x1 + 0.3).sin() * x2.cos() + x3);
        let mut prev = 0.0;
        for k in 0..=4 {
            let n = f.sobolev_norm(k).unwrap();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn surface_norm_examples() {
        let g = cheb_grid();
        let z = SurfaceField::zeros(&g, Side::Top);
        assert_eq!(z.fractional_norm(1.0), 0.0);
        // cos + sin combination carrying the single mode |k| = 1 on each side
        let f = SurfaceField::from_fn(&g, Side::Top, |x1, _| x1.cos());
        // |f|_1^2 = (1+1) * (1/4 + 1/4) = 1 -> |f|_1 = 1; single complex modes
        // at +-1 each carry coefficient 1/2.
        assert_abs_diff_eq!(f.fractional_norm(1.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.fractional_norm(0.0), f.l2(), epsilon = 1e-12);
    }

    #[test]
    fn boundary_trace_examples() {
        let g = cheb_grid();
        let f = ScalarField::from_fn(&g, |_, _, x3| x3);
        let top = f.trace(Side::Top);
        let bot = f.trace(Side::Bottom);
        assert!(top.values().iter().all(|&v| (v - 1.0).abs() <= 1e-15));
        assert!(bot.values().iter().all(|&v| v.abs() <= 1e-15));
        let h = ScalarField::from_fn(&g, |x1, _, x3| x1.sin() * (1.0 - x3));
        let hb = h.trace(Side::Bottom);
        let expect = SurfaceField::from_fn(&g, Side::Bottom, |x1, _| x1.sin());
        let mut err: f64 = 0.0;
        Zip::from(hb.values()).and(expect.values()).for_each(|a, b| {
            err = err.max((a - b).abs());
        });
        assert!(err <= 1e-14);
    }

    #[test]
    fn diff_is_linear() {
        let g = cheb_grid();
        let f = ScalarField::from_fn(&g, |x1, x2, x3| x1.sin() * x2.cos() + x3 * x3);
        let h = ScalarField::from_fn(&g, |x1, x2, x3| (2.0 * x1).cos() + x2.sin() * x3);
        for axis in 1..=3 {
            let lhs = f.lin_comb(2.0, &h, -3.0).diff(axis);
            let rhs = f.diff(axis).lin_comb(2.0, &h.diff(axis), -3.0);
            let mut err: f64 = 0.0;
            Zip::from(lhs.values()).and(rhs.values()).for_each(|a, b| {
                err = err.max((a - b).abs());
            });
            assert!(err <= 1e-11, "axis {axis}: {err:.3e}");
        }
    }

    #[test]
    fn horizontal_derivatives_commute() {
        let g = cheb_grid();
        let f = ScalarField::from_fn(&g, |x1, x2, _| (x1 + 2.0 * x2).sin());
        let d12 = f.diff(1).diff(2);
        let d21 = f.diff(2).diff(1);
        let mut err: f64 = 0.0;
        Zip::from(d12.values()).and(d21.values()).for_each(|a, b| {
            err = err.max((a - b).abs());
        });
        assert!(err <= 1e-12);
    }

    #[test]
    fn delta_star_eigenmode() {
        let g = cheb_grid();
        let f = SurfaceField::from_fn(&g, Side::Bottom, |x1, _| x1.sin());
        let d = f.delta_star();
        let mut err: f64 = 0.0;
        Zip::from(d.values()).and(f.values()).for_each(|a, b| {
            err = err.max((a + b).abs());
        });
        assert!(err <= 1e-12);
    }

    #[test]
    fn clenshaw_curtis_integrates_polynomials() {
        let g = cheb_grid();
        // integral of x3^4 over [0,1] = 1/5 times the horizontal measure
        let f = ScalarField::from_fn(&g, |_, _, x3| x3.powi(4));
        assert_abs_diff_eq!(f.integral(), TWO_PI * TWO_PI / 5.0, epsilon = 1e-12);
    }
}
