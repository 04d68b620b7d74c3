//! Taylor-jet arithmetic at t = 0: scalar jets (for oracle tests), field
//! jets, and 3x3 matrix field jets with the Leibniz product, reciprocal and
//! matrix inverse recursions. Coefficients are raw derivatives d_t^j f(0),
//! not divided by j!.

use crate::geometry::MatrixField;
use crate::grid::{Grid, ScalarField, Side, SurfaceField, VectorField};

pub fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

// ---------------------------------------------------------------------------
// scalar jets (test oracles and closed-form checks)
// ---------------------------------------------------------------------------

/// Scalar Taylor jet: value and derivatives at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarJet {
    pub coeffs: Vec<f64>,
}

impl ScalarJet {
    pub fn constant(c: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = c;
        ScalarJet { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn mul(&self, other: &ScalarJet) -> ScalarJet {
        let order = self.order().min(other.order());
        let mut coeffs = vec![0.0; order + 1];
        for (j, c) in coeffs.iter_mut().enumerate() {
            for l in 0..=j {
                *c += binomial(j, l) * self.coeffs[l] * other.coeffs[j - l];
            }
        }
        ScalarJet { coeffs }
    }

    pub fn recip(&self) -> ScalarJet {
        let order = self.order();
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = 1.0 / self.coeffs[0];
        for j in 1..=order {
            let mut acc = 0.0;
            for l in 1..=j {
                acc += binomial(j, l) * self.coeffs[l] * coeffs[j - l];
            }
            coeffs[j] = -acc / self.coeffs[0];
        }
        ScalarJet { coeffs }
    }

    /// Composition g(f(t)) from the derivatives of g at f(0) (orders <= 3).
    pub fn compose(&self, g_derivs: &[f64]) -> ScalarJet {
        let order = self.order();
        assert!(order <= 3, "composition implemented to order 3");
        let f = &self.coeffs;
        let g = g_derivs;
        let mut out = vec![0.0; order + 1];
        out[0] = g[0];
        if order >= 1 {
            out[1] = g[1] * f[1];
        }
        if order >= 2 {
            out[2] = g[2] * f[1] * f[1] + g[1] * f[2];
        }
        if order >= 3 {
            out[3] = g[3] * f[1].powi(3) + 3.0 * g[2] * f[1] * f[2] + g[1] * f[3];
        }
        ScalarJet { coeffs: out }
    }
}

// ---------------------------------------------------------------------------
// field jets
// ---------------------------------------------------------------------------

/// Jet of a scalar field: coeffs[j] = d_t^j f(0) as a field.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub coeffs: Vec<ScalarField>,
}

impl FieldJet {
    pub fn zeros(grid: &Grid, order: usize) -> Self {
        FieldJet {
            coeffs: (0..=order).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn from_constant_field(f: ScalarField, order: usize) -> Self {
        let grid = f.grid().clone();
        let mut coeffs = vec![f];
        for _ in 0..order {
            coeffs.push(ScalarField::zeros(&grid));
        }
        FieldJet { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn grid(&self) -> &Grid {
        self.coeffs[0].grid()
    }

    pub fn truncated(&self, order: usize) -> FieldJet {
        FieldJet {
            coeffs: self.coeffs[..=order.min(self.order())].to_vec(),
        }
    }

    pub fn scale(&self, a: f64) -> FieldJet {
        FieldJet {
            coeffs: self.coeffs.iter().map(|c| c.scale(a)).collect(),
        }
    }

    pub fn add(&self, other: &FieldJet) -> FieldJet {
        let order = self.order().min(other.order());
        FieldJet {
            coeffs: (0..=order)
                .map(|j| self.coeffs[j].lin_comb(1.0, &other.coeffs[j], 1.0))
                .collect(),
        }
    }

    pub fn sub(&self, other: &FieldJet) -> FieldJet {
        let order = self.order().min(other.order());
        FieldJet {
            coeffs: (0..=order)
                .map(|j| self.coeffs[j].lin_comb(1.0, &other.coeffs[j], -1.0))
                .collect(),
        }
    }

    /// Leibniz product (pointwise raw products: jets are exact pointwise
    /// algebra).
    pub fn mul(&self, other: &FieldJet) -> FieldJet {
        let order = self.order().min(other.order());
        let grid = self.grid().clone();
        let mut coeffs = Vec::with_capacity(order + 1);
        for j in 0..=order {
            let mut acc = ScalarField::zeros(&grid);
            for l in 0..=j {
                acc.add_assign_scaled(
                    &self.coeffs[l].mul_raw(&other.coeffs[j - l]),
                    binomial(j, l),
                );
            }
            coeffs.push(acc);
        }
        FieldJet { coeffs }
    }

    pub fn recip(&self) -> FieldJet {
        let order = self.order();
        let grid = self.grid().clone();
        let inv0 = self.coeffs[0].recip();
        let mut coeffs = vec![inv0.clone()];
        for j in 1..=order {
            let mut acc = ScalarField::zeros(&grid);
            for l in 1..=j {
                acc.add_assign_scaled(
                    &self.coeffs[l].mul_raw(&coeffs[j - l]),
                    binomial(j, l),
                );
            }
            coeffs.push(acc.mul_raw(&inv0).scale(-1.0));
        }
        FieldJet { coeffs }
    }

    /// Jet of the time derivative: coefficient j of d_t f is f^{(j+1)}.
    pub fn time_shift(&self) -> FieldJet {
        FieldJet {
            coeffs: self.coeffs[1..].to_vec(),
        }
    }

    /// Spatial derivative per coefficient.
    pub fn diff(&self, axis: usize) -> FieldJet {
        FieldJet {
            coeffs: self.coeffs.iter().map(|c| c.diff(axis)).collect(),
        }
    }

    pub fn trace(&self, side: Side) -> Vec<SurfaceField> {
        self.coeffs.iter().map(|c| c.trace(side)).collect()
    }
}

/// Jet of a vector field.
#[derive(Clone, Debug)]
pub struct VectorJet {
    pub comps: [FieldJet; 3],
}

impl VectorJet {
    pub fn zeros(grid: &Grid, order: usize) -> Self {
        VectorJet {
            comps: [
                FieldJet::zeros(grid, order),
                FieldJet::zeros(grid, order),
                FieldJet::zeros(grid, order),
            ],
        }
    }

    pub fn from_coeff_fields(fields: &[VectorField]) -> Self {
        let comps = [0, 1, 2].map(|i| FieldJet {
            coeffs: fields.iter().map(|f| f.comp(i).clone()).collect(),
        });
        VectorJet { comps }
    }

    pub fn order(&self) -> usize {
        self.comps[0].order()
    }

    pub fn coeff(&self, j: usize) -> VectorField {
        VectorField {
            components: [
                self.comps[0].coeffs[j].clone(),
                self.comps[1].coeffs[j].clone(),
                self.comps[2].coeffs[j].clone(),
            ],
        }
    }
}

/// Jet of a 3x3 matrix field: coeffs[j] is a MatrixField.
#[derive(Clone, Debug)]
pub struct MatrixJet {
    pub coeffs: Vec<MatrixField>,
}

impl MatrixJet {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn entry_jet(&self, i: usize, j: usize) -> FieldJet {
        FieldJet {
            coeffs: self.coeffs.iter().map(|m| m.entry(i, j).clone()).collect(),
        }
    }

    /// Matrix-jet product via Leibniz.
    pub fn mul(&self, other: &MatrixJet, grid: &Grid) -> MatrixJet {
        let order = self.order().min(other.order());
        let mut coeffs = Vec::with_capacity(order + 1);
        for t in 0..=order {
            let m = MatrixField::from_fn(|i, j| {
                let mut acc = ScalarField::zeros(grid);
                for l in 0..=t {
                    let b = binomial(t, l);
                    for k in 0..3 {
                        acc.add_assign_scaled(
                            &self.coeffs[l]
                                .entry(i, k)
                                .mul_raw(other.coeffs[t - l].entry(k, j)),
                            b,
                        );
                    }
                }
                acc
            });
            coeffs.push(m);
        }
        MatrixJet { coeffs }
    }

    /// Jet of the pointwise matrix inverse: N_0 = M_0^{-1} (by cofactors),
    /// N_t = -N_0 sum_{l=1..t} C(t,l) M_l N_{t-l}.
    pub fn inverse(&self, grid: &Grid) -> MatrixJet {
        let order = self.order();
        let m0 = &self.coeffs[0];
        // cofactor inverse of the order-0 matrix
        let det = {
            let mut acc = ScalarField::zeros(grid);
            for j in 0..3 {
                let r = [(0 + 1) % 3, (0 + 2) % 3];
                let c = [(j + 1) % 3, (j + 2) % 3];
                let t1 = m0.entry(r[0], c[0]).mul_raw(m0.entry(r[1], c[1]));
                let t2 = m0.entry(r[0], c[1]).mul_raw(m0.entry(r[1], c[0]));
                acc.add_assign_scaled(&m0.entry(0, j).mul_raw(&t1.lin_comb(1.0, &t2, -1.0)), 1.0);
            }
            acc
        };
        let det_inv = det.recip();
        let n0 = MatrixField::from_fn(|i, j| {
            // inv = adj / det, adj_{ij} = cof_{ji}
            let r = [(j + 1) % 3, (j + 2) % 3];
            let c = [(i + 1) % 3, (i + 2) % 3];
            let t1 = m0.entry(r[0], c[0]).mul_raw(m0.entry(r[1], c[1]));
            let t2 = m0.entry(r[0], c[1]).mul_raw(m0.entry(r[1], c[0]));
            t1.lin_comb(1.0, &t2, -1.0).mul_raw(&det_inv)
        });
        let mut coeffs = vec![n0];
        for t in 1..=order {
            // S = sum_{l=1..t} C(t,l) M_l N_{t-l}
            let s = MatrixField::from_fn(|i, j| {
                let mut acc = ScalarField::zeros(grid);
                for l in 1..=t {
                    let b = binomial(t, l);
                    for k in 0..3 {
                        acc.add_assign_scaled(
                            &self.coeffs[l]
                                .entry(i, k)
                                .mul_raw(coeffs[t - l].entry(k, j)),
                            b,
                        );
                    }
                }
                acc
            });
            let n0 = &coeffs[0];
            let nt = MatrixField::from_fn(|i, j| {
                let mut acc = ScalarField::zeros(grid);
                for k in 0..3 {
                    acc.add_assign_scaled(&n0.entry(i, k).mul_raw(s.entry(k, j)), -1.0);
                }
                acc
            });
            coeffs.push(nt);
        }
        MatrixJet { coeffs }
    }

    /// Jet of the determinant (3x3 Leibniz expansion).
    pub fn det(&self, grid: &Grid) -> FieldJet {
        let perms: [([usize; 3], f64); 6] = [
            ([0, 1, 2], 1.0),
            ([1, 2, 0], 1.0),
            ([2, 0, 1], 1.0),
            ([0, 2, 1], -1.0),
            ([2, 1, 0], -1.0),
            ([1, 0, 2], -1.0),
        ];
        let order = self.order();
        let mut out = FieldJet::zeros(grid, order);
        for (p, sign) in perms {
            let a = self.entry_jet(0, p[0]);
            let b = self.entry_jet(1, p[1]);
            let c = self.entry_jet(2, p[2]);
            let prod = a.mul(&b).mul(&c);
            for j in 0..=order {
                out.coeffs[j].add_assign_scaled(&prod.coeffs[j], sign);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// covariant operators on jets
// ---------------------------------------------------------------------------

/// (A grad f)-jet: component i coefficient t = sum_l C(t,l) A^l_{ik} (d_k f)^{t-l}.
pub fn jet_cov_gradient(a: &MatrixJet, f: &FieldJet, grid: &Grid) -> VectorJet {
    let order = a.order().min(f.order());
    let df = [f.diff(1), f.diff(2), f.diff(3)];
    let comps = [0, 1, 2].map(|i| {
        let mut coeffs = Vec::with_capacity(order + 1);
        for t in 0..=order {
            let mut acc = ScalarField::zeros(grid);
            for l in 0..=t {
                let b = binomial(t, l);
                for k in 0..3 {
                    acc.add_assign_scaled(
                        &a.coeffs[l].entry(i, k).mul_raw(&df[k].coeffs[t - l]),
                        b,
                    );
                }
            }
            coeffs.push(acc);
        }
        FieldJet { coeffs }
    });
    VectorJet { comps }
}

/// (div_a u)-jet = sum C(t,l) A^l_{ik} (d_k u_i)^{t-l}.
pub fn jet_cov_divergence(a: &MatrixJet, u: &VectorJet, grid: &Grid) -> FieldJet {
    let order = a.order().min(u.order());
    let mut coeffs = Vec::with_capacity(order + 1);
    let du: Vec<[FieldJet; 3]> = (0..3)
        .map(|i| [u.comps[i].diff(1), u.comps[i].diff(2), u.comps[i].diff(3)])
        .collect();
    for t in 0..=order {
        let mut acc = ScalarField::zeros(grid);
        for l in 0..=t {
            let b = binomial(t, l);
            for i in 0..3 {
                for k in 0..3 {
                    acc.add_assign_scaled(
                        &a.coeffs[l].entry(i, k).mul_raw(&du[i][k].coeffs[t - l]),
                        b,
                    );
                }
            }
        }
        coeffs.push(acc);
    }
    FieldJet { coeffs }
}

/// (Delta_a f)-jet = div_a-jet of grad_a-jet.
pub fn jet_cov_laplacian(a: &MatrixJet, f: &FieldJet, grid: &Grid) -> FieldJet {
    let grad = jet_cov_gradient(a, f, grid);
    jet_cov_divergence(a, &grad, grid)
}

/// Jet of the covariant boundary flux n~ . grad_a f = N_j A_{ij} A_{ik} d_k f,
/// traced on a plane.
pub fn jet_flux_trace(
    a: &MatrixJet,
    f: &FieldJet,
    grid: &Grid,
    side: Side,
) -> Vec<SurfaceField> {
    let order = a.order().min(f.order());
    let grad = jet_cov_gradient(a, f, grid);
    let s = side.normal_sign();
    let mut out = Vec::with_capacity(order + 1);
    for t in 0..=order {
        let mut acc = SurfaceField::zeros(grid, side);
        for l in 0..=t {
            let b = binomial(t, l);
            for i in 0..3 {
                // n~_i = s A_{i3}
                let a_tr = a.coeffs[l].entry(i, 2).trace(side);
                let g_tr = grad.comps[i].coeffs[t - l].trace(side);
                acc = acc.lin_comb(1.0, &a_tr.mul(&g_tr), s * b);
            }
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VerticalScheme;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_jet_product_reciprocal_composition() {
        // f(t) = e^t, g(t) = 1/(1+t), to order 3
        let f = ScalarJet {
            coeffs: vec![1.0, 1.0, 1.0, 1.0],
        };
        let g = ScalarJet {
            coeffs: vec![1.0, -1.0, 2.0, -6.0],
        };
        // product e^t/(1+t): derivatives at 0: 1, 0, 1, -2
        let p = f.mul(&g);
        for (a, b) in p.coeffs.iter().zip([1.0, 0.0, 1.0, -2.0]) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-14);
        }
        // reciprocal of g is 1+t
        let r = g.recip();
        for (a, b) in r.coeffs.iter().zip([1.0, 1.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-14);
        }
        // g(t) composed as h(u) = 1/(1+u) with u = t (chain through compose)
        let ident = ScalarJet {
            coeffs: vec![0.0, 1.0, 0.0, 0.0],
        };
        let comp = ident.compose(&[1.0, -1.0, 2.0, -6.0]);
        for (a, b) in comp.coeffs.iter().zip(g.coeffs.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        // exp(sin t): derivatives 1, 1, 1, 0
        let sin_jet = ScalarJet {
            coeffs: vec![0.0, 1.0, 0.0, -1.0],
        };
        let es = sin_jet.compose(&[1.0, 1.0, 1.0, 1.0]);
        for (a, b) in es.coeffs.iter().zip([1.0, 1.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-14);
        }
    }

    #[test]
    fn field_jet_recip_is_inverse() {
        let g = Grid::new(8, 8, 9, VerticalScheme::ChebyshevCollocation).unwrap();
        let mk = |a: f64, b: f64, c: f64| {
            ScalarField::from_fn(&g, move |x1, _, x3| a + b * x1.sin() + c * x3)
        };
        let f = FieldJet {
            coeffs: vec![mk(2.0, 0.3, 0.2), mk(0.1, -0.2, 0.0), mk(0.0, 0.1, 0.4)],
        };
        let r = f.recip();
        let prod = f.mul(&r);
        assert!(prod.coeffs[0].map(|v| v - 1.0).sup_norm() <= 1e-12);
        assert!(prod.coeffs[1].sup_norm() <= 1e-12);
        assert!(prod.coeffs[2].sup_norm() <= 1e-12);
    }

    #[test]
    fn matrix_jet_inverse_is_inverse() {
        let g = Grid::new(8, 8, 9, VerticalScheme::ChebyshevCollocation).unwrap();
        let id = MatrixField::from_fn(|i, j| {
            ScalarField::constant(&g, if i == j { 1.0 } else { 0.0 })
        });
        let p1 = MatrixField::from_fn(|i, j| {
            let amp = 0.1 * (1 + i + 2 * j) as f64 / 9.0;
            ScalarField::from_fn(&g, move |x1, _, x3| amp * (x1.sin() + x3))
        });
        let m0 = MatrixField::from_fn(|i, j| {
            let base = if i == j { 1.0 } else { 0.0 };
            p1.entry(i, j).map(move |v| base + 0.5 * v)
        });
        let m = MatrixJet {
            coeffs: vec![m0, p1.clone(), p1],
        };
        let n = m.inverse(&g);
        let prod = m.mul(&n, &g);
        for t in 0..=2 {
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if t == 0 && i == j { 1.0 } else { 0.0 };
                    let err = prod.coeffs[t].entry(i, j).map(|v| v - expect).sup_norm();
                    assert!(err <= 1e-10, "t={t} ({i},{j}): {err:.3e}");
                }
            }
        }
        // determinant jet of the identity-jet is (1, 0, 0)
        let idj = MatrixJet {
            coeffs: vec![
                id,
                MatrixField::from_fn(|_, _| ScalarField::zeros(&g)),
            ],
        };
        let d = idj.det(&g);
        assert!(d.coeffs[0].map(|v| v - 1.0).sup_norm() <= 1e-13);
        assert!(d.coeffs[1].sup_norm() <= 1e-13);
    }
}
