//! Recursive construction of the time jets of (eta, q, v, theta) at t = 0 for
//! each system variant, and evaluation of the compatibility residuals on the
//! boundary planes.

use crate::elliptic::{invert_delta_star, remove_mean};
use crate::error::{Error, Result};
use crate::geometry::{compute_geometry, FlowMap, GeometryCache, MatrixField};
use crate::grid::{Grid, ScalarField, Side, SurfaceField, VectorField};
use crate::smoothing::{
    harmonic_extension, horizontal_smooth_surface, smooth_flow_map, MultiplierKind,
};

use super::arith::{
    binomial, jet_cov_divergence, jet_cov_gradient, jet_cov_laplacian, jet_flux_trace, FieldJet,
    MatrixJet, VectorJet,
};

/// Physical constants of the system.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PhysicalParams {
    pub mu: f64,
    pub r_gas: f64,
    pub c_v: f64,
    pub p_bar: f64,
    pub c0: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            mu: 1.0,
            r_gas: 1.0,
            c_v: 1.5,
            p_bar: 1.0,
            c0: 0.25,
        }
    }
}

/// Which system the jets are built for.
#[derive(Debug, Clone, Copy)]
pub enum JetVariant {
    /// The unregularized system with exact geometry.
    Baseline,
    /// Tangentially smoothed system: geometry of the smoothed map, the
    /// flow-map correction in d_t eta, and the corrector source in the
    /// temperature equation. kappa = 0 gives the interior-smoothed-data
    /// system.
    KappaDelta { kappa: f64, kind: MultiplierKind },
    /// Rescaled system: 1/lambda^2 in the momentum equation.
    Mach { lambda: f64 },
}

/// Initial data snapshot.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub eta: FlowMap,
    pub q: ScalarField,
    pub v: VectorField,
    pub theta: ScalarField,
}

impl InitialData {
    pub fn equilibrium(grid: &Grid, params: &PhysicalParams, theta0: f64) -> Self {
        InitialData {
            eta: FlowMap::identity(grid),
            q: ScalarField::constant(grid, params.p_bar),
            v: VectorField::zeros(grid),
            theta: ScalarField::constant(grid, theta0),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.q.grid()
    }
}

/// Taylor coefficients of the unknowns at t = 0. `eta` coefficients are
/// displacement fields (coefficient 0 is the displacement of the initial map).
#[derive(Clone, Debug)]
pub struct TimeJet {
    pub order: usize,
    pub eta: Vec<VectorField>,
    pub q: Vec<ScalarField>,
    pub v: Vec<VectorField>,
    pub theta: Vec<ScalarField>,
    /// Coefficient-matrix jets of the geometry actually used by the system
    /// (smoothed geometry for the KappaDelta variant).
    pub a_jets: MatrixJet,
    /// Jet coefficients of the flow-map correction velocity (zero unless
    /// KappaDelta with kappa > 0).
    pub psi: Vec<VectorField>,
}

/// Per-order boundary residuals of the compatibility conditions.
#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    /// |d_t^j q(0) - d_t^j pbar|_{Linf(Sigma)} per order.
    pub q_residual: Vec<f64>,
    /// |d_t^j (grad_a theta . n~)(0)|_{Linf(Sigma)} per order.
    pub flux_residual: Vec<f64>,
}

impl CompatibilityReport {
    pub fn max_residual(&self) -> f64 {
        self.q_residual
            .iter()
            .chain(self.flux_residual.iter())
            .fold(0.0_f64, |m, &v| m.max(v))
    }
}

/// Geometry jets of a flow-map jet: A-jet = inverse of (grad eta)^T-jet.
pub fn geometry_jets(grid: &Grid, eta_jets: &[VectorField]) -> MatrixJet {
    let coeffs: Vec<MatrixField> = eta_jets
        .iter()
        .enumerate()
        .map(|(t, u)| {
            MatrixField::from_fn(|i, j| {
                // (grad eta)^T entry (i,j) = d_i eta_j
                let mut d = u.comp(j).diff(i + 1);
                if t == 0 && i == j {
                    d = d.map(|v| v + 1.0);
                }
                d
            })
        })
        .collect();
    MatrixJet { coeffs }.inverse(grid)
}

/// Jacobian jet det(grad eta).
pub fn jacobian_jets(grid: &Grid, eta_jets: &[VectorField]) -> FieldJet {
    let coeffs: Vec<MatrixField> = eta_jets
        .iter()
        .enumerate()
        .map(|(t, u)| {
            MatrixField::from_fn(|i, j| {
                let mut d = u.comp(i).diff(j + 1);
                if t == 0 && i == j {
                    d = d.map(|v| v + 1.0);
                }
                d
            })
        })
        .collect();
    MatrixJet { coeffs }.det(grid)
}

/// Smooth each flow-map jet coefficient (the harmonic smoother is linear).
fn smoothed_eta_jets(
    eta_jets: &[VectorField],
    kappa: f64,
    kind: MultiplierKind,
) -> Result<Vec<VectorField>> {
    if kappa == 0.0 {
        return Ok(eta_jets.to_vec());
    }
    eta_jets
        .iter()
        .map(|u| {
            smooth_flow_map(&FlowMap::from_displacement(u.clone()), kappa, kind)
                .map(|m| m.displacement().clone())
        })
        .collect()
}

/// Coefficient t of the flow-map correction for the smoothed system, given
/// eta-jets, smoothed-geometry jets and v-jets up to order t.
fn correction_coefficient(
    grid: &Grid,
    eta_jets: &[VectorField],
    ak_jets: &MatrixJet,
    v_jets: &[VectorField],
    t: usize,
    kappa: f64,
    kind: MultiplierKind,
) -> Result<VectorField> {
    if kappa == 0.0 {
        return Ok(VectorField::zeros(grid));
    }
    let smooth2 = |f: &SurfaceField| {
        horizontal_smooth_surface(&horizontal_smooth_surface(f, kappa, kind), kappa, kind)
    };
    let mut planes: Vec<[SurfaceField; 2]> = Vec::with_capacity(3);
    for m in 0..3 {
        let mut per_side: Vec<SurfaceField> = Vec::with_capacity(2);
        for side in Side::BOTH {
            // coefficient t of
            //   Delta_* eta_i A_{ia} d_a (L^2 v_m) - Delta_*(L^2 eta)_i A_{ia} d_a v_m
            let mut expr = SurfaceField::zeros(grid, side);
            for l in 0..=t {
                for r in 0..=(t - l) {
                    let s = t - l - r;
                    // trinomial coefficient t! / (l! r! s!)
                    let c = binomial(t, l) * binomial(t - l, r);
                    for alpha in 0..2 {
                        for i in 0..3 {
                            let lap_eta = eta_jets[l].comp(i).trace(side).delta_star();
                            let a_tr = ak_jets.coeffs[r].entry(i, alpha).trace(side);
                            let dv = v_jets[s].comp(m).trace(side).diff(alpha + 1);
                            let term1 = lap_eta.mul(&a_tr).mul(&smooth2(&dv));
                            let term2 = smooth2(&lap_eta).mul(&a_tr).mul(&dv);
                            expr = expr.lin_comb(1.0, &term1.lin_comb(1.0, &term2, -1.0), c);
                        }
                    }
                }
            }
            per_side.push(invert_delta_star(&remove_mean(&expr)));
        }
        let top = per_side.remove(1);
        let bottom = per_side.remove(0);
        planes.push([bottom, top]);
    }
    let mut comps = Vec::with_capacity(3);
    for pl in &planes {
        comps.push(harmonic_extension(grid, &pl[0], &pl[1])?);
    }
    Ok(VectorField {
        components: [comps.remove(0), comps.remove(0), comps.remove(0)],
    })
}

fn check_positive(data: &InitialData, params: &PhysicalParams) -> Result<()> {
    let qmin = data.q.min_value();
    let tmin = data.theta.min_value();
    if qmin < params.c0 || tmin < params.c0 {
        return Err(Error::DegenerateState(format!(
            "min q = {qmin:.3e}, min theta = {tmin:.3e} below c0 = {:.3e}",
            params.c0
        )));
    }
    Ok(())
}

/// Build the time jets of the chosen variant up to `order` (J <= 3).
///
/// `xi_jets[j]` are the corrector source coefficients d_t^j Xi(0); missing
/// entries are zero.
pub fn build_time_jets(
    data: &InitialData,
    params: &PhysicalParams,
    order: usize,
    variant: JetVariant,
    xi_jets: &[ScalarField],
) -> Result<TimeJet> {
    assert!(order <= 3, "jet order at most 3");
    check_positive(data, params)?;
    let grid = data.grid().clone();

    let (kappa, kind) = match variant {
        JetVariant::KappaDelta { kappa, kind } => (kappa, kind),
        _ => (0.0, MultiplierKind::Gaussian),
    };
    let momentum_factor = match variant {
        JetVariant::Mach { lambda } => 1.0 / (lambda * lambda),
        _ => 1.0,
    };
    let smoothed = matches!(variant, JetVariant::KappaDelta { .. }) && kappa > 0.0;

    let mut eta_jets: Vec<VectorField> = vec![data.eta.displacement().clone()];
    let mut q_jets: Vec<ScalarField> = vec![data.q.clone()];
    let mut v_jets: Vec<VectorField> = vec![data.v.clone()];
    let mut theta_jets: Vec<ScalarField> = vec![data.theta.clone()];
    let mut psi_jets: Vec<VectorField> = Vec::new();

    let xi_at = |j: usize| -> ScalarField {
        xi_jets
            .get(j)
            .cloned()
            .unwrap_or_else(|| ScalarField::zeros(&grid))
    };

    let mut a_jets_final: Option<MatrixJet> = None;

    for j in 0..order {
        // geometry jets of the system: A(eta^kappa)-jets to order j
        let etak = if smoothed {
            smoothed_eta_jets(&eta_jets, kappa, kind)?
        } else {
            eta_jets.clone()
        };
        // guard the zero-order Jacobian of the smoothed map
        {
            let j0 = jacobian_jets(&grid, &etak[..1]);
            let min_j = j0.coeffs[0].min_value();
            if min_j <= crate::geometry::DEGENERATE_J_THRESHOLD {
                return Err(Error::DegenerateMap {
                    min_j,
                    threshold: crate::geometry::DEGENERATE_J_THRESHOLD,
                });
            }
        }
        let a_jets = geometry_jets(&grid, &etak);

        let qj = FieldJet {
            coeffs: q_jets.clone(),
        };
        let thj = FieldJet {
            coeffs: theta_jets.clone(),
        };
        let vj = VectorJet::from_coeff_fields(&v_jets);
        let xi = FieldJet {
            coeffs: (0..=j).map(&xi_at).collect(),
        };

        let div_v = jet_cov_divergence(&a_jets, &vj, &grid);
        let lap_th = jet_cov_laplacian(&a_jets, &thj, &grid);

        // G = -q div_a v + mu Lap_a theta + Xi
        let g = qj
            .mul(&div_v)
            .scale(-1.0)
            .add(&lap_th.scale(params.mu))
            .add(&xi);
        // F = (R theta) / (c_v q)
        let f = thj.mul(&qj.recip()).scale(params.r_gas / params.c_v);
        let theta_next = f.mul(&g).coeffs[j].clone();
        theta_jets.push(theta_next);

        // q_{j+1} = coeff_j( -q div_a v + q (1/theta) d_t theta )
        let thj_ext = FieldJet {
            coeffs: theta_jets.clone(),
        };
        let dt_theta = thj_ext.time_shift();
        let q_next_jet = qj
            .mul(&div_v)
            .scale(-1.0)
            .add(&qj.mul(&thj.recip()).mul(&dt_theta));
        q_jets.push(q_next_jet.coeffs[j].clone());

        // v_{j+1} = coeff_j( -(R theta / q) grad_a q ) * momentum factor
        let grad_q = jet_cov_gradient(&a_jets, &qj, &grid);
        let coef = thj.mul(&qj.recip()).scale(-params.r_gas * momentum_factor);
        let v_next = VectorField {
            components: [0, 1, 2].map(|i| coef.mul(&grad_q.comps[i]).coeffs[j].clone()),
        };
        v_jets.push(v_next);

        // eta_{j+1} = v_j + psi_j
        let psi_j = if smoothed {
            correction_coefficient(&grid, &eta_jets, &a_jets, &v_jets, j, kappa, kind)?
        } else {
            VectorField::zeros(&grid)
        };
        let eta_next = v_jets[j].lin_comb(1.0, &psi_j, 1.0);
        psi_jets.push(psi_j);
        eta_jets.push(eta_next);
        a_jets_final = Some(a_jets);
    }

    // geometry jets at the full order for residual evaluation
    let a_jets = match a_jets_final {
        Some(_) if order > 0 => {
            let etak = if smoothed {
                smoothed_eta_jets(&eta_jets, kappa, kind)?
            } else {
                eta_jets.clone()
            };
            geometry_jets(&grid, &etak)
        }
        _ => {
            let etak = if smoothed {
                smoothed_eta_jets(&eta_jets, kappa, kind)?
            } else {
                eta_jets.clone()
            };
            geometry_jets(&grid, &etak)
        }
    };

    Ok(TimeJet {
        order,
        eta: eta_jets,
        q: q_jets,
        v: v_jets,
        theta: theta_jets,
        a_jets,
        psi: psi_jets,
    })
}

/// Evaluate the boundary compatibility residuals of a jet up to its order.
pub fn compatibility_residual(jets: &TimeJet, params: &PhysicalParams) -> CompatibilityReport {
    let grid = jets.q[0].grid().clone();
    let thj = FieldJet {
        coeffs: jets.theta.clone(),
    };
    let flux_b = jet_flux_trace(&jets.a_jets, &thj, &grid, Side::Bottom);
    let flux_t = jet_flux_trace(&jets.a_jets, &thj, &grid, Side::Top);
    let mut q_res = Vec::with_capacity(jets.order + 1);
    let mut f_res = Vec::with_capacity(jets.order + 1);
    for j in 0..=jets.order {
        let target = if j == 0 { params.p_bar } else { 0.0 };
        let qb = jets.q[j].trace(Side::Bottom).map(|v| v - target).sup_norm();
        let qt = jets.q[j].trace(Side::Top).map(|v| v - target).sup_norm();
        q_res.push(qb.max(qt));
        f_res.push(flux_b[j].sup_norm().max(flux_t[j].sup_norm()));
    }
    CompatibilityReport {
        q_residual: q_res,
        flux_residual: f_res,
    }
}

/// Geometry cache of the initial (possibly smoothed) map of a jet build.
pub fn initial_geometry(data: &InitialData, variant: JetVariant) -> Result<GeometryCache> {
    match variant {
        JetVariant::KappaDelta { kappa, kind } if kappa > 0.0 => {
            let etak = smooth_flow_map(&data.eta, kappa, kind)?;
            compute_geometry(&etak)
        }
        _ => compute_geometry(&data.eta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VerticalScheme;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(8, 8, 9, VerticalScheme::ChebyshevCollocation).unwrap()
    }

    #[test]
    fn equilibrium_jets_vanish() {
        let g = grid();
        let params = PhysicalParams::default();
        let data = InitialData::equilibrium(&g, &params, 2.0);
        for variant in [
            JetVariant::Baseline,
            JetVariant::KappaDelta {
                kappa: 0.2,
                kind: MultiplierKind::Gaussian,
            },
            JetVariant::Mach { lambda: 0.3 },
        ] {
            let jets = build_time_jets(&data, &params, 2, variant, &[]).unwrap();
            for j in 1..=2 {
                assert!(jets.q[j].sup_norm() <= 1e-9, "q jet {j}");
                assert!(jets.v[j].sup_norm() <= 1e-9, "v jet {j}");
                assert!(jets.theta[j].sup_norm() <= 1e-9, "theta jet {j}");
            }
            // roundoff floors are amplified by repeated derivative
            // applications in the jet chains
            let rep = compatibility_residual(&jets, &params);
            assert!(rep.max_residual() <= 1e-7, "{:.3e}", rep.max_residual());
        }
    }

    #[test]
    fn thermal_bump_first_jet_closed_form() {
        // theta0 = const + a cos(pi x3), rest equilibrium:
        // d_t theta(0) = (R theta0 / (c_v p)) mu Lap theta0,
        // d_t q(0) = (q/theta) d_t theta = (R/c_v) mu Lap theta0.
        let g = Grid::new(8, 8, 17, VerticalScheme::ChebyshevCollocation).unwrap();
        let params = PhysicalParams::default();
        let a = 0.1;
        let tbar = 2.0;
        let theta = ScalarField::from_fn(&g, move |_, _, x3| tbar + a * (PI * x3).cos());
        let data = InitialData {
            eta: FlowMap::identity(&g),
            q: ScalarField::constant(&g, params.p_bar),
            v: VectorField::zeros(&g),
            theta: theta.clone(),
        };
        let jets = build_time_jets(&data, &params, 1, JetVariant::Baseline, &[]).unwrap();
        let lap = ScalarField::from_fn(&g, move |_, _, x3| -a * PI * PI * (PI * x3).cos());
        let expect_theta = theta
            .map(|v| v * params.r_gas / (params.c_v * params.p_bar) * params.mu)
            .mul_raw(&lap);
        let err = jets.theta[1].lin_comb(1.0, &expect_theta, -1.0).sup_norm();
        assert!(err <= 1e-7, "d_t theta closed form: {err:.3e}");
        let expect_q = lap.scale(params.mu * params.r_gas / params.c_v);
        let err_q = jets.q[1].lin_comb(1.0, &expect_q, -1.0).sup_norm();
        assert!(err_q <= 1e-7, "d_t q closed form: {err_q:.3e}");
        // flux residual of this data at order 0 vanishes (d3 theta = 0 at planes)
        let rep = compatibility_residual(&jets, &params);
        assert!(rep.flux_residual[0] <= 1e-10);
        assert!(rep.q_residual[0] <= 1e-12);
    }

    #[test]
    fn generic_data_has_nonzero_residuals() {
        let g = grid();
        let params = PhysicalParams::default();
        let data = InitialData {
            eta: FlowMap::identity(&g),
            q: ScalarField::from_fn(&g, |x1, _, x3| 1.0 + 0.1 * x1.sin() * x3),
            v: VectorField::from_fns(
                &g,
                |_, x2, x3| 0.05 * x2.cos() * x3,
                |x1, _, _| 0.04 * x1.sin(),
                |x1, _, x3| 0.06 * x1.cos() * x3,
            ),
            theta: ScalarField::from_fn(&g, |_, x2, x3| 2.0 + 0.1 * x2.sin() + 0.2 * x3),
        };
        let jets = build_time_jets(&data, &params, 2, JetVariant::Baseline, &[]).unwrap();
        let rep = compatibility_residual(&jets, &params);
        assert!(rep.q_residual[0] > 1e-3);
        assert!(rep.flux_residual[0] > 1e-3);
    }

    #[test]
    fn mach_variant_scales_momentum() {
        let g = grid();
        let params = PhysicalParams::default();
        let data = InitialData {
            eta: FlowMap::identity(&g),
            q: ScalarField::from_fn(&g, |_, _, x3| 1.0 + 0.01 * (x3 * x3 - x3)),
            v: VectorField::zeros(&g),
            theta: ScalarField::constant(&g, 2.0),
        };
        let lambda = 0.5;
        let base = build_time_jets(&data, &params, 1, JetVariant::Baseline, &[]).unwrap();
        let mach = build_time_jets(
            &data,
            &params,
            1,
            JetVariant::Mach { lambda },
            &[],
        )
        .unwrap();
        let scaled = base.v[1].scale(1.0 / (lambda * lambda));
        let err = mach.v[1].lin_comb(1.0, &scaled, -1.0).sup_norm();
        assert!(err <= 1e-12 * scaled.sup_norm().max(1.0));
    }

    #[test]
    fn degenerate_state_rejected() {
        let g = grid();
        let params = PhysicalParams::default();
        let mut data = InitialData::equilibrium(&g, &params, 2.0);
        data.theta = ScalarField::constant(&g, 0.1); // below c0
        assert!(matches!(
            build_time_jets(&data, &params, 1, JetVariant::Baseline, &[]),
            Err(Error::DegenerateState(_))
        ));
    }
}
