//! Trace-matched temperature for the tangentially smoothed system: a vertical
//! polynomial correction of the smoothed temperature whose boundary traces of
//! d3^j are adjusted, order by order, so that the smoothed-geometry
//! compatibility conditions hold. The trace-response coefficients are
//! measured by probe evaluations of the actual discrete residuals and each
//! trace order is driven to tolerance by Newton iteration.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Side, SurfaceField};
use crate::smoothing::MultiplierKind;

use super::arith::FieldJet;
use super::build::{build_time_jets, InitialData, JetVariant, PhysicalParams};
use super::delta::SmoothedDataBundle;
use super::jet_flux_trace_of;

const TRACE_TOL: f64 = 1e-10;
const TRACE_STALL_TOL: f64 = 3e-9;
const TRACE_MAXIT: usize = 15;
const PROBE_EPS: f64 = 1e-4;

fn bump_field(plane: &SurfaceField, profile: &[f64]) -> ScalarField {
    let grid = plane.grid().clone();
    let mut out = ScalarField::zeros(&grid);
    for i1 in 0..grid.n1() {
        for i2 in 0..grid.n2() {
            let p = plane.values()[[i1, i2]];
            for (l, b) in profile.iter().enumerate() {
                out.values_mut()[[i1, i2, l]] = p * b;
            }
        }
    }
    out
}

/// Residual targeted by vertical-trace order jtrace: even orders 2l pin the
/// pressure-jet condition at time order l, odd orders 2l+1 pin the flux
/// condition at time order l.
fn trace_residual(
    bundle: &SmoothedDataBundle,
    theta: &ScalarField,
    params: &PhysicalParams,
    kappa: f64,
    kind: MultiplierKind,
    jtrace: usize,
) -> Result<[SurfaceField; 2]> {
    let grid = bundle.grid().clone();
    let time_order = jtrace / 2;
    let data = InitialData {
        eta: bundle.data.eta.clone(),
        q: bundle.data.q.clone(),
        v: bundle.data.v.clone(),
        theta: theta.clone(),
    };
    let jets = build_time_jets(
        &data,
        params,
        time_order,
        JetVariant::KappaDelta { kappa, kind },
        &bundle.xi_jets,
    )?;
    if jtrace % 2 == 0 {
        let target = if time_order == 0 { params.p_bar } else { 0.0 };
        Ok([
            jets.q[time_order].trace(Side::Bottom).map(|v| v - target),
            jets.q[time_order].trace(Side::Top).map(|v| v - target),
        ])
    } else {
        let th = FieldJet {
            coeffs: jets.theta.clone(),
        };
        let fb = jet_flux_trace_of(&jets.a_jets, &th, &grid, Side::Bottom)[time_order].clone();
        let ft = jet_flux_trace_of(&jets.a_jets, &th, &grid, Side::Top)[time_order].clone();
        Ok([fb, ft])
    }
}

/// Build the trace-matched temperature for the tangentially smoothed system.
/// Vertical trace orders j = 1..=2*order+1 are processed in sequence; order 0
/// keeps the smoothed temperature itself.
pub fn construct_kappa_temperature(
    bundle: &SmoothedDataBundle,
    params: &PhysicalParams,
    kappa: f64,
    order: usize,
) -> Result<ScalarField> {
    assert!(order <= 3, "adjustment order at most 3");
    let grid = bundle.grid().clone();
    if kappa == 0.0 {
        return Ok(bundle.data.theta.clone());
    }
    let mut theta = bundle.data.theta.clone();
    let max_trace = 2 * order + 1;

    for jtrace in 1..=max_trace {
        // the q-jet condition at time order 0 involves no temperature trace
        if jtrace == 0 || (jtrace % 2 == 0 && jtrace / 2 == 0) {
            continue;
        }
        let prof_b = super::delta::hermite_profile(&grid, Side::Bottom, jtrace, max_trace);
        let prof_t = super::delta::hermite_profile(&grid, Side::Top, jtrace, max_trace);

        let base = trace_residual(bundle, &theta, params, kappa, kind_of(bundle), jtrace)?;
        // probe the pointwise leading response
        let ones_b = SurfaceField::constant(&grid, Side::Bottom, 1.0);
        let ones_t = SurfaceField::constant(&grid, Side::Top, 1.0);
        let probe = theta
            .lin_comb(1.0, &bump_field(&ones_b, &prof_b), PROBE_EPS)
            .lin_comb(1.0, &bump_field(&ones_t, &prof_t), PROBE_EPS);
        let resp = trace_residual(bundle, &probe, params, kappa, kind_of(bundle), jtrace)?;
        let mut lead: Vec<SurfaceField> = (0..2)
            .map(|si| resp[si].lin_comb(1.0 / PROBE_EPS, &base[si], -1.0 / PROBE_EPS))
            .collect();
        for (si, l) in lead.iter().enumerate() {
            let lmin = l.values().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            if lmin < 1e-12 {
                return Err(Error::AdjustmentFailure(format!(
                    "trace order {jtrace}: leading response vanishes on plane {si} (min {lmin:.3e})"
                )));
            }
        }

        let mut res = base;
        let scale = 1.0 + res[0].sup_norm().max(res[1].sup_norm());
        let mut it = 0;
        let mut step = 1.0_f64;
        let mut prev = f64::INFINITY;
        loop {
            let rmax = res[0].sup_norm().max(res[1].sup_norm());
            if rmax <= TRACE_TOL * scale {
                break;
            }
            if prev.is_finite() && rmax > 0.0 {
                let ratio = rmax / prev;
                step = if ratio < 0.95 {
                    (step / (1.0 - ratio)).clamp(1.0, 4.0)
                } else {
                    1.0
                };
                if ratio >= 0.6 {
                    // refresh the measured leading response at the current state
                    let probe = theta
                        .lin_comb(1.0, &bump_field(&ones_b, &prof_b), PROBE_EPS)
                        .lin_comb(1.0, &bump_field(&ones_t, &prof_t), PROBE_EPS);
                    let resp =
                        trace_residual(bundle, &probe, params, kappa, kind_of(bundle), jtrace)?;
                    for si in 0..2 {
                        lead[si] =
                            resp[si].lin_comb(1.0 / PROBE_EPS, &res[si], -1.0 / PROBE_EPS);
                    }
                    step = 1.0;
                    if ratio >= 0.98 && rmax <= TRACE_STALL_TOL * scale {
                        break;
                    }
                }
            }
            prev = rmax;
            if it >= TRACE_MAXIT {
                if rmax <= TRACE_STALL_TOL * scale {
                    break;
                }
                return Err(Error::AdjustmentFailure(format!(
                    "trace order {jtrace}: residual {rmax:.3e} after {it} passes"
                )));
            }
            it += 1;
            let corr_b = res[0].mul(&lead[0].map(|v| -1.0 / v));
            let corr_t = res[1].mul(&lead[1].map(|v| -1.0 / v));
            theta = theta
                .lin_comb(1.0, &bump_field(&corr_b, &prof_b), step)
                .lin_comb(1.0, &bump_field(&corr_t, &prof_t), step);
            res = trace_residual(bundle, &theta, params, kappa, kind_of(bundle), jtrace)?;
        }
    }
    Ok(theta)
}

fn kind_of(bundle: &SmoothedDataBundle) -> MultiplierKind {
    bundle.kind
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FlowMap;
    use crate::grid::{VectorField, VerticalScheme};
    use crate::jets::build::compatibility_residual;
    use crate::jets::delta::construct_smoothed_data;

    #[test]
    fn zero_kappa_returns_smoothed_temperature() {
        let g = Grid::new(8, 8, 13, VerticalScheme::ChebyshevCollocation).unwrap();
        let params = PhysicalParams::default();
        let raw = InitialData::equilibrium(&g, &params, 2.0);
        let bundle =
            construct_smoothed_data(&raw, &params, 0.2, 1, MultiplierKind::Gaussian).unwrap();
        let th = construct_kappa_temperature(&bundle, &params, 0.0, 1).unwrap();
        assert!(th.lin_comb(1.0, &bundle.data.theta, -1.0).sup_norm() == 0.0);
    }

    #[test]
    fn kappa_adjusted_temperature_restores_compatibility() {
        let g = Grid::new(8, 8, 13, VerticalScheme::ChebyshevCollocation).unwrap();
        let params = PhysicalParams::default();
        let raw = InitialData {
            eta: FlowMap::from_displacement(VectorField::from_fns(
                &g,
                |x1, _, x3| 0.03 * x1.sin() * x3 * (1.0 - x3),
                |_, x2, x3| 0.02 * x2.cos() * x3 * (1.0 - x3),
                |x1, x2, x3| 0.02 * (x1 + x2).cos() * x3 * (1.0 - x3),
            )),
            q: ScalarField::from_fn(&g, |x1, _, x3| 1.0 + 0.04 * x1.sin() * x3 * (1.0 - x3)),
            v: VectorField::from_fns(
                &g,
                |_, x2, x3| 0.02 * x2.cos() * x3,
                |x1, _, _| 0.02 * x1.sin(),
                |x1, _, x3| 0.03 * x1.cos() * x3,
            ),
            theta: ScalarField::from_fn(&g, |_, x2, x3| 2.0 + 0.03 * x2.sin() * (1.0 + 0.5 * x3)),
        };
        let order = 1;
        let bundle =
            construct_smoothed_data(&raw, &params, 0.2, order, MultiplierKind::Gaussian).unwrap();
        let kappa = 0.2;
        let theta_k =
            construct_kappa_temperature(&bundle, &params, kappa, order).unwrap();
        let data = InitialData {
            eta: bundle.data.eta.clone(),
            q: bundle.data.q.clone(),
            v: bundle.data.v.clone(),
            theta: theta_k,
        };
        let jets = build_time_jets(
            &data,
            &params,
            order,
            JetVariant::KappaDelta {
                kappa,
                kind: MultiplierKind::Gaussian,
            },
            &bundle.xi_jets,
        )
        .unwrap();
        let rep = compatibility_residual(&jets, &params);
        assert!(
            rep.max_residual() <= 1e-8,
            "kd compatibility residuals {:?} / {:?}",
            rep.q_residual,
            rep.flux_residual
        );
    }
}
