use eflab_core::elliptic::*;
use eflab_core::geometry::*;
use eflab_core::grid::*;
use eflab_core::jets::arith::FieldJet;
use eflab_core::jets::*;
use eflab_core::smoothing::MultiplierKind;

fn laplacian(f: &ScalarField) -> ScalarField {
    let mut lap = f.diff(1).diff(1);
    lap.add_assign_scaled(&f.diff(2).diff(2), 1.0);
    lap.add_assign_scaled(&f.diff(3).diff(3), 1.0);
    lap
}

fn main() {
    let g = Grid::new(8, 8, 13, VerticalScheme::ChebyshevCollocation).unwrap();
    let params = PhysicalParams::default();
    let theta0 = 2.0;
    // equilibrium data; prescribe theta-jets w = (theta0, 0, w2) with chosen w2
    let w2 = ScalarField::from_fn(&g, |x1, _, x3| 1e-3 * (1.0 + 0.5 * x1.sin()) * (1.0 + x3 * x3));
    // chi_1 solves -Lap chi + chi = D1 where D1 = (cv q/(R theta)) w2 at equilibrium
    let d1 = w2.scale(params.c_v * params.p_bar / (params.r_gas * theta0));
    let one = ScalarField::constant(&g, 1.0);
    let zb = SurfaceField::zeros(&g, Side::Bottom);
    let zt = SurfaceField::zeros(&g, Side::Top);
    let chi1 = solve(&Problem::neumann_helmholtz(None, None, Some(&one), &d1, [&zb, &zt]), 1e-12).unwrap();
    let xi1 = chi1.lin_comb(1.0, &laplacian(&chi1), -1.0);
    // tau defect of the chi solve
    let defect = xi1.lin_comb(1.0, &d1, -1.0);
    println!("interior defect sup (should be ~0 in interior): full {:.3e}", defect.sup_norm());
    println!("defect at bottom row: {:.3e}, top row: {:.3e}",
        defect.trace(Side::Bottom).sup_norm(), defect.trace(Side::Top).sup_norm());
    // build jets with Xi = (0, xi1): theta2 should equal (R theta/(cv q)) * Xi1-chain -> w2
    let data = InitialData::equilibrium(&g, &params, theta0);
    let xi_jets = vec![ScalarField::zeros(&g), xi1];
    let jets = build_time_jets(&data, &params, 2, JetVariant::KappaDelta { kappa: 0.0, kind: MultiplierKind::Gaussian }, &xi_jets).unwrap();
    let th2_dev = jets.theta[2].lin_comb(1.0, &w2, -1.0);
    println!("theta2 - w2: sup {:.3e} (interior target ~0)", th2_dev.sup_norm());
    println!("theta2 - w2 at bottom row: {:.3e}", th2_dev.trace(Side::Bottom).sup_norm());
    // flux jet at order 2 vs n grad w2 at the plane
    let thj = FieldJet { coeffs: jets.theta.clone() };
    let fb = eflab_core::jets::arith::jet_flux_trace(&jets.a_jets, &thj, &g, Side::Bottom);
    println!("flux-jet order2 bottom sup: {:.3e}", fb[2].sup_norm());
    // compare with s * d3 w2 at the plane (identity geometry): flux = -d3 w2 (bottom)
    let d3w2 = w2.diff(3).trace(Side::Bottom).map(|v| -v);
    let diff = fb[2].lin_comb(1.0, &d3w2, -1.0);
    println!("flux-jet vs -d3 w2 bottom: {:.3e} (raw flux {:.3e})", diff.sup_norm(), d3w2.sup_norm());
}
