use eflab_core::geometry::FlowMap;
use eflab_core::grid::*;
use eflab_core::jets::arith::*;
use eflab_core::jets::*;
use eflab_core::smoothing::MultiplierKind;

fn main() {
    let g = Grid::new(8, 8, 13, VerticalScheme::ChebyshevCollocation).unwrap();
    let params = PhysicalParams::default();
    let raw = InitialData {
        eta: FlowMap::identity(&g),
        q: ScalarField::from_fn(&g, |x1, _, x3| 1.0 + 0.05 * x1.sin() * x3 * (1.0 - x3)),
        v: VectorField::from_fns(
            &g,
            |_, x2, x3| 0.03 * x2.cos() * x3,
            |x1, _, _| 0.02 * x1.sin(),
            |x1, _, x3| 0.04 * x1.cos() * x3 * (1.0 - x3),
        ),
        theta: ScalarField::from_fn(&g, |_, x2, x3| 2.0 + 0.05 * x2.sin() * (1.0 + x3)),
    };
    // order-1 bundle (succeeds), then inspect order-2 residual pieces on it
    let b = construct_smoothed_data(&raw, &params, 0.2, 1, MultiplierKind::Gaussian).unwrap();
    println!("order-1 audit: {:?}", b.audit);
    println!("w1 sup {:.3e} chi0 sup {:.3e}", b.w[1].sup_norm(), b.chi[0].sup_norm());
    // build jets to order 2 with xi from bundle (chi1 absent -> zero)
    let jets = build_time_jets(&b.data, &params, 2, JetVariant::KappaDelta { kappa: 0.0, kind: MultiplierKind::Gaussian }, &b.xi_jets).unwrap();
    println!("theta jets sup: {:.3e} {:.3e} {:.3e}", jets.theta[0].sup_norm(), jets.theta[1].sup_norm(), jets.theta[2].sup_norm());
    println!("q jets sup: {:.3e} {:.3e} {:.3e}", jets.q[0].sup_norm(), jets.q[1].sup_norm(), jets.q[2].sup_norm());
    println!("v jets sup: {:.3e} {:.3e} {:.3e}", jets.v[0].sup_norm(), jets.v[1].sup_norm(), jets.v[2].sup_norm());
    for t in 0..=2 {
        let mut amax: f64 = 0.0;
        for i in 0..3 { for j in 0..3 { amax = amax.max(jets.a_jets.coeffs[t].entry(i,j).sup_norm()); } }
        println!("A-jet[{t}] sup {:.3e}", amax);
    }
    let th = FieldJet { coeffs: jets.theta.clone() };
    let fb = jet_flux_trace(&jets.a_jets, &th, &g, Side::Bottom);
    println!("flux jets bottom sup: {:.3e} {:.3e} {:.3e}", fb[0].sup_norm(), fb[1].sup_norm(), fb[2].sup_norm());
}
