use eflab_core::geometry::FlowMap;
use eflab_core::grid::*;
use eflab_core::jets::*;
use eflab_core::smoothing::MultiplierKind;

fn main() {
    let g = Grid::new(8, 8, 9, VerticalScheme::ChebyshevCollocation).unwrap();
    let params = PhysicalParams::default();
    let data = InitialData::equilibrium(&g, &params, 2.0);
    for (name, variant) in [
        ("baseline", JetVariant::Baseline),
        ("kd02", JetVariant::KappaDelta { kappa: 0.2, kind: MultiplierKind::Gaussian }),
        ("mach", JetVariant::Mach { lambda: 0.3 }),
    ] {
        let jets = build_time_jets(&data, &params, 2, variant, &[]).unwrap();
        let rep = compatibility_residual(&jets, &params);
        println!("{name}: q_res {:?}", rep.q_residual);
        println!("{name}: f_res {:?}", rep.flux_residual);
        for j in 0..=2 {
            println!("  jets sup: q {:.2e} v {:.2e} th {:.2e} eta {:.2e}", jets.q[j].sup_norm(), jets.v[j].sup_norm(), jets.theta[j].sup_norm(), jets.eta[j].sup_norm());
        }
    }
    // delta construction on equilibrium
    let bundle = construct_smoothed_data(&data, &params, 0.2, 2, MultiplierKind::Gaussian).unwrap();
    println!("bundle q dev {:.2e} v {:.2e} th dev {:.2e}", bundle.data.q.map(|v| v - params.p_bar).sup_norm(), bundle.data.v.sup_norm(), bundle.data.theta.map(|v| v-2.0).sup_norm());
    for (j, c) in bundle.chi.iter().enumerate() { println!("chi[{j}] {:.2e}  w[{}] {:.2e}", c.sup_norm(), j+1, bundle.w[j+1].sup_norm()); }
    for a in &bundle.audit { println!("audit {:?}", a); }
}
