use eflab_core::elliptic::*;
use eflab_core::geometry::*;
use eflab_core::grid::*;
use eflab_core::jets::arith::FieldJet;
use eflab_core::jets::*;
use eflab_core::smoothing::MultiplierKind;

fn residuals(
    data: &InitialData, params: &PhysicalParams, chi0: &ScalarField, m: usize,
) -> ([SurfaceField; 2], [SurfaceField; 2]) {
    let g = data.grid().clone();
    let lap = |f: &ScalarField| {
        let mut l = f.diff(1).diff(1);
        l.add_assign_scaled(&f.diff(2).diff(2), 1.0);
        l.add_assign_scaled(&f.diff(3).diff(3), 1.0);
        l
    };
    let xi = vec![chi0.lin_comb(1.0, &lap(chi0), -1.0)];
    let jets = build_time_jets(data, params, m, JetVariant::KappaDelta { kappa: 0.0, kind: MultiplierKind::Gaussian }, &xi).unwrap();
    let th = FieldJet { coeffs: jets.theta.clone() };
    let fb = eflab_core::jets::arith::jet_flux_trace(&jets.a_jets, &th, &g, Side::Bottom)[m].clone();
    let ft = eflab_core::jets::arith::jet_flux_trace(&jets.a_jets, &th, &g, Side::Top)[m].clone();
    let rqb = jets.q[m].trace(Side::Bottom);
    let rqt = jets.q[m].trace(Side::Top);
    ([rqb, rqt], [fb, ft])
}

fn main() {
    let g = Grid::new(8, 8, 13, VerticalScheme::ChebyshevCollocation).unwrap();
    let params = PhysicalParams::default();
    let data = InitialData {
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
    let chi0 = ScalarField::zeros(&g);
    let m = 1;
    let (rq0, rf0) = residuals(&data, &params, &chi0, m);

    let eps = 1e-4;
    // v.n bump at mode (3,0), bottom plane, trace order 1
    let prof: Vec<f64> = {
        // cubic with B(0)=0, B'(0)=1, B(1)=0, B'(1)=0
        g.x3().iter().map(|&x| x * (1.0 - x) * (1.0 - x)).collect()
    };
    for (name, kmode) in [("k0", 0.0_f64), ("k3", 3.0)] {
        let phi = SurfaceField::from_fn(&g, Side::Bottom, |x1, _| if kmode == 0.0 { 1.0 } else { (kmode * x1).cos() });
        let mut vp = data.v.clone();
        // bottom normal is -e3
        for i1 in 0..g.n1() {
            for i2 in 0..g.n2() {
                for (l, b) in prof.iter().enumerate() {
                    vp.components[2].values_mut()[[i1, i2, l]] += -eps * phi.values()[[i1, i2]] * b;
                }
            }
        }
        let d2 = InitialData { eta: data.eta.clone(), q: data.q.clone(), v: vp, theta: data.theta.clone() };
        let (rq1, rf1) = residuals(&d2, &params, &chi0, m);
        let dq = rq1[0].lin_comb(1.0 / eps, &rq0[0], -1.0 / eps);
        let df = rf1[0].lin_comb(1.0 / eps, &rf0[0], -1.0 / eps);
        // project response onto the probe shape
        let proj_q = dq.inner(&phi) / phi.inner(&phi);
        let proj_f = df.inner(&phi) / phi.inner(&phi);
        println!("{name}: v-probe response: dq proj {proj_q:.4e} (sup {:.3e}), df proj {proj_f:.4e} (sup {:.3e})", dq.sup_norm(), df.sup_norm());
    }
}
