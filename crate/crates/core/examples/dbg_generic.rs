use eflab_core::geometry::FlowMap;
use eflab_core::grid::*;
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
    match construct_smoothed_data(&raw, &params, 0.2, 2, MultiplierKind::Gaussian) {
        Ok(b) => {
            for a in &b.audit { println!("{a:?}"); }
        }
        Err(e) => println!("FAILED: {e}"),
    }
}
