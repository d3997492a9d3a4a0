//! Growth of the background field and the scattered volume solution along
//! the cube lattice sweep.

use ecl_core::foldy_lax::background_field;
use ecl_core::geometry::{a_for_cube_lattice, build_cluster, inclusion_quadrature, Domain, ShapeB};
use ecl_core::kernels::ElasticBackground;
use ecl_core::nd_maps::{fit_line, inclusion_union_rule, solve_vg, DensityKind};
use ecl_core::operators::{newton_spectrum, GreenMode, NeumannGreen};
use ecl_core::resonance::tune_frequency;

#[test]
fn u_and_v_norms_follow_the_predicted_powers_of_a() {
    let bg = ElasticBackground::unit();
    let h = 0.5;
    let vol = Domain::Cube.volume_rule(4).unwrap();
    let bd = Domain::Cube.boundary_rule(4).unwrap();
    let g = NeumannGreen::new(&vol, &bd, &bg, |_| 1.0, 0.0, GreenMode::FreeSpace).unwrap();
    let reference = inclusion_quadrature(ShapeB::Ball, 3).unwrap();
    let spec = newton_spectrum(&reference, &bg, 4).unwrap();
    let f = DensityKind::Normal.sample(Domain::Cube, &bd).unwrap();
    let (mut la, mut lu, mut lv) = (vec![], vec![], vec![]);
    for k in 2..=5 {
        let a = a_for_cube_lattice(k, h);
        let cl = build_cluster(Domain::Cube, h, a, ShapeB::Ball).unwrap();
        let setting = tune_frequency(&spec, 1, -1.0, a, h, 1.0).unwrap();
        let rule = inclusion_union_rule(&cl, &reference);
        let u = background_field(&f, &bd, &g, &rule).unwrap();
        let v = solve_vg(&cl, &reference, &setting, |_| 1.0, &f, &g).unwrap();
        la.push(a.ln());
        lu.push(u.l2_norm().ln());
        lv.push(v.l2_norm().ln());
    }
    let (su, _) = fit_line(&la, &lu).unwrap();
    let (sv, _) = fit_line(&la, &lv).unwrap();
    assert!((su - (2.0 + 7.0 * h) / 6.0).abs() < 0.3, "u slope {su}");
    assert!((sv - (5.0 - 2.0 * h) / 6.0).abs() < 0.25, "v slope {sv}");
}
