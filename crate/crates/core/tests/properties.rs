use proptest::prelude::*;

use pwsbif_core::curve::{BifurcationCurve, CurveKind, CurveSample};
use pwsbif_core::dmaps::{self, SimpleMapModel};
use pwsbif_core::equilibria;
use pwsbif_core::fixtures;
use pwsbif_core::normalform::compute_invariants;
use pwsbif_core::orbits::{self, OrbitOptions};
use pwsbif_core::scaling::{self, ReportOptions, ScalingError};

proptest! {
    #[test]
    fn power_law_fit_ignores_abscissa_units(c in 0.1f64..10.0, p in 0.5f64..7.0, k in 1e-3f64..1e3) {
        let s: Vec<(f64, f64)> = scaling::log_space(0.01, 0.5, 9).into_iter().map(|x| (x, c * x.powf(p) * (1.0 + 0.1 * x))).collect();
        let base = scaling::fit_power_law(&s, 1.0).unwrap();
        let scaled: Vec<(f64, f64)> = s.iter().map(|&(x, y)| (k * x, y)).collect();
        let fit = scaling::fit_power_law(&scaled, 1.0).unwrap();
        prop_assert!((fit.exponent - base.exponent).abs() < 1e-9);
        prop_assert!((fit.coefficient / (base.coefficient * k.powf(-base.exponent)) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn simple_map_fixed_points_appear_at_the_fold(d in 0.01f64..0.5, gamma in 0.2f64..5.0) {
        // Ξ < 1, γ > 0: fixed points exist for η₂ below the fold value.
        let xi = 1.0 - d;
        let fold = dmaps::simplemap_fold(&SimpleMapModel { xi, gamma, eta2: 0.0 }).unwrap();
        let eps_star = (2.0 * d / (3.0 * gamma)).powi(2);
        let model = SimpleMapModel { xi, gamma, eta2: fold };
        prop_assert!((model.eval(eps_star) - eps_star).abs() <= 1e-12 * fold.abs().max(eps_star));
        let below = SimpleMapModel { xi, gamma, eta2: 0.9 * fold };
        prop_assert!(below.eval(eps_star) < eps_star);
    }
}

#[test]
fn theorem_report_on_the_example() {
    let nf = fixtures::example_nf();
    let inv = compute_invariants(&nf).unwrap();
    let opts = OrbitOptions::precise();
    let h1 = equilibria::trace_h1(&nf, &scaling::log_space(1e-3, 0.1, 30)).unwrap();
    let h2 = orbits::trace_h2(&nf, &inv, &scaling::log_space(3e-3, 3e-2, 10), &opts).unwrap();
    let h3 = orbits::trace_h3(&nf, &inv, &scaling::log_space(0.015, 0.06, 7), &opts).unwrap();
    let mut ro = ReportOptions::default();
    ro.saddle_node.window = None;
    let report = scaling::theorem_report(&inv, &[h1.clone(), h2.clone(), h3], &ro).unwrap();
    assert_eq!(report.rows.len(), 3);
    let hopf = report.row(CurveKind::Hopf).unwrap();
    assert!((hopf.predicted_coefficient - 20.0 / 33.0).abs() < 1e-6);
    assert!(hopf.pass, "{}", report.render());
    let exps: Vec<f64> = report.rows.iter().map(|r| r.fit.as_ref().unwrap().exponent).collect();
    assert!((exps[0] - 1.0).abs() < 0.1 && (exps[1] - 2.0).abs() < 0.05 && (exps[2] - 6.0).abs() < 0.3, "{exps:?}");
    let sn = report.row(CurveKind::SaddleNode).unwrap();
    assert!((sn.predicted_coefficient + 965.6).abs() < 0.1);
    assert!(report.render().contains("saddle-node"));

    assert_eq!(scaling::theorem_report(&inv, &[h2], &ro), Err(ScalingError::MissingCurve(CurveKind::Hopf)));
    assert_eq!(scaling::theorem_report(&inv, &[h1.clone()], &ro), Err(ScalingError::MissingCurve(CurveKind::Grazing)));
    let empty = BifurcationCurve::new(CurveKind::Grazing, Vec::<CurveSample>::new());
    assert_eq!(
        scaling::theorem_report(&inv, &[h1, empty], &ro),
        Err(ScalingError::MissingCurve(CurveKind::SaddleNode))
    );
}
