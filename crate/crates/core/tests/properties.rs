use epb_abs::actuator::ActuatorParams;
use epb_abs::control::{branch_weight, LowerGains, LowerSmc, UpperGains, UpperInputs, UpperSmc};
use epb_abs::estimator::optimal_slip;
use epb_abs::observer::saturation;
use epb_abs::tyre::{build_lookup, LookupGrids, TyreModel, TyreParams};
use epb_abs::vehicle::{axle_loads, slip_ratio, VehicleParams};
use proptest::prelude::*;

proptest! {
    #[test]
    fn force_scales_linearly_with_friction(slip in 0.0..1.0f64, fz in 1000.0..8000.0f64, mu in 0.05..1.2f64) {
        let p = TyreParams::<f64>::default();
        let unit = p.force(slip, fz, 1.0);
        prop_assert!((p.force(slip, fz, mu) - mu * unit).abs() <= 1e-9 * unit.abs().max(1.0));
    }

    #[test]
    fn force_is_non_negative_and_rises_before_the_peak(a in 0.0..0.05f64, d in 0.0..0.03f64, fz in 2000.0..6000.0f64) {
        let p = TyreParams::<f64>::default();
        let lo = p.force(a, fz, 1.0);
        let hi = p.force(a + d, fz, 1.0);
        prop_assert!(lo >= 0.0);
        prop_assert!(hi >= lo - 1e-9);
    }

    #[test]
    fn saturation_is_bounded_and_odd(s in -1e3..1e3f64, phi in 1e-3..10.0f64) {
        let y = saturation(s, phi);
        prop_assert!((-1.0..=1.0).contains(&y));
        prop_assert_eq!(saturation(-s, phi), -y);
        if s.abs() <= phi {
            prop_assert!((y - s / phi).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_weight_stays_in_unit_interval(omega in -1e4..1e4f64, request in -10.0..10.0f64) {
        prop_assert!((-1.0..=1.0).contains(&branch_weight(omega, request)));
    }

    #[test]
    fn axle_loads_conserve_weight(accel in -12.0..12.0f64) {
        let p = VehicleParams::<f64>::default();
        let l = axle_loads(&p, accel);
        prop_assert!(l.front >= 0.0 && l.rear >= 0.0);
        prop_assert!((2.0 * (l.front + l.rear) - p.mass_kg * p.gravity_mps2).abs() < 1e-9);
    }

    #[test]
    fn slip_stays_in_unit_interval(v in -5.0..60.0f64, omega in -50.0..300.0f64) {
        let p = VehicleParams::<f64>::default();
        prop_assert!((0.0..=1.0).contains(&slip_ratio(v, omega, p.radius(2))));
    }

    #[test]
    fn optimal_slip_is_monotone_in_friction(a in 0.05..1.2f64, b in 0.05..1.2f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(optimal_slip(lo) <= optimal_slip(hi));
    }

    #[test]
    fn lower_duty_stays_in_range(
        steps in prop::collection::vec((-2000.0..2000.0f64, 0.0..3000.0f64, -500.0..500.0f64), 1..60)
    ) {
        let mut ctl = LowerSmc::new(LowerGains::<f64>::default(), &ActuatorParams::default()).unwrap();
        for (t_hat, t_des, omega) in steps {
            let out = ctl.step(t_hat, t_des, omega, 1e-3);
            prop_assert!(out.duty.is_finite() && (-1.0..=1.0).contains(&out.duty));
        }
    }

    #[test]
    fn upper_torque_stays_within_limits(
        steps in prop::collection::vec((0.0..1.0f64, 1.0..40.0f64), 1..60)
    ) {
        let gains = UpperGains::<f64>::default();
        let t_max = gains.t_max_nm;
        let mut ctl = UpperSmc::new(gains).unwrap();
        for (slip, v) in steps {
            let inp = UpperInputs {
                slip,
                slip_target: 0.17,
                slip_target_rate: 0.0,
                v_x: v,
                f_xr: 3000.0,
                f_total: 9000.0,
                wheel_inertia: 1.2,
                wheel_radius: 0.327,
                mass: 1500.0,
            };
            let out = ctl.step(&inp, 1e-3, false);
            prop_assert!(out.torque.is_finite() && (0.0..=t_max).contains(&out.torque));
        }
    }
}

#[test]
fn lookup_tracks_the_analytic_curve_on_grid_nodes() {
    let p = TyreParams::<f64>::default();
    let curve = build_lookup(&p, LookupGrids::default()).unwrap();
    for &fz_kn in curve.load_grid_kn() {
        for &s in curve.slip_grid_pct() {
            let exact = p.force(s / 100.0, fz_kn * 1000.0, 1.0);
            let table = curve.force(s / 100.0, fz_kn * 1000.0, 1.0);
            assert!((exact - table).abs() <= 1e-6 * exact.abs().max(1.0), "{fz_kn} kN, {s}%");
        }
    }
}
