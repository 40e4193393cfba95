use cbf_inspect::constraints::{
    almost_active_set, attitude_cbf, boolean_compose, position_cbf, ConeConstraint, ConeLabel, EllipsoidObstacle,
    EnvSource, TieBreak,
};
use cbf_inspect::filter::{evaluate_obstacles, nominal_angular_velocity, safe_velocity, FilterParams};
use cbf_inspect::observer::ObserverState;
use cbf_inspect::orbit::EnvironmentVectors;
use cbf_inspect::qp::{solve, QpProblem, FEAS_TOL};
use cbf_inspect::{Mat3, Vec3, Vec6};
use nalgebra::Rotation3;
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(Vec3::from)
}

fn unit3() -> impl Strategy<Value = Vec3> {
    vec3(1.0).prop_filter("not too short", |v| v.norm() > 0.1).prop_map(|v| v.normalize())
}

fn axes() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(0.3..5.0).prop_map(Vec3::from)
}

fn rotation() -> impl Strategy<Value = Mat3> {
    vec3(3.0).prop_map(|v| Rotation3::new(v).into_inner())
}

fn h5() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(-1.0..1.0)
}

fn qp_problem() -> impl Strategy<Value = QpProblem> {
    (
        vec3(2.0),
        vec3(0.5),
        prop::array::uniform3(0.05..1.0),
        prop::collection::vec((unit3(), 0.2..3.0, -0.6..0.6), 0..5),
    )
        .prop_map(|(target, centre, half, rows)| {
            let half = Vec3::from(half);
            rows.into_iter().fold(QpProblem::boxed(target, centre - half, centre + half), |p, (n, s, b)| {
                p.with_row(n * s, b)
            })
        })
}

proptest! {
    #[test]
    fn ellipsoid_sign_matches_membership(c in vec3(5.0), l in axes(), r in vec3(10.0)) {
        let obs = EllipsoidObstacle::new("o", c, l).unwrap();
        let b = position_cbf(&r, &obs);
        let inside = (r - c).component_div(&l).norm() < 1.0;
        prop_assert_eq!(b.h < 0.0, inside);
    }

    #[test]
    fn position_gradient_matches_difference(c in vec3(5.0), l in axes(), r in vec3(10.0), dir in unit3()) {
        let obs = EllipsoidObstacle::new("o", c, l).unwrap();
        let g = position_cbf(&r, &obs).grad;
        let s = 1e-5;
        let fd = (position_cbf(&(r + dir * s), &obs).h - position_cbf(&(r - dir * s), &obs).h) / (2.0 * s);
        prop_assert!((fd - g.dot(&dir)).abs() <= 1e-6 * (1.0 + g.norm()));
    }

    #[test]
    fn attitude_gradient_matches_difference(
        rot in rotation(), axis in unit3(), sun in unit3(), dir in unit3(), half in 5.0f64..60.0,
    ) {
        let cone = ConeConstraint::new(ConeLabel::A5, axis, EnvSource::Sun, half.to_radians()).unwrap();
        let env = EnvironmentVectors { sun_dir_inertial: sun, earth_dir_inertial: -sun };
        let g = attitude_cbf(&rot, &cone, &env).grad;
        let s = 1e-5;
        let plus = rot * Rotation3::new(dir * s).into_inner();
        let minus = rot * Rotation3::new(dir * -s).into_inner();
        let fd = (attitude_cbf(&plus, &cone, &env).h - attitude_cbf(&minus, &cone, &env).h) / (2.0 * s);
        prop_assert!((fd - g.dot(&dir)).abs() <= 1e-8);
    }

    #[test]
    fn composition_is_monotone(h in h5(), i in 0usize..5, bump in 0.0f64..1.0) {
        let mut up = h;
        up[i] += bump;
        prop_assert!(boolean_compose(&up) >= boolean_compose(&h));
    }

    #[test]
    fn active_set_is_nonempty_and_near_the_minimum(h in h5(), eps in 0.0f64..0.2, second in any::<bool>()) {
        let tie = if second { TieBreak::SecondPair } else { TieBreak::FirstPair };
        let a = almost_active_set(&h, eps, tie);
        prop_assert!(!a.is_empty());
        prop_assert_eq!(a.h_min, boolean_compose(&h));
        // Every group pushed by the filter sits within eps of the composed value.
        let groups = [
            (ConeLabel::A1, h[0].min(h[1])),
            (ConeLabel::A3, h[2].min(h[3])),
            (ConeLabel::A5, h[4]),
        ];
        for (label, value) in groups {
            if a.contains(label) {
                prop_assert!(value >= a.h_min && value <= a.h_min + eps + 1e-15);
            }
        }
        prop_assert_eq!(a.contains(ConeLabel::A1), a.contains(ConeLabel::A2));
        prop_assert_eq!(a.contains(ConeLabel::A3), a.contains(ConeLabel::A4));
        prop_assert!(!(a.contains(ConeLabel::A1) && a.contains(ConeLabel::A3)));
    }

    #[test]
    fn qp_respects_box_and_rows(p in qp_problem()) {
        let s = solve(&p).unwrap();
        if s.is_optimal() {
            for i in 0..3 {
                prop_assert!(s.x[i] >= p.lower[i] && s.x[i] <= p.upper[i]);
            }
            for r in &p.rows {
                prop_assert!(r.normal.dot(&s.x) - r.offset >= -FEAS_TOL * r.normal.norm());
            }
        }
    }

    #[test]
    fn qp_is_idempotent_and_deterministic(p in qp_problem()) {
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        prop_assert_eq!(&a, &b);
        if a.is_optimal() {
            let again = solve(&QpProblem { target: a.x, ..p.clone() }).unwrap();
            prop_assert!((again.x - a.x).amax() <= 1e-9);
        }
    }

    #[test]
    fn qp_multipliers_are_stationary_without_box(
        target in vec3(2.0),
        rows in prop::collection::vec((unit3(), 0.2..3.0, -1.0..1.0), 1..4),
    ) {
        // With a box that never binds, x − t is a nonnegative combination of
        // the active rows and inactive rows carry no weight.
        let p = rows.into_iter().fold(
            QpProblem::boxed(target, Vec3::repeat(-1e3), Vec3::repeat(1e3)),
            |p, (n, s, b)| p.with_row(n * s, b),
        );
        let s = solve(&p).unwrap();
        prop_assume!(s.is_optimal());
        let mut combo = Vec3::zeros();
        for (r, lam) in p.rows.iter().zip(&s.row_multipliers) {
            prop_assert!(*lam >= 0.0);
            if *lam > 1e-9 {
                prop_assert!((r.normal.dot(&s.x) - r.offset).abs() <= 1e-7 * r.normal.norm());
            }
            combo += r.normal * *lam;
        }
        prop_assert!((s.x - target - combo).amax() <= 1e-7);
    }

    #[test]
    fn larger_margin_pushes_further_out(
        c in vec3(2.0), l in axes(), dir in unit3(), dist in 1.05f64..3.0, v_c in vec3(0.2),
        g1 in 0.0f64..0.05, g2 in 0.0f64..0.05,
    ) {
        let obs = EllipsoidObstacle::new("o", c, l).unwrap();
        let r = c + dir.component_mul(&l) * dist;
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let at = |gamma_p: f64| {
            let params = FilterParams { gamma_p, ..FilterParams::default() };
            let b = evaluate_obstacles(&r, std::slice::from_ref(&obs), &params);
            let out = safe_velocity(&v_c, &b, &params).unwrap();
            (b[0].value.grad.dot(&out.value), out.degraded)
        };
        let (y_lo, deg_lo) = at(lo);
        let (y_hi, deg_hi) = at(hi);
        prop_assume!(!deg_lo && !deg_hi);
        prop_assert!(y_hi >= y_lo - 1e-9);
    }

    #[test]
    fn nominal_rate_is_bounded_by_gain(rot in rotation(), gamma in unit3(), axis in unit3(), k in 0.0f64..2.0) {
        let w = nominal_angular_velocity(&rot, &gamma, &axis, k);
        prop_assert!(w.norm() <= k * (1.0 + 1e-12));
    }

    #[test]
    fn observer_error_decays_for_constant_disturbance(
        d in prop::array::uniform6(-0.01f64..0.01),
        m in prop::array::uniform6(-0.01f64..0.01),
    ) {
        let d = Vec6::from_column_slice(&d);
        let m = Vec6::from_column_slice(&m);
        let n_u = Vec6::zeros();
        let dt = 0.1;
        let mut x = Vec6::zeros();
        let mut obs = ObserverState::diagonal([0.1, 0.1, 0.1, 0.2, 0.2, 0.2], &x).unwrap();
        let mut last = (d - obs.d_hat).norm();
        for _ in 0..1000 {
            // ẋ = M + d with both constant, so x is exactly linear over a step.
            let next = x + (m + d) * dt;
            obs.step(&x, &next, &m, &m, &n_u, dt).unwrap();
            x = next;
            let e = (d - obs.d_hat).norm();
            prop_assert!(e <= last + 1e-15);
            last = e;
        }
        prop_assert!(last <= 1e-3 * d.norm() + 1e-15);
    }
}
