use adtplan_core::design::avar;
use adtplan_core::failure_time::{component_cdfs, quantile_at, system_cdf};
use adtplan_core::gamma_model::{design_info, intensity};
use adtplan_core::lmem_model::{covariance_v, lmem_design_info};
use adtplan_core::optimizer::elfving_weight;
use adtplan_core::specfun::{inv_reg_gamma_q_shape, reg_gamma_q, trigamma};
use adtplan_core::{Components, Design, GammaComponentParams, LmemComponentParams, MeasurementSchedule, Scenario};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn gamma_params() -> impl Strategy<Value = GammaComponentParams> {
    (-1.0..1.0f64, 0.05..1.5f64, 0.5..2.0f64, 2.0..8.0f64)
        .prop_map(|(b0, b1, nu, z0)| GammaComponentParams::new(b0, b1, nu, z0).unwrap())
}

fn lmem_params() -> impl Strategy<Value = LmemComponentParams> {
    (1.5..3.0f64, 0.0..0.2f64, 0.15..0.4f64, 0.0..0.08f64, 0.03..0.15f64, 0.03..0.15f64).prop_map(
        |(b20, b21, b22, b23, s0, se)| LmemComponentParams {
            beta20: b20,
            beta21: b21,
            beta22: b22,
            beta23: b23,
            sigma0_sq: s0 * s0,
            sigma_eps_sq: se * se,
            y20: 3.73,
        },
    )
}

fn schedule() -> impl Strategy<Value = MeasurementSchedule> {
    prop::collection::vec(0.05..1.0f64, 1..6).prop_map(|gaps| {
        let mut t = 0.0;
        MeasurementSchedule::new(
            gaps.iter()
                .map(|g| {
                    t += g;
                    t
                })
                .collect(),
        )
        .unwrap()
    })
}

/// Designs on distinct grid points of [0, 1].
fn design() -> impl Strategy<Value = Design> {
    prop::collection::btree_map(0..=20u32, 0.05..1.0f64, 2..6).prop_map(|m| {
        let pairs: Vec<(f64, f64)> = m.into_iter().map(|(i, w)| (i as f64 / 20.0, w)).collect();
        Design::from_masses(&pairs).unwrap()
    })
}

fn scenario() -> impl Strategy<Value = Scenario> {
    let comps = prop_oneof![
        gamma_params().prop_map(Components::Gamma),
        (gamma_params(), gamma_params()).prop_map(|(a, b)| Components::GammaGamma(a, b)),
        (gamma_params(), lmem_params()).prop_map(|(a, b)| Components::GammaLmem(a, b)),
    ];
    (comps, -2.0..-0.1f64).prop_map(|(c, x_u)| {
        Scenario::new(c, MeasurementSchedule::new(vec![0.25, 0.5, 0.75, 1.0]).unwrap(), x_u, 0.5).unwrap()
    })
}

fn nominal() -> Scenario {
    Scenario::new(
        Components::Gamma(GammaComponentParams::new(0.23, 0.53, 1.0, 5.16).unwrap()),
        MeasurementSchedule::new(vec![0.25, 0.5, 0.75, 1.0]).unwrap(),
        -0.4,
        0.5,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trigamma_recurrence(x in 0.05..50.0f64) {
        let lhs = trigamma(x).unwrap();
        let rhs = trigamma(x + 1.0).unwrap() + 1.0 / (x * x);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1.0));
    }

    #[test]
    fn upper_gamma_is_a_monotone_probability(s in 0.1..25.0f64, z in 0.1..25.0f64, ds in 0.01..2.0f64, dz in 0.01..2.0f64) {
        let q = reg_gamma_q(s, z).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert!(reg_gamma_q(s + ds, z).unwrap() >= q);
        prop_assert!(reg_gamma_q(s, z + dz).unwrap() <= q);
    }

    #[test]
    fn shape_inverse_undoes_upper_gamma(s in 0.2..20.0f64, z in 0.5..20.0f64) {
        let q = reg_gamma_q(s, z).unwrap();
        prop_assume!(q > 1e-6 && q < 1.0 - 1e-6);
        let back = inv_reg_gamma_q_shape(q, z).unwrap();
        prop_assert!((back - s).abs() <= 1e-8 * s.max(1.0), "s = {s}, back = {back}");
    }

    #[test]
    fn gamma_design_info_is_psd(p in gamma_params(), sch in schedule(), d in design()) {
        let m = design_info(&p, &d, &sch).unwrap();
        prop_assert_eq!(m, m.transpose());
        let eig = SymmetricEigen::new(m).eigenvalues;
        prop_assert!(eig.iter().all(|&e| e >= -1e-12 * m.norm()));
    }

    #[test]
    fn intensity_increases(sch in schedule(), z in -5.0..4.9f64, dz in 0.01..0.1f64) {
        prop_assert!(intensity(z + dz, &sch).unwrap() > intensity(z, &sch).unwrap());
    }

    #[test]
    fn covariance_smallest_eigenvalue_is_error_variance(l in lmem_params(), k in 1usize..8) {
        let v = covariance_v(&l, k);
        let eig = v.symmetric_eigen().eigenvalues;
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!((min - l.sigma_eps_sq).abs() <= 1e-12);
    }

    #[test]
    fn lmem_information_matches_direct_assembly(l in lmem_params(), sch in schedule(), d in design()) {
        let k = sch.k();
        let v_inv = covariance_v(&l, k).try_inverse().unwrap();
        let mut brute = DMatrix::<f64>::zeros(4, 4);
        for (x, w) in d.iter() {
            let mut rows = DMatrix::<f64>::zeros(k + 1, 4);
            for (j, t) in std::iter::once(0.0).chain(sch.times().iter().cloned()).enumerate() {
                rows[(j, 0)] = 1.0;
                rows[(j, 1)] = x;
                rows[(j, 2)] = t;
                rows[(j, 3)] = t * x;
            }
            brute += w * rows.transpose() * &v_inv * rows;
        }
        let m = lmem_design_info(&l, &d, &sch);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((m[(i, j)] - brute[(i, j)]).abs() <= 1e-12 * brute.norm().max(1.0));
            }
        }
    }

    #[test]
    fn quantile_inverts_system_cdf(s in scenario(), alpha in prop::sample::select(vec![0.1, 0.5, 0.9])) {
        let t = quantile_at(&s, alpha).unwrap();
        prop_assert!((system_cdf(&s, t).unwrap() - alpha).abs() <= 1e-8);
    }

    #[test]
    fn series_system_dominates_components(s in scenario(), t in 0.01..20.0f64) {
        let f = system_cdf(&s, t).unwrap();
        for c in component_cdfs(&s, t).unwrap() {
            prop_assert!(f >= c - 1e-15);
        }
    }

    #[test]
    fn avar_ignores_point_order(s in scenario(), d in design(), rot in 0usize..6) {
        let n = d.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.rotate_left(rot % n);
        idx.reverse();
        let shuffled = Design::new(
            idx.iter().map(|&i| d.points()[i]).collect(),
            idx.iter().map(|&i| d.weights()[i]).collect(),
        );
        prop_assume!(shuffled.is_ok());
        let a = avar(&s, &d).unwrap();
        let b = avar(&s, &shuffled.unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn avar_is_convex_along_weight_paths(s in scenario(), w1 in prop::collection::vec(0.05..1.0f64, 3), w2 in prop::collection::vec(0.05..1.0f64, 3)) {
        let pts = [0.0, 0.5, 1.0];
        let mix = |a: f64| {
            let pairs: Vec<(f64, f64)> = (0..3).map(|i| (pts[i], (1.0 - a) * w1[i] / w1.iter().sum::<f64>() + a * w2[i] / w2.iter().sum::<f64>())).collect();
            avar(&s, &Design::from_masses(&pairs).unwrap()).unwrap()
        };
        let values: Vec<f64> = (0..=12).map(|i| mix(i as f64 / 12.0)).collect();
        for i in 1..12 {
            let chord = 0.5 * (values[i - 1] + values[i + 1]);
            prop_assert!(values[i] <= chord * (1.0 + 1e-10), "{i}: {} > {chord}", values[i]);
        }
    }

    #[test]
    fn merging_duplicates_keeps_avar(s in scenario(), d in design(), split in 0.1..0.9f64) {
        let mut pairs: Vec<(f64, f64)> = d.iter().collect();
        let (x, w) = pairs[0];
        pairs[0] = (x, w * split);
        pairs.push((x, w * (1.0 - split)));
        let merged = Design::from_masses(&pairs).unwrap();
        let a = avar(&s, &d).unwrap();
        prop_assert!((avar(&s, &merged).unwrap() - a).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn closed_form_weight_properties(p in gamma_params(), x_u in -5.0..-0.05f64, dx in 0.01..1.0f64, db in 0.01..0.5f64) {
        let sch = MeasurementSchedule::new(vec![0.25, 0.5, 0.75, 1.0]).unwrap();
        let w = elfving_weight(&p, &sch, x_u).unwrap();
        prop_assert!(w > 0.5);
        prop_assert!(elfving_weight(&p, &sch, x_u - dx).unwrap() < w);
        let steeper = GammaComponentParams { beta1: p.beta1 + db, ..p };
        prop_assert!(elfving_weight(&steeper, &sch, x_u).unwrap() > w);
    }
}

#[test]
fn nominal_two_point_avar_is_convex_in_w() {
    let s = nominal();
    let values: Vec<f64> = (1..=19).map(|i| avar(&s, &Design::two_point(i as f64 / 20.0).unwrap()).unwrap()).collect();
    assert!(values.windows(3).all(|v| v[1] <= 0.5 * (v[0] + v[2])));
}
