use super::*;
use crate::testutil::{ks_critical_001, ks_critical_01, ks_uniform, pair_tau, rng};

fn families_at(tau: f64) -> Vec<BivariateCopula> {
    vec![
        tau_to_parameter(CopulaFamily::Normal, tau).unwrap(),
        BivariateCopula::student((std::f64::consts::FRAC_PI_2 * tau).sin(), 5.0).unwrap(),
        tau_to_parameter(CopulaFamily::Clayton, tau).unwrap(),
        tau_to_parameter(CopulaFamily::Frank, tau).unwrap(),
        tau_to_parameter(CopulaFamily::Gumbel, tau).unwrap(),
    ]
}

fn mixed_difference(c: &BivariateCopula, u: f64, v: f64, step: f64) -> f64 {
    let f = |a: f64, b: f64| c.cdf(a, b).unwrap();
    (f(u + step, v + step) - f(u + step, v - step) - f(u - step, v + step) + f(u - step, v - step))
        / (4.0 * step * step)
}

#[test]
fn product_density_and_cdf() {
    let c = BivariateCopula::Product;
    assert_eq!(c.pdf(0.3, 0.8).unwrap(), 1.0);
    assert!((c.cdf(0.3, 0.8).unwrap() - 0.24).abs() < 1e-15);
    assert_eq!(c.h(0.3, 0.9).unwrap(), 0.3);
    assert_eq!(c.hinv(0.42, 0.77).unwrap(), 0.42);
    assert_eq!(c.tau(), 0.0);
}

#[test]
fn normal_density_at_center() {
    let c = BivariateCopula::normal(0.5).unwrap();
    let expected = 1.0 / 0.75f64.sqrt();
    assert!((c.pdf(0.5, 0.5).unwrap() - 1.154_700_538_379_251_5).abs() < 1e-12);
    assert!((mixed_difference(&c, 0.5, 0.5, 1e-3) - expected).abs() < 1e-4);
}

#[test]
fn clayton_density_matches_cdf_difference() {
    let c = BivariateCopula::clayton(2.0).unwrap();
    let fd = mixed_difference(&c, 0.5, 0.5, 1e-3);
    assert!((c.pdf(0.5, 0.5).unwrap() - fd).abs() < 1e-4);
}

#[test]
fn clayton_cdf_closed_form_and_monte_carlo() {
    let c = BivariateCopula::clayton(2.0).unwrap();
    let value = c.cdf(0.5, 0.5).unwrap();
    assert!((value - 0.377_964_473_009_227_2).abs() < 1e-12);
    let draws = c.sample(100_000, &mut rng(11));
    let hits = draws.iter().filter(|p| p[0] <= 0.5 && p[1] <= 0.5).count();
    assert!((hits as f64 / 1e5 - value).abs() < 0.01);
}

#[test]
fn boundaries_are_exact() {
    for c in families_at(0.4) {
        for &u in &[0.0, 0.13, 0.5, 0.97, 1.0] {
            assert_eq!(c.cdf(u, 1.0).unwrap(), u, "{c}");
            assert_eq!(c.cdf(1.0, u).unwrap(), u, "{c}");
            assert_eq!(c.cdf(u, 0.0).unwrap(), 0.0, "{c}");
            assert_eq!(c.cdf(0.0, u).unwrap(), 0.0, "{c}");
        }
    }
}

#[test]
fn normal_h_closed_forms() {
    let indep = BivariateCopula::normal(0.0).unwrap();
    for &(u, v) in &[(0.1, 0.9), (0.5, 0.2), (0.77, 0.77)] {
        assert!((indep.h(u, v).unwrap() - u).abs() < 1e-14);
    }
    let c = BivariateCopula::normal(0.7071).unwrap();
    assert!((c.h(0.5, 0.5).unwrap() - 0.5).abs() < 1e-14);
    // Against a finite difference of the CDF in v.
    let (u, v, step) = (0.3, 0.6, 1e-5);
    let fd = (c.cdf(u, v + step).unwrap() - c.cdf(u, v - step).unwrap()) / (2.0 * step);
    assert!((c.h(u, v).unwrap() - fd).abs() < 1e-6);
}

#[test]
fn h_matches_cdf_derivative_for_all_families() {
    for c in families_at(0.5) {
        for &(u, v) in &[(0.2, 0.3), (0.6, 0.45), (0.85, 0.7)] {
            let step = 1e-5;
            let fd = (c.cdf(u, v + step).unwrap() - c.cdf(u, v - step).unwrap()) / (2.0 * step);
            assert!((c.h(u, v).unwrap() - fd).abs() < 1e-5, "{c} at ({u},{v})");
        }
    }
}

#[test]
fn gumbel_hinv_by_bisection() {
    let c = BivariateCopula::gumbel(2.0).unwrap();
    let u = c.hinv(0.3, 0.6).unwrap();
    assert!((c.h(u, 0.6).unwrap() - 0.3).abs() <= 1e-10);
}

#[test]
fn hinv_inverts_h() {
    for tau in [-0.6f64, 0.2, 0.5, 0.8] {
        for c in families_at(tau.abs()).into_iter().chain([
            tau_to_parameter(CopulaFamily::Normal, tau).unwrap(),
            tau_to_parameter(CopulaFamily::Frank, tau).unwrap(),
        ]) {
            for i in 1..10 {
                for j in 1..10 {
                    let (u, v) = (i as f64 / 10.0, j as f64 / 10.0);
                    let p = c.h(u, v).unwrap();
                    let back = c.hinv(p, v).unwrap();
                    // near p = 0 or 1 the inverse is ill-conditioned, so
                    // accept a tight residual in h instead
                    let resid = (c.h(back, v).unwrap() - p).abs();
                    assert!(
                        (back - u).abs() < 1e-8 || resid < 1e-12,
                        "{c}: ({u},{v}) -> {back}"
                    );
                }
            }
        }
    }
}

#[test]
fn tau_parameter_conversions() {
    let n = tau_to_parameter(CopulaFamily::Normal, 0.5).unwrap();
    match n {
        BivariateCopula::Normal { rho } => assert!((rho - 0.707_106_781_186_547_5).abs() < 1e-12),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(
        tau_to_parameter(CopulaFamily::Clayton, 0.5).unwrap(),
        BivariateCopula::Clayton { theta: 2.0 }
    );
    assert_eq!(
        tau_to_parameter(CopulaFamily::Gumbel, 0.5).unwrap(),
        BivariateCopula::Gumbel { theta: 2.0 }
    );
    assert_eq!(
        tau_to_parameter(CopulaFamily::Frank, 0.0).unwrap(),
        BivariateCopula::Product
    );
    assert!(matches!(
        tau_to_parameter(CopulaFamily::Clayton, -0.2),
        Err(EdaError::UnsupportedTau { .. })
    ));
    assert!(matches!(
        tau_to_parameter(CopulaFamily::Gumbel, 0.0),
        Err(EdaError::UnsupportedTau { .. })
    ));

    assert_eq!(parameter_to_tau(&BivariateCopula::Product), 0.0);
    assert!((parameter_to_tau(&BivariateCopula::Normal { rho: 0.707107 }) - 0.5).abs() < 1e-6);
    assert!((parameter_to_tau(&BivariateCopula::Clayton { theta: 2.0 }) - 0.5).abs() < 1e-15);

    for family in [
        CopulaFamily::Normal,
        CopulaFamily::Frank,
        CopulaFamily::Clayton,
        CopulaFamily::Gumbel,
    ] {
        for tau in [0.01, 0.2, 0.5, 0.8, 0.95] {
            let c = tau_to_parameter(family, tau).unwrap();
            assert!((c.tau() - tau).abs() < 1e-8, "{c}");
        }
    }
    for tau in [-0.9, -0.3, -0.001] {
        let c = tau_to_parameter(CopulaFamily::Frank, tau).unwrap();
        assert!((c.tau() - tau).abs() < 1e-8, "{c}");
    }
}

#[test]
fn frank_tau_matches_debye_quadrature() {
    // τ(θ) = 1 - 4/θ + 4/θ² ∫_0^θ t/(e^t - 1) dt, integrated by a plain
    // composite midpoint rule as an independent route.
    let theta: f64 = 5.736;
    let n = 200_000;
    let h = theta / n as f64;
    let integral: f64 = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            t / t.exp_m1() * h
        })
        .sum();
    let expected = 1.0 - 4.0 / theta + 4.0 * integral / (theta * theta);
    let c = BivariateCopula::frank(theta).unwrap();
    assert!((c.tau() - expected).abs() < 1e-9);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(BivariateCopula::normal(1.0).is_err());
    assert!(BivariateCopula::student(0.2, 0.5).is_err());
    assert!(BivariateCopula::clayton(0.0).is_err());
    assert!(BivariateCopula::gumbel(0.9).is_err());
    assert_eq!(BivariateCopula::frank(0.0).unwrap(), BivariateCopula::Product);
    let bogus = BivariateCopula::Clayton { theta: -1.0 };
    assert!(matches!(
        bogus.pdf(0.5, 0.5),
        Err(EdaError::ParameterDomain { .. })
    ));
    assert!(bogus.cdf(0.5, 0.5).is_err());
    assert!(bogus.h(0.5, 0.5).is_err());
}

#[test]
fn loglik_examples() {
    let data = BivariateCopula::normal(0.5).unwrap().sample(500, &mut rng(3));
    assert_eq!(BivariateCopula::Product.loglik(&data).unwrap(), 0.0);
    assert!(BivariateCopula::normal(0.5).unwrap().loglik(&data).unwrap() > 0.0);
    let single = BivariateCopula::normal(0.5)
        .unwrap()
        .loglik(&[[0.5, 0.5]])
        .unwrap();
    assert!((single - 0.143_841_036_225_890_2).abs() < 1e-12);
}

#[test]
fn samples_have_uniform_margins_and_target_tau() {
    let m = 2000;
    // a dozen KS tests run here, so use the 0.001 level
    let crit = ks_critical_001(m);
    for (k, c) in families_at(0.5).into_iter().enumerate() {
        let s = c.sample(m, &mut rng(100 + k as u64));
        let us: Vec<f64> = s.iter().map(|p| p[0]).collect();
        let vs: Vec<f64> = s.iter().map(|p| p[1]).collect();
        assert!(ks_uniform(&us) < crit, "{c}: {}", ks_uniform(&us));
        assert!(ks_uniform(&vs) < crit, "{c}: {}", ks_uniform(&vs));
        assert!((pair_tau(&s) - 0.5).abs() < 0.05, "{c}: {}", pair_tau(&s));
    }
    let indep = BivariateCopula::Product.sample(m, &mut rng(5));
    assert!(pair_tau(&indep).abs() < 0.05);
}

#[test]
fn student_dof_recovery() {
    let t4 = BivariateCopula::student(0.5, 4.0).unwrap().sample(1000, &mut rng(21));
    match fit_student_dof(&t4, 0.5).unwrap() {
        BivariateCopula::Student { nu, .. } => assert!((2.0..=10.0).contains(&nu), "nu={nu}"),
        other => panic!("{other}"),
    }
    let gauss = BivariateCopula::normal(0.5).unwrap().sample(1000, &mut rng(22));
    match fit_student_dof(&gauss, 0.5).unwrap() {
        BivariateCopula::Student { nu, .. } => assert!(nu >= 20.0, "nu={nu}"),
        other => panic!("{other}"),
    }
}

#[test]
fn student_dof_search_terminates_on_grid() {
    let m = 50;
    let grid: Vec<[f64; 2]> = (0..m)
        .map(|i| {
            let u = (i as f64 + 0.5) / m as f64;
            [u, ((i * 7) % m) as f64 / m as f64 + 0.5 / m as f64]
        })
        .collect();
    let evals = std::cell::Cell::new(0usize);
    let counted = |ln_nu: f64| {
        evals.set(evals.get() + 1);
        BivariateCopula::Student { rho: 0.0, nu: ln_nu.exp() }
            .loglik(&grid)
            .unwrap()
    };
    let _ = golden_max(counted, 0.0, STUDENT_DOF_MAX.ln(), 1e-5);
    assert!(evals.get() <= 100);
    assert!(fit_student_dof(&grid, 0.0).is_ok());
}

#[test]
fn mvnormal_sample_examples() {
    let m = 2000;
    let ident = mvnormal_copula_sample(&CorrelationMatrix::identity(3), m, &mut rng(1)).unwrap();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let x: Vec<f64> = ident.iter().map(|r| r[a]).collect();
        let y: Vec<f64> = ident.iter().map(|r| r[b]).collect();
        assert!(crate::testutil::brute_tau(&x, &y).abs() < 0.05);
    }
    let r = CorrelationMatrix::from_rows(&[vec![1.0, 0.707107], vec![0.707107, 1.0]]).unwrap();
    let s = mvnormal_copula_sample(&r, m, &mut rng(2)).unwrap();
    let pairs: Vec<[f64; 2]> = s.iter().map(|r| [r[0], r[1]]).collect();
    assert!((pair_tau(&pairs) - 0.5).abs() < 0.05);

    let one = mvnormal_copula_sample(&CorrelationMatrix::identity(1), m, &mut rng(3)).unwrap();
    let col: Vec<f64> = one.iter().map(|r| r[0]).collect();
    assert!(col.iter().all(|&u| u > 0.0 && u < 1.0));
    assert!(ks_uniform(&col) < ks_critical_01(m));
}

#[test]
fn correlation_matrix_validation() {
    assert!(CorrelationMatrix::from_rows(&[vec![1.0, 0.3], vec![0.2, 1.0]]).is_err());
    assert!(CorrelationMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).is_err());
    assert!(CorrelationMatrix::from_rows(&[vec![1.0, 0.0]]).is_err());
    let singular = CorrelationMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert!(mvnormal_copula_sample(&singular, 3, &mut rng(0)).is_err());
}
