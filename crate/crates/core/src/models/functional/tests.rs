use super::*;
use crate::prior::{sample_prior, AlphaState, SmrpmConfig};
use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Instance {
    model: FunctionalModel,
    clusters: ClusterMatrix,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let degree = rng.random_range(0..4);
    let kk = rng.random_range(degree + 1..degree + 5);
    let basis = BasisSpec::even(0.0, 1.0, degree, kk).unwrap();
    let n = rng.random_range(1..5);
    let curves = (0..n)
        .map(|_| {
            let m = rng.random_range(1..9);
            let x: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let y = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            (x, y)
        })
        .collect();
    let data = FunctionalDataset::new(curves).unwrap();
    let hyper = FunctionalHyper {
        m0: rng.random_range(-0.5..0.5),
        s0_sq: rng.random_range(0.5..2.0),
        a_tau: rng.random_range(1.0..4.0),
        b_tau: rng.random_range(0.5..2.0),
        a_sigma: rng.random_range(1.0..4.0),
        b_sigma: rng.random_range(0.5..2.0),
    };
    let cfg = SmrpmConfig::new(2, 0);
    let (clusters, _) = sample_prior(n, kk, &cfg, &AlphaState::PerIndex(vec![0.5; kk]), rng);
    let mut model = FunctionalModel::new(data, basis, hyper).unwrap();
    let state = FunctionalState {
        theta_star: (0..kk)
            .map(|k| (0..clusters.num_clusters(k)).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect(),
        sigma2: rng.random_range(0.2..2.0),
        tau2: rng.random_range(0.2..2.0),
        phi: rng.random_range(-1.2..1.2),
    };
    model.set_state(state, &clusters).unwrap();
    Instance { model, clusters }
}

/// Log joint written from the model definition with dense basis evaluation.
fn dense_log_joint(model: &FunctionalModel, clusters: &ClusterMatrix) -> f64 {
    let st = model.current();
    let h = model.hyper();
    let basis = model.basis();
    let lnorm = |x: f64, m: f64, v: f64| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m).powi(2) / (2.0 * v);
    let mut lp = 0.0;
    for i in 0..model.data().num_curves() {
        let coef: Vec<f64> = (0..st.theta_star.len())
            .map(|k| st.theta_star[k][clusters.label(i, k)])
            .collect();
        for (x, y) in model.data().x(i).iter().zip(model.data().y(i)) {
            let b = basis.eval(*x).unwrap();
            let pred: f64 = b.iter().zip(&coef).map(|(a, c)| a * c).sum();
            lp += lnorm(*y, pred, st.sigma2);
        }
    }
    for k in 0..st.theta_star.len() {
        for j in 0..clusters.num_clusters(k) {
            let mean = if k == 0 {
                0.0
            } else {
                let mut back: Vec<usize> = (0..clusters.num_units())
                    .filter(|&u| clusters.label(u, k) == j)
                    .map(|u| clusters.label(u, k - 1))
                    .collect();
                back.sort();
                back.dedup();
                st.phi * back.iter().map(|&l| st.theta_star[k - 1][l]).sum::<f64>() / back.len() as f64
            };
            lp += lnorm(st.theta_star[k][j], mean, st.tau2);
        }
    }
    let lig = |x: f64, a: f64, b: f64| -(a + 1.0) * x.ln() - b / x;
    lp + lig(st.sigma2, h.a_sigma, h.b_sigma) + lig(st.tau2, h.a_tau, h.b_tau) + lnorm(st.phi, h.m0, h.s0_sq)
}

/// The conditional's log kernel must track the joint up to a constant.
fn check_kernel(
    cond: Conditional,
    xs: &[f64],
    mut joint_at: impl FnMut(f64) -> f64,
) {
    let x0 = cond.mode();
    let base = joint_at(x0);
    for &x in xs {
        let lhs = joint_at(x) - base;
        let rhs = cond.log_kernel(x) - cond.log_kernel(x0);
        assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs.abs()), "x={x}: {lhs} vs {rhs} ({cond:?})");
    }
}

#[test]
fn sparse_loglik_equals_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let (m, c) = (&inst.model, &inst.clusters);
        let i = rng.random_range(0..c.num_units());
        let k = rng.random_range(0..c.num_indices());
        let jk = c.num_clusters(k);
        for j in 0..=jk {
            let aux = 0.37;
            let sparse = m.loglik_curve_at_label(i, k, j, Some(aux), c).unwrap();
            let mut coef = m.current().coefficients(i, c);
            coef[k] = if j < jk { m.current().theta_star[k][j] } else { aux };
            let s2 = m.current().sigma2;
            let dense: f64 = m
                .data()
                .x(i)
                .iter()
                .zip(m.data().y(i))
                .map(|(x, y)| {
                    let p = m.basis().eval_curve(&coef, *x).unwrap();
                    -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (y - p).powi(2) / (2.0 * s2)
                })
                .sum();
            assert!((sparse - dense).abs() < 1e-12, "{sparse} vs {dense}");
        }
        assert!(matches!(
            m.loglik_curve_at_label(i, k, jk, None, c),
            Err(Error::Contract(_))
        ));
    }
}

#[test]
fn zero_residual_point() {
    let basis = BasisSpec::even(0.0, 1.0, 0, 1).unwrap();
    let data = FunctionalDataset::new(vec![(vec![0.5], vec![0.8])]).unwrap();
    let mut m = FunctionalModel::new(data, basis, FunctionalHyper::default()).unwrap();
    let c = ClusterMatrix::single_cluster(1, 1);
    m.set_state(
        FunctionalState {
            theta_star: vec![vec![0.8]],
            sigma2: 1.0,
            tau2: 1.0,
            phi: 1.0,
        },
        &c,
    )
    .unwrap();
    let ll = m.loglik_curve_at_label(0, 0, 0, None, &c).unwrap();
    assert_relative_eq!(ll, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-15);
}

#[test]
fn conditionals_match_dense_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let inst = random_instance(&mut rng);
        let c = inst.clusters.clone();
        let m = inst.model;
        for k in 0..c.num_indices() {
            for j in 0..c.num_clusters(k) {
                let cond = m.theta_star_conditional(k, j, &c).unwrap();
                let Conditional::Normal { mean, var } = cond else { panic!() };
                let xs: Vec<f64> = (-20..=20).map(|t| mean + 0.2 * t as f64 * var.sqrt()).collect();
                let mut mm = m.clone();
                check_kernel(cond, &xs, |x| {
                    let mut s = mm.current().clone();
                    s.theta_star[k][j] = x;
                    mm.set_state(s, &c).unwrap();
                    dense_log_joint(&mm, &c)
                });
            }
        }
        let mut mm = m.clone();
        let cond = m.sigma2_conditional(&c).unwrap();
        let mode = cond.mode();
        let xs: Vec<f64> = (1..40).map(|t| mode * t as f64 / 10.0).collect();
        check_kernel(cond, &xs, |x| {
            let mut s = mm.current().clone();
            s.sigma2 = x;
            mm.set_state(s, &c).unwrap();
            dense_log_joint(&mm, &c)
        });
        let cond = m.tau2_conditional(&c).unwrap();
        let mode = cond.mode();
        let xs: Vec<f64> = (1..40).map(|t| mode * t as f64 / 10.0).collect();
        check_kernel(cond, &xs, |x| {
            let mut s = mm.current().clone();
            s.tau2 = x;
            mm.set_state(s, &c).unwrap();
            dense_log_joint(&mm, &c)
        });
        let mut mm = m.clone();
        let cond = m.phi_conditional(&c).unwrap();
        let xs: Vec<f64> = (-20..=20).map(|t| t as f64 * 0.15).collect();
        check_kernel(cond, &xs, |x| {
            let mut s = mm.current().clone();
            s.phi = x;
            mm.set_state(s, &c).unwrap();
            dense_log_joint(&mm, &c)
        });
    }
}

#[test]
fn last_index_variance_by_hand() {
    // Linear basis with K = 2 on [0, 1]; one curve, points at 0.25 and 0.75.
    let basis = BasisSpec::even(0.0, 1.0, 1, 2).unwrap();
    let data = FunctionalDataset::new(vec![(vec![0.25, 0.75], vec![1.0, 2.0])]).unwrap();
    let mut m = FunctionalModel::new(data, basis, FunctionalHyper::default()).unwrap();
    let c = ClusterMatrix::single_cluster(1, 2);
    let (s2, t2, phi, t0) = (0.5, 2.0, 0.8, 0.3);
    m.set_state(
        FunctionalState {
            theta_star: vec![vec![t0], vec![0.0]],
            sigma2: s2,
            tau2: t2,
            phi,
        },
        &c,
    )
    .unwrap();
    // b_2(0.25) = 0.25, b_2(0.75) = 0.75.
    let sum_b2 = 0.25f64.powi(2) + 0.75f64.powi(2);
    let var = 1.0 / (1.0 / t2 + sum_b2 / s2);
    let r = [1.0 - 0.75 * t0, 2.0 - 0.25 * t0];
    let mean = (phi * t0 / t2 + (0.25 * r[0] + 0.75 * r[1]) / s2) * var;
    match m.theta_star_conditional(1, 0, &c).unwrap() {
        Conditional::Normal { mean: mu, var: v } => {
            assert_relative_eq!(v, var, epsilon = 1e-14);
            assert_relative_eq!(mu, mean, epsilon = 1e-14);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn phi_single_pair_by_hand() {
    let basis = BasisSpec::even(0.0, 1.0, 0, 2).unwrap();
    let data = FunctionalDataset::new(vec![(vec![0.1], vec![0.0])]).unwrap();
    let mut m = FunctionalModel::new(data, basis, FunctionalHyper::default()).unwrap();
    let c = ClusterMatrix::single_cluster(1, 2);
    let (a, b, t2) = (0.7, 1.9, 0.5);
    m.set_state(
        FunctionalState {
            theta_star: vec![vec![a], vec![b]],
            sigma2: 1.0,
            tau2: t2,
            phi: 0.0,
        },
        &c,
    )
    .unwrap();
    let prec = 1.0 + a * a / t2;
    let mean = (a * b / t2) / prec;
    let cond = m.phi_conditional(&c).unwrap();
    assert_eq!(
        cond,
        Conditional::Normal {
            mean,
            var: 1.0 / prec
        }
    );
    // No back-link information at all: prior returned.
    let mut m0 = m.clone();
    let mut s = m0.current().clone();
    s.theta_star[0][0] = 0.0;
    m0.set_state(s, &c).unwrap();
    assert_eq!(m0.phi_conditional(&c).unwrap(), Conditional::Normal { mean: 0.0, var: 1.0 });
}

#[test]
fn variance_conditionals_shapes_and_rates() {
    let basis = BasisSpec::even(0.0, 1.0, 0, 2).unwrap();
    let data = FunctionalDataset::new(vec![
        (vec![0.1, 0.9], vec![0.5, 0.5]),
        (vec![0.2], vec![-0.5]),
        (vec![0.3, 0.7], vec![0.0, 0.0]),
    ])
    .unwrap();
    let hyper = FunctionalHyper {
        a_tau: 2.0,
        b_tau: 3.0,
        a_sigma: 1.5,
        b_sigma: 0.5,
        ..Default::default()
    };
    let mut m = FunctionalModel::new(data, basis, hyper).unwrap();
    let c = ClusterMatrix::from_rows(&[vec![0, 0], vec![1, 1], vec![0, 2]]).unwrap();
    m.set_state(
        FunctionalState {
            theta_star: vec![vec![0.0, 0.0], vec![0.0, 0.0, 0.0]],
            sigma2: 1.0,
            tau2: 1.0,
            phi: 1.0,
        },
        &c,
    )
    .unwrap();
    assert_eq!(
        m.tau2_conditional(&c).unwrap(),
        Conditional::InvGamma { shape: 4.5, rate: 3.0 }
    );
    let mut s = m.current().clone();
    s.theta_star = vec![vec![0.5, -0.5], vec![0.5, -0.5, 0.0]];
    m.set_state(s, &c).unwrap();
    assert_eq!(
        m.sigma2_conditional(&c).unwrap(),
        Conditional::InvGamma { shape: 4.0, rate: 0.625 }
    );
}

#[test]
fn move_weights_match_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let inst = random_instance(&mut rng);
        let mut m = inst.model;
        let c0 = inst.clusters;
        let i = rng.random_range(0..c0.num_units());
        let k = rng.random_range(0..c0.num_indices());
        let aux = rng.random_range(-1.0..1.0);

        let mut c = c0.clone();
        let detached = c.detach(i, k);
        let removed = m.on_detach(k, detached);
        let jk = c.num_clusters(k);
        let mut lw = vec![0.0; jk + 1];
        m.log_weights(i, k, &c, &aux, &mut lw);

        // Joint with i placed at each candidate, θ held fixed.
        let joint_at = |j: usize| {
            let mut cc = c.clone();
            let mut mm = m.clone();
            mm.on_attach(k, j, aux);
            cc.attach(i, k, j);
            if let Some(order) = cc.canonicalize(k) {
                mm.on_relabel(k, &order);
            }
            dense_log_joint(&mm, &cc)
        };
        let st = m.current().clone();
        let proposal = {
            let mean = if k == 0 {
                0.0
            } else {
                st.phi * st.theta_star[k - 1][c.label(i, k - 1)]
            };
            -0.5 * (2.0 * std::f64::consts::PI * st.tau2).ln() - (aux - mean).powi(2) / (2.0 * st.tau2)
        };
        let reference: Vec<f64> = (0..=jk)
            .map(|j| joint_at(j) - if j == jk { proposal } else { 0.0 })
            .collect();
        for j in 0..=jk {
            let lhs = lw[j] - lw[0];
            let rhs = reference[j] - reference[0];
            assert!((lhs - rhs).abs() < 1e-9, "j={j}: {lhs} vs {rhs}");
        }
        let _ = removed;
    }
}

#[test]
fn least_squares_recovers_coefficients() {
    let basis = BasisSpec::even(0.0, 1.0, 3, 6).unwrap();
    let coef = [0.3, -1.0, 2.0, 0.5, 0.0, 1.2];
    let x: Vec<f64> = (0..40).map(|t| t as f64 / 39.0).collect();
    let y: Vec<f64> = x.iter().map(|&v| basis.eval_curve(&coef, v).unwrap()).collect();
    let d = basis.design_matrix(&x).unwrap();
    let (fit, ridge) = least_squares(&d, &y);
    assert!(!ridge);
    for (a, b) in fit.iter().zip(coef) {
        assert_relative_eq!(*a, b, epsilon = 1e-9);
    }
    // Two points cannot pin six coefficients.
    let d = basis.design_matrix(&[0.1, 0.2]).unwrap();
    let (fit, ridge) = least_squares(&d, &[1.0, 1.0]);
    assert!(ridge && fit.iter().all(|v| v.is_finite()));
}

#[test]
fn single_curve_initialization_is_its_fit() {
    let basis = BasisSpec::even(0.0, 1.0, 2, 4).unwrap();
    let coef = [1.0, -0.5, 0.25, 2.0];
    let x: Vec<f64> = (0..20).map(|t| t as f64 / 19.0).collect();
    let y: Vec<f64> = x.iter().map(|&v| basis.eval_curve(&coef, v).unwrap()).collect();
    let data = FunctionalDataset::new(vec![(x, y)]).unwrap();
    let mut m = FunctionalModel::new(data, basis, FunctionalHyper::default()).unwrap();
    let c = ClusterMatrix::single_cluster(1, 4);
    m.initialize(&c, &mut ChaCha8Rng::seed_from_u64(0));
    for (k, &v) in coef.iter().enumerate() {
        assert_relative_eq!(m.current().theta_star[k][0], v, epsilon = 1e-9);
    }
    assert_eq!(m.ridge_fallbacks(), 0);
}

#[test]
fn dataset_validation() {
    let d = FunctionalDataset::new(vec![(vec![0.3, 0.1, 0.2], vec![3.0, 1.0, 2.0])]).unwrap();
    assert_eq!(d.x(0), &[0.1, 0.2, 0.3]);
    assert_eq!(d.y(0), &[1.0, 2.0, 3.0]);
    assert!(FunctionalDataset::new(vec![(vec![0.1, 0.1], vec![1.0, 2.0])]).is_err());
    assert!(FunctionalDataset::new(vec![(vec![0.1], vec![1.0, 2.0])]).is_err());
    assert!(FunctionalDataset::new(vec![(vec![], vec![])]).is_err());
    let s = d.shifted(&[0.1]).unwrap();
    assert_relative_eq!(s.x(0)[2], 0.2, epsilon = 1e-15);
}
