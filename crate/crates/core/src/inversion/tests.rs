use super::*;
use crate::model::{BoundaryConditions, GaussianBump, Grid2D};
use proptest::prelude::*;

fn cfg() -> GnConfig {
    GnConfig { parallelism: Parallelism::Sequential, ..GnConfig::default() }
}

#[test]
fn jacobian_of_quadratic_toy() {
    let g = |e: &[f64]| Ok(vec![e[0] * e[0], e[1], 0.0]);
    let eta = [1.0, 1.0];
    let r0 = g(&eta).unwrap();
    let delta = 1e-2;
    let j = fd_jacobian(g, &eta, &r0, delta, Parallelism::Parallel).unwrap();
    assert!((j[(0, 0)] - 2.0).abs() <= 2.0 * delta);
    assert!(j[(0, 1)].abs() < 1e-14 && j[(1, 0)].abs() < 1e-14);
    assert!((j[(1, 1)] - 1.0).abs() < 1e-12);
    let short = |e: &[f64]| Ok(vec![e[0]]);
    assert!(matches!(
        fd_jacobian(short, &eta, &[1.0], delta, Parallelism::Sequential),
        Err(Error::ResidualShorterThanN { rows: 1, cols: 2 })
    ));
}

#[test]
fn directional_derivative_is_first_order() {
    let g = |e: &[f64]| Ok(vec![e[0].sin() * e[1], e[1] * e[1] + e[2], (e[0] * e[2]).exp(), e[0] - e[2]]);
    let eta = [0.3, -0.7, 0.4];
    let w = [0.2, 0.5, -0.8];
    let r0 = g(&eta).unwrap();
    let mut errs = Vec::new();
    for delta in [1e-2, 1e-3] {
        let j = fd_jacobian(g, &eta, &r0, delta, Parallelism::Sequential).unwrap();
        let e: Vec<f64> = eta.iter().zip(&w).map(|(a, b)| a + delta * b).collect();
        let r1 = g(&e).unwrap();
        let err: f64 = (0..4)
            .map(|i| {
                let jw: f64 = (0..3).map(|l| j[(i, l)] * w[l]).sum();
                (jw - (r1[i] - r0[i]) / delta).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        errs.push(err);
    }
    assert!(errs[1] < 0.2 * errs[0], "{errs:?}");
}

#[test]
fn mu_rule() {
    assert_eq!(tikhonov_mu(&[1.0; 5], 0.3), 1.0);
    assert_eq!(tikhonov_mu(&[4.0, 3.0, 2.0, 1.0], 0.3), 16.0);
    assert_eq!(tikhonov_mu(&[4.0, 3.0, 2.0, 1.0], 0.21), 16.0);
    let s: Vec<f64> = (0..20).map(|i| 10.0 / (1.0 + i as f64)).collect();
    assert!(tikhonov_mu(&s, 0.25) >= tikhonov_mu(&s, 0.39));
    assert_eq!(tikhonov_mu(&s, 0.39), s[6] * s[6]);
}

#[test]
fn gn_step_cases() {
    let eye = Mat::<f64>::identity(2, 2);
    let d = gn_step(&eye, &[1.0, 2.0], 1.0).unwrap();
    assert!((d[0] + 0.5).abs() < 1e-14 && (d[1] + 1.0).abs() < 1e-14);
    assert!(gn_step(&eye, &[0.0, 0.0], 1.0).unwrap().iter().all(|&x| x == 0.0));
    let j = Mat::from_fn(3, 2, |i, l| (1 + i + 2 * l) as f64);
    let r = [0.5, -1.0, 2.0];
    let mu = 1e8;
    let d = gn_step(&j, &r, mu).unwrap();
    for l in 0..2 {
        let g: f64 = (0..3).map(|i| j[(i, l)] * r[i]).sum();
        assert!((d[l] / (-g / mu) - 1.0).abs() < 1e-6);
    }
    let zero = Mat::<f64>::zeros(3, 2);
    assert!(matches!(gn_step(&zero, &r, 0.0), Err(Error::SingularSystem)));
}

proptest! {
    #[test]
    fn gn_step_solves_regularized_normal_equations(
        vals in proptest::collection::vec(-1.0f64..1.0, 18),
        r in proptest::collection::vec(-1.0f64..1.0, 6),
        mu in 1e-3f64..10.0,
    ) {
        let j = Mat::from_fn(6, 3, |i, l| vals[i * 3 + l]);
        let d = gn_step(&j, &r, mu).unwrap();
        // (JᵀJ + μI) d + Jᵀ r = 0
        for l in 0..3 {
            let mut s = mu * d[l];
            for i in 0..6 {
                let jd: f64 = (0..3).map(|c| j[(i, c)] * d[c]).sum();
                s += j[(i, l)] * (jd + r[i]);
            }
            prop_assert!(s.abs() < 1e-10);
        }
    }
}

#[test]
fn line_search_cases() {
    let c = cfg();
    let q = line_search(|a| Ok((a - 1.0).powi(2)), 1.0, &c).unwrap();
    assert!((q.alpha - 1.0).abs() < 0.05);
    let inc = line_search(|a| Ok(1.0 + a), 1.0, &c).unwrap();
    assert_eq!(inc.alpha, 0.0);
    assert_eq!(inc.value, 1.0);
    let masked = line_search(|a| Ok(if a > 1.0 { f64::INFINITY } else { (a - 2.0).powi(2) }), 4.0, &c).unwrap();
    assert!(masked.alpha > 0.0 && masked.alpha <= 1.0);
    assert!(masked.value < 4.0);
    let nan = line_search(|a| Ok(if a > 0.5 { f64::NAN } else { -a }), 0.0, &c).unwrap();
    assert!(nan.alpha > 0.0 && nan.alpha <= 0.5);
}

/// Residual = velocity at a few nodes minus a target: linear in `η`.
struct NodeMisfit {
    nodes: Vec<usize>,
    target: Vec<f64>,
}

impl Misfit for NodeMisfit {
    fn residual(&self, v: &VelocityModel, k: usize) -> Result<Vec<f64>> {
        let w = k as f64;
        Ok(self.nodes.iter().zip(&self.target).map(|(&i, t)| w * (v.values()[i] - t)).collect())
    }
    fn residual_len(&self, _: usize) -> usize {
        self.nodes.len()
    }
    fn n(&self) -> usize {
        2
    }
}

fn toy() -> (Parametrization, NodeMisfit, Vec<f64>) {
    let g = Grid2D::covering(1000.0, 1000.0, 50.0).unwrap();
    let bg = VelocityModel::constant(g, BoundaryConditions::dirichlet(), 2000.0).unwrap();
    let basis = GaussianBump::lattice(&g.domain(), 2, 2, 0.3);
    let param = Parametrization::new(bg, basis).unwrap();
    let truth = vec![120.0, -80.0, 40.0, 200.0];
    let tv = param.evaluate(&truth).unwrap();
    let nodes: Vec<usize> = (0..g.len()).step_by(3).collect();
    let target = nodes.iter().map(|&i| tv.values()[i]).collect();
    (param, NodeMisfit { nodes, target }, truth)
}

#[test]
fn linear_toy_is_recovered_and_steps_are_monotone() {
    let (param, misfit, truth) = toy();
    let schedule = LayerSchedule::new(vec![1, 2], 5, 2);
    let res = run_inversion(&misfit, &param, &schedule, &cfg()).unwrap();
    assert_eq!(res.state.records.len(), 10);
    assert_eq!(res.state.iteration, 10);
    for r in &res.state.records {
        assert!(r.functional <= r.functional_before);
        assert!(r.accepted || r.alpha == 0.0);
    }
    let err: f64 = sq_dist(&res.state.eta, &truth).sqrt() / sq_norm(&truth).sqrt();
    assert!(err < 1e-6, "{err}");
    let objectives = res.state.objectives();
    assert!(objectives.windows(2).skip(5).all(|w| w[1] <= w[0]));
    let again = run_inversion(&misfit, &param, &schedule, &GnConfig::default()).unwrap();
    assert_eq!(again.state, res.state);
}

#[test]
fn damped_anchors_converge_more_slowly() {
    let (param, misfit, truth) = toy();
    let schedule = LayerSchedule::new(vec![2], 10, 2);
    let err = |anchor| {
        let res = run_inversion(&misfit, &param, &schedule, &GnConfig { anchor, ..cfg() }).unwrap();
        for r in &res.state.records {
            assert!(r.functional <= r.functional_before);
        }
        sq_dist(&res.state.eta, &truth).sqrt() / sq_norm(&truth).sqrt()
    };
    let plain = err(PenaltyAnchor::None);
    let lm = err(PenaltyAnchor::Previous);
    let origin = err(PenaltyAnchor::Origin);
    assert!(plain < lm && lm < origin, "{plain} {lm} {origin}");
    // μ = σ₁² halves the leading mode at best per Levenberg–Marquardt step.
    assert!(lm > 0.5f64.powi(10) * 0.5);
    assert!(origin > 0.1);
}

#[test]
fn rescaled_basis_gives_the_same_trajectory() {
    let (param, misfit, _) = toy();
    let schedule = LayerSchedule::new(vec![2], 4, 2);
    let base = run_inversion(&misfit, &param, &schedule, &cfg()).unwrap();
    for s in [4.0, 0.1] {
        let basis = param.basis().iter().map(|b| GaussianBump { amplitude: b.amplitude * s, ..*b }).collect();
        let scaled = Parametrization::new(param.background().clone(), basis).unwrap();
        let res = run_inversion(&misfit, &scaled, &schedule, &cfg()).unwrap();
        for (a, b) in res.state.objectives().iter().zip(base.state.objectives()) {
            assert!((a - b).abs() <= 1e-9 * b.max(1e-6), "s = {s}: {a} vs {b}");
        }
        for (a, b) in res.state.eta.iter().zip(&base.state.eta) {
            assert!((a * s - b).abs() <= 1e-9 * b.abs().max(1.0), "s = {s}: {} vs {b}", a * s);
        }
    }
}

#[test]
fn schedule_validation() {
    assert!(LayerSchedule::new(vec![2, 4, 8], 3, 8).validate(8).is_ok());
    assert!(LayerSchedule::new(vec![2, 4, 6], 3, 2).validate(8).is_err());
    assert!(LayerSchedule::new(vec![4, 2, 8], 3, 2).validate(8).is_err());
    assert!(LayerSchedule::new(vec![8], 0, 2).validate(8).is_err());
    assert_eq!(LayerSchedule::new(vec![2, 4, 8], 3, 8).band(0), 2);
    assert!(GnConfig { gamma: 0.5, ..GnConfig::default() }.validate().is_err());
}

#[test]
fn trace_csv() {
    let (param, misfit, _) = toy();
    let res = run_inversion(&misfit, &param, &LayerSchedule::new(vec![2], 2, 2), &cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("trace.csv");
    res.state.write_trace_csv(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("iteration,k_l,objective,mu,alpha\n"));
    assert_eq!(text.lines().count(), 3);
}
