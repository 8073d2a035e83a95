use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robsynth_core::model::{build_perturbation_mask, BlockStructure, CanonicalSystem, MaskKind, PerturbationSpec, Profile, Term};
use robsynth_core::pendulum::{self, PendulumParams, X0};
use robsynth_core::robustness::{self, RobustnessBound};
use robsynth_core::simulator::{simulate, IntegratorConfig, SimMode};
use robsynth_core::synthesis::SynthesisArtifacts;
use robsynth_core::verify;

fn structures() -> Vec<BlockStructure> {
    BlockStructure::enumerate(6)
}

fn any_structure() -> impl Strategy<Value = BlockStructure> {
    let all = structures();
    (0..all.len()).prop_map(move |i| all[i].clone())
}

fn random_k(b: &BlockStructure, rng: &mut ChaCha8Rng, scale: f64) -> DMatrix<f64> {
    let n = b.dim();
    let mut k = DMatrix::zeros(n, n);
    for row in b.control_rows() {
        for col in 0..n {
            k[(row, col)] = rng.random_range(-scale..scale);
        }
    }
    k
}

/// `Θ(√s D⁻¹(s) v) = s Θ(v)`, used to put a random direction on a level set.
fn on_level(art: &SynthesisArtifacts, v: &DVector<f64>, level: f64) -> DVector<f64> {
    let s = level / art.solve_theta(v).unwrap();
    art.gramians().d(s).unwrap().map(|d| 1.0 / d).component_mul(v) * s.sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogeneity(b in any_structure(), seed in any::<u64>(), s in 0.05f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = CanonicalSystem::unforced(b.clone());
        let art = SynthesisArtifacts::new(&sys, 1.0, 0.5, None).unwrap();
        let x = DVector::from_fn(b.dim(), |_, _| rng.random_range(-1.0..1.0));
        let theta = art.solve_theta(&x).unwrap();
        let dinv = art.gramians().d(s).unwrap().map(|d| 1.0 / d);
        let scaled = art.solve_theta(&(dinv.component_mul(&x) * s.sqrt())).unwrap();
        prop_assert!((scaled - s * theta).abs() <= 1e-9 * s * theta);
    }

    #[test]
    fn theta_is_the_root_and_zero_only_at_origin(b in any_structure(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = CanonicalSystem::new(b.clone(), random_k(&b, &mut rng, 1.0)).unwrap();
        let art = SynthesisArtifacts::new(&sys, rng.random_range(0.2..5.0), 0.5, None).unwrap();
        let x = DVector::from_fn(b.dim(), |_, _| rng.random_range(-3.0..3.0));
        let theta = art.solve_theta(&x).unwrap();
        prop_assert!(theta > 0.0);
        let (g, dg) = art.theta_equation(&x, theta);
        prop_assert!(g.abs() <= 1e-10 * 2.0 * art.a0() * theta);
        prop_assert!(dg > 0.0);
        prop_assert_eq!(art.solve_theta(&DVector::zeros(b.dim())).unwrap(), 0.0);
    }

    #[test]
    fn superdiagonal_mask_is_inside_general(b in any_structure()) {
        let sd = build_perturbation_mask(&b, MaskKind::Superdiagonal);
        let gen = build_perturbation_mask(&b, MaskKind::General);
        prop_assert!(sd.is_subset_of(&gen));
    }

    #[test]
    fn margin_is_positive_and_consistent(b in any_structure(), gamma in 0.01f64..0.99, c in 1.0f64..3.0) {
        let g = robsynth_core::Gramians::new(&b).unwrap();
        for kind in [MaskKind::Superdiagonal, MaskKind::General] {
            let mask = build_perturbation_mask(&b, kind);
            let bound = RobustnessBound::margin(&g, &mask, gamma, c).unwrap();
            prop_assert!(bound.delta > 0.0);
            if bound.delta.is_finite() {
                prop_assert!(bound.identity_residual(b.largest()) <= 1e-12);
            }
        }
    }
}

#[test]
fn control_norm_bounded_on_the_ellipsoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let all = structures();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b = all[rng.random_range(0..all.len())].clone();
        let sys = CanonicalSystem::new(b.clone(), random_k(&b, &mut rng, 2.0)).unwrap();
        let c = rng.random_range(0.2..4.0);
        let art = SynthesisArtifacts::new(&sys, c, 0.5, None).unwrap();
        for _ in 0..100 {
            let v = DVector::from_fn(b.dim(), |_, _| rng.random_range(-1.0..1.0));
            let level = c * rng.random_range(0.0f64..1.0).max(1e-6);
            let x = on_level(&art, &v, level);
            let u = art.control(&x).unwrap();
            assert!(u.in_domain);
            worst = worst.max(u.u.norm());
        }
    }
    assert!(worst <= 1.0 + 1e-9, "max |u| = {worst}");
}

#[test]
fn theta_dot_respects_the_margin_at_sampled_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let all: Vec<BlockStructure> = structures().into_iter().filter(|b| b.largest() >= 2).collect();
    for i in 0..400 {
        let b = all[rng.random_range(0..all.len())].clone();
        let n = b.dim();
        let kind = if i % 2 == 0 { MaskKind::Superdiagonal } else { MaskKind::General };
        let gamma = [0.1, 0.5, 0.9][i % 3];
        let c = rng.random_range(1.0..2.5);
        let sys = CanonicalSystem::unforced(b.clone());
        let art = SynthesisArtifacts::new(&sys, c, gamma, None).unwrap();
        let mask = build_perturbation_mask(&b, kind);
        let bound = RobustnessBound::margin(art.gramians(), &mask, gamma, c).unwrap();
        for _ in 0..10 {
            let r = DMatrix::from_fn(n, n, |row, col| {
                if mask.allows(row, col) {
                    bound.delta * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                } else {
                    0.0
                }
            });
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let level = c * rng.random_range(0.01..1.0);
            let x = on_level(&art, &v, level);
            let td = robustness::closed_loop_theta_dot(&art, &r, &x, level).unwrap();
            assert!(td <= -gamma + 1e-6, "{b} {kind:?} gamma={gamma} c={c}: theta_dot = {td}");
        }
    }
}

#[test]
fn theta_strictly_decreases_along_the_benchmark() {
    let p = PendulumParams::case1();
    let c = pendulum::solvability_radius_case1(&p, p.k, p.gamma);
    let (sys, pert) = pendulum::build_case1(&p, 4.0).unwrap();
    let art = SynthesisArtifacts::new(&sys, c, p.gamma, None).unwrap();
    let cfg = IntegratorConfig::default();
    for mode in [SimMode::Algebraic, SimMode::Augmented] {
        let tr = simulate(&sys, &art, &pert, &X0, mode, &cfg).unwrap();
        for w in tr.samples.windows(2) {
            assert!(w[1].t > w[0].t);
            if w[1].theta > cfg.theta_stop {
                assert!(w[1].theta < w[0].theta + 1e-8, "{:?} at t={}", mode, w[1].t);
            }
        }
        let cert = verify::certify_trajectory(&tr, &art, p.gamma, pert.bound()).unwrap();
        assert!(cert.passed(), "{}", cert.table());
    }
}

#[test]
fn unperturbed_benchmark_decays_at_unit_rate() {
    let p = PendulumParams::case1();
    let c = pendulum::solvability_radius_case1(&p, p.k, p.gamma);
    let (sys, pert) = pendulum::build_case1(&p, 0.0).unwrap();
    let art = SynthesisArtifacts::new(&sys, c, p.gamma, None).unwrap();
    let zero = PerturbationSpec::zero(pert.mask().clone());
    let tr = simulate(&sys, &art, &zero, &X0, SimMode::Algebraic, &IntegratorConfig::default()).unwrap();
    assert!((tr.settling_time.unwrap() - tr.theta0).abs() < 1e-3);
    let fd = verify::finite_difference_theta_dot(&tr);
    assert!(fd.iter().all(|d| (d + 1.0).abs() < 5e-3));
}

#[test]
fn ten_times_the_margin_breaks_the_certificate() {
    let b = BlockStructure::new(vec![3]).unwrap();
    let gamma = 0.9;
    let sys = CanonicalSystem::unforced(b.clone());
    let art = SynthesisArtifacts::new(&sys, 1.0, gamma, None).unwrap();
    let mask = build_perturbation_mask(&b, MaskKind::Superdiagonal);
    let delta = RobustnessBound::margin(art.gramians(), &mask, gamma, 1.0).unwrap().delta;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = IntegratorConfig::default();
    let mut families = Vec::new();
    for s0 in [-1.0, 1.0] {
        for s1 in [-1.0, 1.0] {
            let terms = vec![
                Term { row: 0, col: 1, profile: Profile::Constant { value: s0 * delta } },
                Term { row: 1, col: 2, profile: Profile::Constant { value: s1 * delta } },
            ];
            families.push(PerturbationSpec::new(mask.clone(), delta, terms).unwrap());
        }
    }
    for _ in 0..4 {
        families.push(PerturbationSpec::random_admissible(mask.clone(), delta, 1.0, &mut rng).unwrap());
    }
    let mut runs = 0;
    let mut caught = vec![0; families.len()];
    for (k, fam) in families.iter().enumerate() {
        // amplitudes blown up tenfold while the declared bound stays at Δ
        let terms = fam.scaled(10.0).unwrap().terms().unwrap().to_vec();
        let stressed = PerturbationSpec::with_declared_bound(mask.clone(), delta, terms).unwrap();
        for _ in 0..3 {
            let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let x0 = on_level(&art, &v, 0.9);
            let calm = simulate(&sys, &art, fam, x0.as_slice(), SimMode::Algebraic, &cfg).unwrap();
            assert!(verify::certify_trajectory(&calm, &art, gamma, delta).unwrap().passed());
            let Ok(tr) = simulate(&sys, &art, &stressed, x0.as_slice(), SimMode::Algebraic, &cfg) else {
                continue;
            };
            runs += 1;
            let cert = verify::certify_trajectory(&tr, &art, gamma, delta).unwrap();
            let failed = |name: &str| cert.find(name).unwrap().status == verify::Status::Fail;
            if failed("theta_decay") || failed("admissible_perturbation") {
                caught[k] += 1;
            }
        }
    }
    assert!(runs > 0);
    // the constant families sit at 10Δ on every sample
    assert!(caught[..4].iter().all(|&c| c == 3), "{caught:?}");
}
