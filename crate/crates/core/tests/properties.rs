//! Cross-module properties on seeded random instances.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rsynth_core::gauss::GaussianStream;
use rsynth_core::lti::{
    certify_relation, contraction_factor, default_m, input_grid, interface_apply, A3Method, CertifyParams, GridSpec,
    Interface, LinearSystem, ReducedModel,
};
use rsynth_core::mdp::{build_label_cache, BoxRegion, LabelCache};
use rsynth_core::robust_dp::{
    apply_operator, exact_reachability_oracle, hitting_bound_rhs, largest_absorbing_set, satisfaction_at,
    value_iteration, Operator, PolicyMode, SatMode, ValueFn, ViParams,
};
use rsynth_core::scltl::{accepts_some_prefix, to_dfa, ApList, Formula, Letter};
use rsynth_core::testkit::{self, random_instance, Instance, InstanceParams};
use rand::Rng;

fn tight() -> ViParams {
    ViParams {
        tol: 1e-12,
        max_iter: Some(200_000),
        ..Default::default()
    }
}

fn random_values(seed: u64, n: usize, nq: usize) -> ValueFn {
    let mut r = testkit::rng(seed);
    ValueFn::from_vec(n, nq, (0..n * nq).map(|_| r.random_range(0.0..=1.0)).collect()).unwrap()
}

fn all_ops(delta: f64) -> [Operator; 4] {
    [
        Operator::plain(),
        Operator::delta_robust(delta),
        Operator::eps_delta_robust(delta),
        Operator::optimistic(delta),
    ]
}

/// Same instance with ε-inflated labels: every labelled state becomes ambiguous.
fn inflated(inst: &Instance) -> LabelCache {
    build_label_cache(&inst.g, &inst.lab, &inst.dfa, 0.3).unwrap()
}

fn leq(a: &ValueFn, b: &ValueFn, tol: f64) -> bool {
    a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| *x <= *y + tol)
}

fn formula_strategy() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        Just(Formula::True),
        Just(Formula::atom("a")),
        Just(Formula::atom("b")),
        Just(Formula::neg_atom("a")),
        Just(Formula::neg_atom("b")),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::or(l, r)),
            inner.clone().prop_map(Formula::next),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::until(l, r)),
            inner.clone().prop_map(Formula::eventually),
            (0u32..3, inner.clone()).prop_map(|(n, f)| Formula::bounded_eventually(n, f)),
            (0u32..3, inner).prop_map(|(n, f)| Formula::bounded_always(n, f)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dfa_structure_and_language(f in formula_strategy(), words in prop::collection::vec(prop::collection::vec(0u32..4, 0..6), 20)) {
        let aps = ApList::new(["a", "b"]).unwrap();
        let core = f.desugar();
        prop_assert_eq!(core.desugar(), core.clone());
        let d = to_dfa(&core, &aps).unwrap();
        prop_assert!(d.accepting_is_absorbing());
        prop_assert!(d.is_minimal());
        for w in words {
            let w: Vec<Letter> = w.into_iter().map(Letter).collect();
            prop_assert_eq!(d.run(&w).1, accepts_some_prefix(&f, &aps, &w));
        }
    }

    #[test]
    fn operators_are_monotone_and_clamped(seed in any::<u64>(), delta in 0.0f64..0.5) {
        let inst = random_instance(seed, &InstanceParams::default());
        let cache = inflated(&inst);
        let (n, nq) = (inst.g.n_states(), cache.n_locations());
        let v = random_values(seed ^ 1, n, nq);
        let extra = random_values(seed ^ 2, n, nq);
        let w = ValueFn::from_vec(n, nq, v.as_slice().iter().zip(extra.as_slice())
            .map(|(a, b)| (a + b).min(1.0)).collect()).unwrap();
        for op in all_ops(delta) {
            let (tv, _) = apply_operator(&op, &v, &inst.g, &cache, PolicyMode::Optimize);
            let (tw, _) = apply_operator(&op, &w, &inst.g, &cache, PolicyMode::Optimize);
            prop_assert!(leq(&tv, &tw, 1e-15), "{:?}", op.kind);
            prop_assert!(tv.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn iterates_from_zero_increase(seed in any::<u64>(), delta in 0.0f64..0.3) {
        let inst = random_instance(seed, &InstanceParams::default());
        let cache = inflated(&inst);
        for op in all_ops(delta) {
            let mut v = ValueFn::zeros(inst.g.n_states(), cache.n_locations());
            for _ in 0..30 {
                let (next, _) = apply_operator(&op, &v, &inst.g, &cache, PolicyMode::Optimize);
                prop_assert!(leq(&v, &next, 1e-15));
                v = next;
            }
        }
    }

    #[test]
    fn fixed_points_are_ordered(seed in any::<u64>(), delta in 0.0f64..0.2) {
        let inst = random_instance(seed, &InstanceParams::default());
        let wide = inflated(&inst);
        let p = tight();
        let fp = |op: Operator, c: &LabelCache| value_iteration(&op, &inst.g, c, &p).unwrap().0;
        let opt = fp(Operator::optimistic(delta), &wide);
        let plain = fp(Operator::plain(), &inst.cache);
        let robust = fp(Operator::delta_robust(delta), &inst.cache);
        let eps_robust = fp(Operator::eps_delta_robust(delta), &wide);
        prop_assert!(leq(&plain, &opt, 1e-9));
        prop_assert!(leq(&robust, &plain, 1e-9));
        prop_assert!(leq(&eps_robust, &robust, 1e-9));
    }

    #[test]
    fn robust_value_decreases_with_delta(seed in any::<u64>(), d1 in 0.0f64..0.2, d2 in 0.0f64..0.2) {
        let inst = random_instance(seed, &InstanceParams::default());
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let fp = |d| value_iteration(&Operator::delta_robust(d), &inst.g, &inst.cache, &tight()).unwrap().0;
        prop_assert!(leq(&fp(hi), &fp(lo), 1e-9));
    }

    #[test]
    fn unique_fixed_point_for_positive_delta(seed in any::<u64>(), delta in 0.02f64..0.3) {
        let inst = random_instance(seed, &InstanceParams::default());
        let tol = 1e-9;
        // "change < tol" leaves each iterate up to tol·ρ/(1−ρ) from its limit,
        // so the fixed points themselves are approximated well below tol
        let vi_tol = tol * 1e-3;
        let ones = ValueFn::constant(inst.g.n_states(), inst.cache.n_locations(), 1.0);
        for op in [Operator::delta_robust(delta), Operator::eps_delta_robust(delta)] {
            let from = |v0: Option<ValueFn>| {
                let p = ViParams { tol: vi_tol, v_init: v0, max_iter: Some(1_000_000), ..Default::default() };
                value_iteration(&op, &inst.g, &inst.cache, &p).unwrap().0
            };
            let (lo, hi) = (from(None), from(Some(ones.clone())));
            prop_assert!(lo.sup_dist(&hi) <= 10.0 * tol, "gap {:e}", lo.sup_dist(&hi));
        }
    }

    #[test]
    fn absorbing_sets_collapse(seed in any::<u64>(), k in 2u32..12) {
        let delta = 1.0 / k as f64;
        let inst = random_instance(seed, &InstanceParams::default());
        let (_, policy, _) = value_iteration(&Operator::delta_robust(delta), &inst.g, &inst.cache, &tight()).unwrap();
        let trap = largest_absorbing_set(&inst.g, &inst.cache, &policy, 0.0);
        let nq = inst.cache.n_locations();
        let mut v = ValueFn::constant(inst.g.n_states(), nq, 1.0);
        for _ in 0..(1.0 / delta).ceil() as usize {
            v = apply_operator(&Operator::delta_robust(delta), &v, &inst.g, &inst.cache, PolicyMode::Fixed(&policy)).0;
        }
        for i in 0..inst.g.n_states() {
            for q in 0..nq {
                if trap[i * nq + q] {
                    prop_assert_eq!(v.get(i, q), 0.0);
                }
            }
        }
    }

    #[test]
    fn hitting_time_bound_holds(seed in any::<u64>(), delta in 0.0f64..0.2) {
        let inst = random_instance(seed, &InstanceParams::default());
        let (_, policy, _) = value_iteration(&Operator::delta_robust(delta), &inst.g, &inst.cache, &tight()).unwrap();
        let mut v = ValueFn::zeros(inst.g.n_states(), inst.cache.n_locations());
        for l in 1..=30 {
            v = apply_operator(&Operator::delta_robust(delta), &v, &inst.g, &inst.cache, PolicyMode::Fixed(&policy)).0;
            let rhs = hitting_bound_rhs(&inst.g, &inst.cache, &policy, delta, l);
            prop_assert!(leq(&rhs, &v, 1e-10), "l = {}", l);
        }
    }

    #[test]
    fn perturbed_model_is_bracketed(seed in any::<u64>(), delta in prop_oneof![Just(0.01), Just(0.05)]) {
        let inst = random_instance(seed, &InstanceParams::default());
        let mut r = testkit::rng(seed.wrapping_add(77));
        let concrete = testkit::perturbed(&mut r, &inst.g, delta, 3.0);
        let c_cache = build_label_cache(&concrete, &inst.lab, &inst.dfa, 0.0).unwrap();
        let (robust, policy, _) = value_iteration(&Operator::delta_robust(delta), &inst.g, &inst.cache, &tight()).unwrap();
        let (opt, _, _) = value_iteration(&Operator::optimistic(delta), &inst.g, &inst.cache, &tight()).unwrap();
        let exact = exact_reachability_oracle(&concrete, &c_cache, &policy);
        for i in 0..inst.g.n_states() {
            let lo = satisfaction_at(&robust, &inst.cache, i, SatMode::DeltaRobust);
            let hi = satisfaction_at(&opt, &inst.cache, i, SatMode::Optimistic);
            let truth = satisfaction_at(&exact, &c_cache, i, SatMode::DeltaRobust);
            prop_assert!(lo <= truth + 1e-12 && truth <= hi + 1e-12, "state {}: {} ≤ {} ≤ {}", i, lo, truth, hi);
        }
    }

    #[test]
    fn default_weighting_is_a_certificate(seed in any::<u64>(), n in 1usize..5, ny in 1usize..3) {
        let mut r = testkit::rng(seed);
        let raw = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let rho = raw.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let abar = raw * (r.random_range(0.1..0.95) / rho.max(1e-3));
        let c = DMatrix::from_fn(ny, n, |_, _| r.random_range(-1.0..1.0));
        let m = default_m(&abar, &c).unwrap();
        prop_assert!((&m - c.transpose() * &c).cholesky().is_some());
        prop_assert!(contraction_factor(&abar, &m).unwrap() < 1.0);
    }
}

/// Concrete model with noise and an exact, noise-free abstraction.
fn noisy_pair() -> (LinearSystem, ReducedModel, Interface) {
    let sys = LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.0, 0.5]),
        DMatrix::identity(2, 2),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.05])),
        DMatrix::identity(2, 2),
        BoxRegion::new(vec![-5.0; 2], vec![5.0; 2]),
        BoxRegion::new(vec![-5.0; 2], vec![5.0; 2]),
        DVector::zeros(2),
    )
    .unwrap();
    let reduced = ReducedModel {
        a_s: sys.a.clone(),
        b_s: DMatrix::identity(2, 2),
        b_sw: DMatrix::zeros(2, 2),
        c_s: DMatrix::identity(2, 2),
        p: DMatrix::identity(2, 2),
    };
    let iface = Interface {
        r: DMatrix::identity(2, 2),
        q: DMatrix::zeros(2, 2),
        k: DMatrix::zeros(2, 2),
        p: DMatrix::identity(2, 2),
        u_box: sys.u_box.clone(),
    };
    (sys, reduced, iface)
}

#[test]
fn triangle_certificate_bounds_the_violation_rate() {
    let (sys, reduced, iface) = noisy_pair();
    let grid = GridSpec::new(vec![-2.0; 2], vec![2.0; 2], vec![20, 20]).unwrap();
    let inputs = input_grid(&[-0.5, -0.5], &[0.5, 0.5], &[3, 3]).unwrap();
    let m = default_m(&sys.a, &sys.c).unwrap();
    let delta = 0.05;
    let params = CertifyParams { method: A3Method::Triangle, noise_seed: 3, noise_samples: 200_000 };
    let probe = certify_relation(&sys, &reduced, &iface, &m, &grid, &inputs, 10.0, delta, &params).unwrap();
    let eps = probe.eps_min * 1.01;
    let cert = certify_relation(&sys, &reduced, &iface, &m, &grid, &inputs, eps, delta, &params).unwrap();
    assert!(cert.a3.passed, "{:?}", cert.a3);

    // error dynamics x̄⁺ = Ā x̄ + B̄ û + B̄_w w + P β
    let abar = &sys.a;
    let bbar = DMatrix::<f64>::zeros(2, 2);
    let bw = &sys.bw;
    let l = m.clone().cholesky().unwrap().l();
    let h = grid.half_widths();
    let mut r = testkit::rng(11);
    let mut noise = GaussianStream::new(5, 0);
    let n = 100_000;
    let mut bad = 0;
    for _ in 0..n {
        // uniform direction on the M-sphere of radius ε
        let z = DVector::from_fn(2, |_, _| noise.next_normal());
        let x = l.transpose().clone().try_inverse().unwrap() * (z.normalize() * eps);
        let u = &inputs[r.random_range(0..inputs.len())];
        let beta = DVector::from_fn(2, |d, _| if r.random_bool(0.5) { h[d] } else { -h[d] });
        let w = DVector::from_fn(2, |_, _| noise.next_normal());
        let e = abar * &x + &bbar * u + bw * &w + beta;
        if (e.transpose() * &m * &e)[(0, 0)].sqrt() > eps {
            bad += 1;
        }
    }
    let rate = bad as f64 / n as f64;
    assert!(rate <= delta, "violation rate {rate}");
}

#[test]
fn certified_interface_stays_in_the_input_box() {
    let sys = LinearSystem::new(
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2) * 0.1f64.sqrt(),
        DMatrix::identity(2, 2),
        BoxRegion::new(vec![-1.0; 2], vec![1.0; 2]),
        BoxRegion::new(vec![-10.0; 2], vec![10.0; 2]),
        DVector::from_vec(vec![-5.0, -7.5]),
    )
    .unwrap();
    let reduced = ReducedModel::identity(&sys);
    let iface = Interface {
        r: DMatrix::identity(2, 2),
        q: DMatrix::zeros(2, 2),
        k: -DMatrix::identity(2, 2),
        p: DMatrix::identity(2, 2),
        u_box: sys.u_box.clone(),
    };
    let grid = GridSpec::centred(&[0.0, 0.0], &[0.41576, 0.4326], vec![49, 47]).unwrap();
    let inputs = input_grid(&[-0.4, -0.4], &[0.4, 0.4], &[7, 7]).unwrap();
    let m = DMatrix::identity(2, 2);
    let eps = 0.6;
    let params = CertifyParams { method: A3Method::Triangle, noise_seed: 0, noise_samples: 100_000 };
    let cert = certify_relation(&sys, &reduced, &iface, &m, &grid, &inputs, eps, 0.0, &params).unwrap();
    assert!(cert.interface_condition.passed);
    let mut r = testkit::rng(4);
    for _ in 0..20_000 {
        let cell = r.random_range(0..grid.n_cells());
        let xh = DVector::from_vec(grid.center(cell));
        let radius = eps * r.random_range(0.0f64..=1.0).sqrt();
        let theta = r.random_range(0.0..std::f64::consts::TAU);
        let x = &xh + DVector::from_vec(vec![radius * theta.cos(), radius * theta.sin()]);
        let u = &inputs[r.random_range(0..inputs.len())];
        assert!(interface_apply(&iface, u, &xh, &x, false).is_ok());
    }
}
