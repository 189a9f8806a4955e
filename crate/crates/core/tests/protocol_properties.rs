use proptest::prelude::*;
use qpc_core::analysis::{monte_carlo, tp_histograms, EveKind, ExperimentKind, ExperimentSpec};
use qpc_core::{
    active_attack, from_groups, passive_attack_run, run_protocol, to_groups, EveModel,
    ProtocolConfig, SecretInput, Variant, Verdict,
};

fn secret_pair() -> impl Strategy<Value = (SecretInput, SecretInput)> {
    (1u32..=16).prop_flat_map(|n| {
        let max = (1u64 << n) - 1;
        (0..=max, 0..=max).prop_map(move |(x, y)| {
            (
                SecretInput::new(x, n).unwrap(),
                SecretInput::new(y, n).unwrap(),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn grouping_round_trips(v in any::<u64>(), n in 1u32..=64) {
        let v = if n == 64 { v } else { v & ((1 << n) - 1) };
        let s = SecretInput::new(v, n).unwrap();
        prop_assert_eq!(from_groups(&to_groups(s)), s);
    }

    #[test]
    fn original_verdict_is_exact((x, y) in secret_pair(), seed in any::<u64>()) {
        let cfg = ProtocolConfig::new(Variant::Original, x.n_bits(), seed);
        let t = run_protocol(x, y, cfg, EveModel::None).unwrap();
        let expect = if x == y { Verdict::Equal } else { Verdict::NotEqual };
        prop_assert_eq!(&t.verdict, &expect);
        prop_assert_eq!(t.bob.verdict.as_ref(), Some(&expect));
        prop_assert!(t.check_consistency().is_ok());
    }

    #[test]
    fn fixed_is_complete((x, _y) in secret_pair(), seed in any::<u64>()) {
        let cfg = ProtocolConfig::new(Variant::Fixed, x.n_bits(), seed);
        let t = run_protocol(x, x, cfg, EveModel::None).unwrap();
        prop_assert_eq!(&t.verdict, &Verdict::Equal);
        prop_assert!(t.check_consistency().is_ok());
    }

    #[test]
    fn runs_are_deterministic((x, y) in secret_pair(), seed in any::<u64>(), fixed in any::<bool>()) {
        let v = if fixed { Variant::Fixed } else { Variant::Original };
        let cfg = ProtocolConfig::new(v, x.n_bits(), seed);
        let a = run_protocol(x, y, cfg, EveModel::None).unwrap().to_canonical_text();
        let b = run_protocol(x, y, cfg, EveModel::None).unwrap().to_canonical_text();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn passive_attack_always_recovers((x, y) in secret_pair(), seed in any::<u64>()) {
        let cfg = ProtocolConfig::new(Variant::Original, x.n_bits(), seed);
        let (_, [by_bob, by_alice]) = passive_attack_run(x, y, cfg).unwrap();
        prop_assert_eq!(by_bob.recovered_secret(), Some(x.value()));
        prop_assert_eq!(by_alice.recovered_secret(), Some(y.value()));
    }

    #[test]
    fn active_attack_recovers_and_is_silent((x, y) in secret_pair(), seed in any::<u64>()) {
        let cfg = ProtocolConfig::new(Variant::Original, x.n_bits(), seed);
        let run = active_attack(x, y, cfg).unwrap();
        prop_assert!(run.report.success);
        prop_assert!(!run.report.detected);
        prop_assert!(run.alice_matches_bob());
        prop_assert_eq!(run.report.recovered_secret(), Some(x.value()));
    }
}

#[test]
fn grouping_is_lsb_first() {
    let g = to_groups(SecretInput::new(0b0110, 4).unwrap());
    let shown: Vec<String> = g.groups().iter().map(|p| p.to_string()).collect();
    assert_eq!(shown, ["01", "10"]);
}

#[test]
fn tp_sees_uniform_values() {
    let s = |v| SecretInput::new(v, 6).unwrap();
    let h = tp_histograms(s(0b101101), s(0b000111), Variant::Original, 4000, 21).unwrap();
    // Nine histograms: a loose bound here, the pinned 1% test is in the acceptance suite.
    assert!(h.max_chi_square() < 20.0, "{h:?}");
    assert!(h.combined.iter().all(|c| c.iter().sum::<u64>() == 4000));
}

#[test]
fn intercept_resend_alarms_in_full_runs() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Correctness, 4, 300, 9);
    spec.eve = EveKind::InterceptResend;
    let r = monte_carlo(&spec).unwrap();
    // Two attacked links with four decoys each.
    let expect = 1.0 - 0.75f64.powi(8);
    assert!((r.row("aborted").unwrap().rate() - expect).abs() < 0.06);
}

#[test]
fn campaign_is_schedule_independent() {
    let spec = ExperimentSpec::new(ExperimentKind::PassiveAttack, 5, 200, 4);
    let a = monte_carlo(&spec).unwrap().to_canonical_text();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let b = pool.install(|| monte_carlo(&spec).unwrap().to_canonical_text());
    assert_eq!(a, b);
}
