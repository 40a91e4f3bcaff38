mod common;

use blelearn::lstar::{CachingTeacher, PerfectOracle};
use blelearn::mapper::AbstractAlphabet;
use blelearn::sim::manifest;
use blelearn::*;
use common::WalkOracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_machine(seed: u64) -> MealyMachine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=10);
    let k = rng.gen_range(2..=4);
    MealyMachine::random(&mut rng, n, k, 3)
}

fn learn_random(
    truth: MealyMachine,
    seed: u64,
    processing: CexProcessing,
) -> (MealyMachine, MealyMachine, u64) {
    let mut teacher = CachingTeacher::new(MachineTeacher::new(truth.clone()));
    let mut oracle = WalkOracle {
        truth: truth.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0xabc),
        walks: 500,
        len: 30,
    };
    let cfg = LearnerConfig {
        processing,
        ..LearnerConfig::default()
    };
    let mut l = Learner::new(truth.inputs(), cfg).unwrap();
    let h = l.learn(&mut teacher, &mut oracle).unwrap();
    (truth, h.machine, teacher.miss_symbols)
}

#[test]
fn both_processings_recover_random_machines() {
    for seed in 0..40 {
        for p in [CexProcessing::RivestSchapire, CexProcessing::AllPrefixes] {
            let (truth, learned, _) = learn_random(random_machine(seed), seed, p);
            assert!(
                learned.equivalent(&truth).unwrap().is_equivalent(),
                "seed {seed} {p:?}"
            );
            assert_eq!(learned.num_states(), truth.minimize().num_states());
        }
    }
}

#[test]
fn rivest_schapire_is_usually_cheaper() {
    let wins = (100..120)
        .filter(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = rng.gen_range(6..=12);
            let m = MealyMachine::random(&mut rng, n, 3, 2);
            let cost = |p| learn_random(m.clone(), s, p).2;
            cost(CexProcessing::RivestSchapire) < cost(CexProcessing::AllPrefixes)
        })
        .count();
    assert!(wins >= 15, "{wins}/20");
}

#[test]
fn perfect_oracle_learning_of_references() {
    for e in manifest() {
        let truth = reference_machine(e.soc_id, e.procedure).unwrap();
        let mut t = MachineTeacher::new(truth.clone());
        let (h, outcome) = learn(
            truth.inputs(),
            &mut t,
            &mut PerfectOracle::new(truth.clone()),
        )
        .unwrap();
        assert!(h.machine.equivalent(&truth).unwrap().is_equivalent());
        assert_eq!(outcome.rounds, 1, "{} {}", e.soc_id, e.procedure);
    }
}

#[test]
fn catalogue_targets_are_learned_exactly() {
    for e in manifest() {
        let cfg = RunConfig::new(e.soc_id, e.procedure).with_seed(5);
        let out = run_learning(&cfg).unwrap();
        let m = out.machine().expect("learning succeeds");
        assert!(m
            .equivalent(&cfg.reference().unwrap())
            .unwrap()
            .is_equivalent());
        assert_eq!(out.stats.states, e.state_count);
        assert_eq!(out.stats.learning_rounds, 1);
        assert_eq!(out.stats.nondet_outputs, 0);
    }
}

#[test]
fn noisy_learning_still_converges() {
    for (soc, seed) in [
        (SocId::Cyble416045, 1),
        (SocId::Nrf52832, 2),
        (SocId::Cc2650, 3),
    ] {
        let mut cfg = RunConfig::new(soc, Procedure::Connection).with_seed(seed);
        cfg.noise = NoiseConfig::new(0.03, 0.03, seed).unwrap();
        let out = run_learning(&cfg).unwrap();
        let m = out.machine().expect("learning succeeds");
        assert!(
            m.equivalent(&cfg.reference().unwrap())
                .unwrap()
                .is_equivalent(),
            "{soc}"
        );
        assert!(out.stats.nondet_outputs > 0);
    }
}

#[test]
fn crash_triggers_hard_resets() {
    let cfg = RunConfig::new(SocId::Cc2650, Procedure::Pairing).with_seed(9);
    let out = run_learning(&cfg).unwrap();
    assert!(out.stats.hard_resets >= 1);
    assert_eq!(out.stats.states, 10);
}

#[test]
fn disabling_the_crash_quirk_avoids_hard_resets() {
    let mut cfg = RunConfig::new(SocId::Cc2650, Procedure::Pairing).with_seed(9);
    cfg.quirks = Some(false);
    let out = run_learning(&cfg).unwrap();
    assert_eq!(out.stats.hard_resets, 0);
    assert_eq!(out.stats.states, 10);
}

#[test]
fn fatigue_blocks_the_full_alphabet_only() {
    let mut cfg = RunConfig::new(SocId::Cc2640r2, Procedure::Connection).with_seed(2);
    cfg.quirks = Some(true);
    let full = run_learning(&cfg).unwrap();
    assert!(matches!(
        full.result,
        Err(LearnError::NonDeterminismExceeded { .. })
    ));
    assert!(full.stats.cache_updates >= 1);
    for (drop, states) in [
        ("legacy_pairing_req", 3),
        ("length_req", 5),
        ("feature_req", 4),
    ] {
        cfg.inputs = Some(AbstractAlphabet::connection().without(drop).inputs);
        let out = run_learning(&cfg).unwrap();
        assert_eq!(out.stats.states, states, "without {drop}");
    }
}

#[test]
fn stats_fields_are_consistent() {
    let cfg = RunConfig::new(SocId::Cyw43455, Procedure::Connection).with_seed(4);
    let s = run_learning(&cfg).unwrap().stats;
    assert_eq!(s.conformance_tests, 10 * 16);
    assert!(s.conformance_test_steps > s.conformance_tests * 10);
    assert!(s.output_query_steps >= s.output_queries);
    assert_eq!(s.constants_version, blelearn::mapper::constants().version);
}
