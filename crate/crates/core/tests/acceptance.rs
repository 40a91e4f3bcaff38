//! One pass/fail line per acceptance criterion. Exits nonzero on failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use blelearn::fingerprint::{
    apply_fingerprint, connection_references, derive_fingerprint, post_connection_row, GRID_INPUTS,
    REFERENCE_SEQUENCE,
};
use blelearn::lstar::CachingTeacher;
use blelearn::mapper::{primary_label, AbstractAlphabet};
use blelearn::sim::{manifest, BleSul};
use blelearn::sul::Sul;
use blelearn::*;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn labels(v: &[Symbol]) -> Vec<String> {
    v.iter().map(|s| primary_label(s)).collect()
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn equivalent_to_reference(cfg: &RunConfig, out: &RunOutcome) -> bool {
    out.machine().is_some_and(|m| {
        m.equivalent(&cfg.reference().unwrap())
            .unwrap()
            .is_equivalent()
    })
}

/// Noise-free recovery of every catalogued target in a single round.
fn exact_recovery() -> Outcome {
    let expected = [5, 5, 4, 3, 16, 5, 11, 10, 6];
    let mut detail = Vec::new();
    let mut ok = true;
    for (e, want) in manifest().into_iter().zip(expected) {
        let cfg = RunConfig::new(e.soc_id, e.procedure).with_seed(0);
        let out = run_learning(&cfg).map_err(|x| x.to_string())?;
        let good = equivalent_to_reference(&cfg, &out)
            && out.stats.states == want
            && out.stats.learning_rounds == 1;
        ok &= good;
        detail.push(format!("{}/{}={}", e.soc_id, e.procedure, out.stats.states));
    }
    check(ok, detail.join(" "))
}

fn reference_fingerprint() -> Outcome {
    let refs = connection_references();
    let out: Vec<(String, Vec<Symbol>)> = refs
        .iter()
        .map(|(id, m)| {
            (
                id.clone(),
                apply_fingerprint(&REFERENCE_SEQUENCE, m).unwrap(),
            )
        })
        .collect();
    let get = |id: &str| labels(&out.iter().find(|(k, _)| k == id).unwrap().1);
    let nrf = get("nRF52832");
    let cc = get("CC2650");
    let nrf_ok = nrf
        == [
            "ADV",
            "SM_HDR",
            "LL_UNKNOWN_RSP",
            "ADV",
            "BTLE_DATA",
            "LL_VERSION_IND",
        ];
    let cc_ok = cc
        == [
            "ADV",
            "BTLE_DATA",
            "BTLE_DATA",
            "ADV",
            "BTLE_DATA",
            "LL_VERSION_IND",
        ];
    let distinct = out
        .iter()
        .enumerate()
        .all(|(i, (_, a))| out[i + 1..].iter().all(|(_, b)| a != b));
    let derived = derive_fingerprint(&refs, "scan_req").map_err(|e| e.to_string())?;
    check(
        nrf_ok && cc_ok && distinct && derived.distinct,
        format!(
            "nRF52832={} CC2650={} pairwise_distinct={distinct} derived_len={}",
            nrf.join("."),
            cc.join("."),
            derived.sequence.len()
        ),
    )
}

fn post_connection_grid() -> Outcome {
    let table: [(&str, [&str; 4]); 6] = [
        (
            "CC2640R2",
            ["BTLE_DATA", "BTLE_DATA", "LL_LENGTH_RSP", "BTLE_DATA"],
        ),
        (
            "CC2650",
            [
                "BTLE_DATA",
                "LL_VERSION_IND",
                "LL_UNKNOWN_RSP",
                "LL_UNKNOWN_RSP",
            ],
        ),
        (
            "CC2652R1",
            [
                "LL_LENGTH_REQ",
                "LL_VERSION_IND",
                "LL_LENGTH_RSP",
                "BTLE_DATA",
            ],
        ),
        (
            "CYBLE-416045-02",
            [
                "LL_REJECT_IND",
                "LL_VERSION_IND",
                "LL_UNKNOWN_RSP",
                "LL_UNKNOWN_RSP",
            ],
        ),
        (
            "CYW43455",
            [
                "ATT_MTU_REQ",
                "LL_VERSION_IND",
                "LL_LENGTH_RSP",
                "LL_REJECT_IND",
            ],
        ),
        (
            "nRF52832",
            [
                "LL_UNKNOWN_RSP",
                "LL_VERSION_IND",
                "LL_LENGTH_RSP",
                "BTLE_DATA",
            ],
        ),
    ];
    let refs = connection_references();
    let mut bad = Vec::new();
    for (soc, row) in table {
        let m = &refs.iter().find(|(id, _)| id == soc).unwrap().1;
        let got = labels(&post_connection_row(m, &GRID_INPUTS).unwrap());
        for (k, want) in row.iter().enumerate() {
            if got[k] != *want {
                bad.push(format!("{soc}/{}: {} != {want}", GRID_INPUTS[k], got[k]));
            }
        }
    }
    check(
        bad.is_empty(),
        format!("24 cells, {} mismatches {}", bad.len(), bad.join("; ")),
    )
}

fn noisy_connection() -> Outcome {
    let start = Instant::now();
    let mut equivalent = 0;
    let mut nondet = 0;
    for seed in 0..20 {
        let mut cfg = RunConfig::new(SocId::Cc2650, Procedure::Connection).with_seed(seed);
        cfg.noise = NoiseConfig::new(0.02, 0.02, seed).unwrap();
        let out = run_learning(&cfg).map_err(|e| e.to_string())?;
        equivalent += equivalent_to_reference(&cfg, &out) as usize;
        nondet += out.stats.nondet_outputs;
    }
    let elapsed = start.elapsed();
    check(
        equivalent >= 18 && nondet > 0 && elapsed < Duration::from_secs(300),
        format!(
            "{equivalent}/20 equivalent, nondet_outputs={nondet}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn crash_recovery() -> Outcome {
    let cfg = RunConfig::new(SocId::Cc2650, Procedure::Pairing).with_seed(0);
    let out = run_learning(&cfg).map_err(|e| e.to_string())?;
    check(
        out.stats.hard_resets >= 1 && out.stats.states == 10 && equivalent_to_reference(&cfg, &out),
        format!(
            "hard_resets={} states={}",
            out.stats.hard_resets, out.stats.states
        ),
    )
}

fn fatigue() -> Outcome {
    let query = [
        "connection_req",
        "legacy_pairing_req",
        "length_rsp",
        "length_req",
        "feature_req",
    ];
    let mut sul = BleSul::new(SocId::Cc2640r2, Procedure::Connection)
        .unwrap()
        .with_quirks(true);
    let mut run = || {
        sul.begin_query();
        sul.step("scan_req");
        let out: Vec<Symbol> = query.iter().map(|i| sul.step(i)).collect();
        sul.end_query();
        labels(&out)
    };
    let first = run();
    let mut flipped = None;
    for k in 1..200 {
        let o = run();
        if o[4] == "BTLE_DATA" && o[..4] == first[..4] {
            flipped = Some(k);
            break;
        }
    }
    let flip_ok = first[4] == "LL_FEATURE_RSP" && flipped.is_some();

    let mut cfg = RunConfig::new(SocId::Cc2640r2, Procedure::Connection).with_seed(0);
    cfg.quirks = Some(true);
    let full = run_learning(&cfg).map_err(|e| e.to_string())?;
    let aborted = matches!(full.result, Err(LearnError::NonDeterminismExceeded { .. }));

    let mut counts = Vec::new();
    for drop in ["legacy_pairing_req", "length_req", "feature_req"] {
        cfg.inputs = Some(AbstractAlphabet::connection().without(drop).inputs);
        let out = run_learning(&cfg).map_err(|e| e.to_string())?;
        counts.push(out.result.as_ref().map_or(0, |h| h.num_states()));
    }
    check(
        flip_ok && aborted && counts == [3, 5, 4],
        format!(
            "first={} flipped_after={flipped:?} full_alphabet_aborts={aborted} reduced_states={counts:?}",
            first[4]
        ),
    )
}

fn counterexample_processing() -> Outcome {
    let mut wins = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(6..=12);
        let m = MealyMachine::random(&mut rng, n, 3, 2);
        let mut cost = [0u64; 2];
        for (k, p) in [CexProcessing::RivestSchapire, CexProcessing::AllPrefixes]
            .into_iter()
            .enumerate()
        {
            let mut t = CachingTeacher::new(MachineTeacher::new(m.clone()));
            let mut o = WalkOracle {
                truth: m.clone(),
                rng: ChaCha8Rng::seed_from_u64(seed + 1000),
                walks: 2000,
                len: 40,
            };
            let cfg = LearnerConfig {
                processing: p,
                ..LearnerConfig::default()
            };
            let mut l = Learner::new(m.inputs(), cfg).map_err(|e| e.to_string())?;
            let h = l.learn(&mut t, &mut o).map_err(|e| e.to_string())?;
            if !h.machine.equivalent(&m).unwrap().is_equivalent() {
                return Err(format!("seed {seed}: wrong model"));
            }
            cost[k] = t.miss_symbols;
        }
        wins += (cost[0] < cost[1]) as usize;
    }
    check(wins >= 45, format!("Rivest-Schapire cheaper in {wins}/50"))
}

fn equivalence_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut disagreements = 0;
    let mut equal_pairs = 0;
    for k in 0..200 {
        let ni = rng.gen_range(1..=4);
        let na = rng.gen_range(1..=6);
        let a = MealyMachine::random(&mut rng, na, ni, 2);
        let b = match k % 3 {
            0 => split_state(&a, &mut rng),
            1 => mutate_output(&a, &mut rng),
            _ => {
                let nb = rng.gen_range(1..=6);
                MealyMachine::random(&mut rng, nb, ni, 2)
            }
        };
        let bound = a.num_states() * b.num_states();
        let truth = brute_force_separation(&a, &b, bound);
        let verdict = a.equivalent(&b).unwrap();
        let agree = match (&verdict, truth) {
            (Verdict::Equivalent, None) => true,
            (Verdict::Counterexample(w), Some(len)) => {
                w.len() == len && a.run(w).unwrap() != b.run(w).unwrap()
            }
            _ => false,
        };
        equal_pairs += truth.is_none() as usize;
        disagreements += (!agree) as usize;
    }
    check(
        disagreements == 0,
        format!("200 pairs, {equal_pairs} equivalent, {disagreements} disagreements"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("noise-free exact recovery", exact_recovery),
        ("reference fingerprint", reference_fingerprint),
        ("post-connection grid", post_connection_grid),
        ("noisy CC2650 connection", noisy_connection),
        ("CC2650 crash recovery", crash_recovery),
        ("CC2640R2 fatigue", fatigue),
        ("counterexample processing", counterexample_processing),
        ("equivalence check", equivalence_check),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} ({name}): {tag} {detail}", k + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
