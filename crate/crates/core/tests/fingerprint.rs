mod common;

use blelearn::fingerprint::{
    connection_references, is_homing, is_strictly_homing, REFERENCE_SEQUENCE,
};
use blelearn::sim::{entry, BleSul};
use blelearn::sul::{ResetPlan, SulSession};
use blelearn::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn live(soc: SocId) -> SulSession {
    let sul = BleSul::new(soc, Procedure::Connection)
        .unwrap()
        .with_quirks(false);
    let none: [&str; 0] = [];
    SulSession::new(Box::new(sul), ResetPlan::ble(&none), 20, false)
}

#[test]
fn derived_sequence_is_frozen() {
    let r = derive_fingerprint(&connection_references(), "scan_req").unwrap();
    assert!(r.distinct);
    assert!(r.outputs_distinct());
    assert_eq!(
        r.sequence,
        [
            "connection_req",
            "scan_req",
            "connection_req",
            "feature_rsp"
        ]
    );
    assert_eq!(r.outputs.len(), 6);
}

#[test]
fn every_reference_classifies_as_itself() {
    let refs = connection_references();
    let r = derive_fingerprint(&refs, "scan_req").unwrap();
    for (id, m) in &refs {
        let observed = apply_fingerprint(&r.sequence, m).unwrap();
        assert_eq!(classify(&r, &observed).as_deref(), Some(id.as_str()));
    }
    assert_eq!(classify(&r, &[]), None);
}

#[test]
fn live_devices_are_identified() {
    let refs = connection_references();
    for seq in [
        derive_fingerprint(&refs, "scan_req").unwrap().sequence,
        REFERENCE_SEQUENCE.map(String::from).to_vec(),
    ] {
        let report = FingerprintReport {
            outputs: refs
                .iter()
                .map(|(id, m)| (id.clone(), apply_fingerprint(&seq, m).unwrap()))
                .collect(),
            sequence: seq.clone(),
            distinct: true,
            indistinguishable: None,
        };
        for soc in SocId::ALL {
            let observed = live(soc).execute_query(&seq).unwrap();
            assert_eq!(
                classify(&report, &observed),
                Some(soc.to_string()),
                "{seq:?}"
            );
        }
    }
}

#[test]
fn learned_models_reproduce_the_fingerprint() {
    let refs = connection_references();
    let r = derive_fingerprint(&refs, "scan_req").unwrap();
    for soc in SocId::ALL {
        if !entry(soc, Procedure::Connection).unwrap().pre.is_empty() {
            continue;
        }
        let out = run_learning(&RunConfig::new(soc, Procedure::Connection).with_seed(1)).unwrap();
        let m = out.machine().unwrap();
        assert_eq!(
            classify(&r, &apply_fingerprint(&r.sequence, m).unwrap()),
            Some(soc.to_string())
        );
    }
}

#[test]
fn equivalent_copies_cannot_be_told_apart() {
    let mut models = connection_references();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let twin = common::split_state(&models[1].1, &mut rng);
    models.push(("twin".to_string(), twin));
    let r = derive_fingerprint(&models, "scan_req").unwrap();
    assert!(!r.distinct);
    let (a, b) = r.indistinguishable.clone().unwrap();
    assert_eq!((a.as_str(), b.as_str()), (models[1].0.as_str(), "twin"));
}

#[test]
fn single_model_needs_no_sequence() {
    let refs = connection_references();
    let r = derive_fingerprint(&refs[..1], "scan_req").unwrap();
    assert!(r.distinct && r.sequence.is_empty());
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(matches!(
        derive_fingerprint(&[], "scan_req"),
        Err(FingerprintError::Empty)
    ));

    let mut models = connection_references();
    let pairing = reference_machine(SocId::Cyw43455, Procedure::Pairing).unwrap();
    models.push(("pairing".into(), pairing));
    assert!(matches!(
        derive_fingerprint(&models, "scan_req"),
        Err(FingerprintError::AlphabetMismatch(id)) if id == "pairing"
    ));

    let refs = connection_references();
    assert!(matches!(
        derive_fingerprint(&refs, "feature_req"),
        Err(FingerprintError::NotHoming { .. })
    ));
}

#[test]
fn scan_req_homing_properties() {
    for (id, m) in connection_references() {
        assert!(is_homing(&m, "scan_req").unwrap(), "{id}");
        assert_eq!(
            is_strictly_homing(&m, "scan_req").unwrap(),
            id != "nRF52832",
            "{id}"
        );
    }
}

#[test]
fn report_json_shape() {
    let r = derive_fingerprint(&connection_references(), "scan_req").unwrap();
    let v = serde_json::to_value(&r).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["distinct", "outputs", "sequence"]);
    assert_eq!(v["outputs"]["CC2650"].as_array().unwrap().len(), 4);
}
