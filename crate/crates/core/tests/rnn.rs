use rrur_core::data::{generate_uniform, Dataset, Sample, Target};
use rrur_core::rnn::{Optimizer, RnnConfig, RnnModel};
use rrur_core::workspace::WorkspaceBox;
use rrur_core::{Error, RobotParams};

fn sampled(count: usize, seed: u64) -> Dataset {
    let p = RobotParams::prototype();
    generate_uniform(&p, &WorkspaceBox::regular(&p), count, seed).unwrap()
}

fn small_config() -> RnnConfig {
    RnnConfig {
        hidden_size: 16,
        epochs: 20,
        batch_size: 16,
        learning_rate: 1e-2,
        ..RnnConfig::default()
    }
}

#[test]
fn constant_targets_are_learned() {
    let target = Target::new(0.05, -0.02, 205.0);
    let samples: Vec<Sample> = sampled(64, 1)
        .samples
        .iter()
        .map(|s| Sample::new(s.theta, target).unwrap())
        .collect();
    let ds = Dataset::from_samples(samples).unwrap();
    let cfg = RnnConfig {
        hidden_size: 4,
        epochs: 20_000,
        learning_rate: 1e-2,
        ..RnnConfig::default()
    };
    let (model, trace) = RnnModel::train(&cfg, &ds, &ds).unwrap();
    assert!(*trace.train.last().unwrap() < 1e-8, "{:?}", trace.train.last());
    let p = model.predict(&ds.samples[5].theta);
    assert!((p.beta - target.beta).abs() < 1e-3);
    assert!((p.z_p - target.z_p).abs() < 1e-3);
}

#[test]
fn same_seed_is_bit_identical() {
    let (train, val) = (sampled(200, 2), sampled(50, 3));
    let (a, ta) = RnnModel::train(&small_config(), &train, &val).unwrap();
    let (b, tb) = RnnModel::train(&small_config(), &train, &val).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(a.weights().as_slice(), b.weights().as_slice());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let other = RnnConfig {
        seed: 8,
        ..small_config()
    };
    let (c, _) = RnnModel::train(&other, &train, &val).unwrap();
    assert_ne!(a.weights().as_slice(), c.weights().as_slice());
}

#[test]
fn small_set_is_overfit() {
    let ds = sampled(8, 4);
    let cfg = RnnConfig {
        epochs: 5_000,
        batch_size: 8,
        learning_rate: 3e-3,
        ..RnnConfig::default()
    };
    let (model, _) = RnnModel::train(&cfg, &ds, &ds).unwrap();
    for s in &ds.samples {
        let p = model.predict(&s.theta);
        assert!((p.beta - s.target.beta).abs() < 1e-3);
        assert!((p.gamma - s.target.gamma).abs() < 1e-3);
        assert!((p.z_p - s.target.z_p).abs() < 1e-3);
    }
}

#[test]
fn loss_falls_over_training() {
    let cfg = RnnConfig {
        epochs: 50,
        ..small_config()
    };
    let (_, trace) = RnnModel::train(&cfg, &sampled(500, 5), &sampled(100, 6)).unwrap();
    assert_eq!(trace.train.len(), 50);
    assert_eq!(trace.val.len(), 50);
    assert!(trace.train[49] < trace.train[0]);
    assert!(trace.val[49] < trace.val[0]);
}

#[test]
fn sequence_training_runs() {
    let cfg = RnnConfig {
        seq_len: 5,
        ..small_config()
    };
    let (model, trace) = RnnModel::train(&cfg, &sampled(200, 7), &sampled(50, 8)).unwrap();
    assert!(trace.train[19] < trace.train[0]);
    assert!(model.weights().w_h().iter().any(|w| *w != 0.0));
}

#[test]
fn json_round_trip_is_exact() {
    let (model, _) = RnnModel::train(&small_config(), &sampled(100, 9), &sampled(20, 10)).unwrap();
    let json = model.to_json().unwrap();
    let back = RnnModel::from_json(&json).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_json().unwrap(), json);
    assert!(RnnModel::from_json(&json.replace("\"rnn\"", "\"koopman\"")).is_err());
    assert!(RnnModel::from_json("{}").is_err());
}

#[test]
fn outputs_are_finite_for_any_input() {
    let (model, _) = RnnModel::train(&small_config(), &sampled(100, 11), &sampled(20, 12)).unwrap();
    for theta in [[0.0; 3], [1e6, -1e6, 3.0], [f64::MAX, 0.0, f64::MIN]] {
        let p = model.predict(&theta).to_array();
        assert!(p.iter().all(|v| v.is_finite()), "{theta:?} -> {p:?}");
    }
}

#[test]
fn huge_step_diverges() {
    let cfg = RnnConfig {
        optimizer: Optimizer::Sgd,
        learning_rate: 1e200,
        ..small_config()
    };
    let err = RnnModel::train(&cfg, &sampled(100, 13), &sampled(20, 14)).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1 }), "{err:?}");
}

#[test]
fn bad_inputs_are_rejected() {
    let ds = sampled(10, 15);
    let empty = Dataset {
        samples: Vec::new(),
        ..ds.clone()
    };
    assert!(matches!(RnnModel::train(&small_config(), &empty, &ds), Err(Error::EmptyDataset)));
    assert!(matches!(RnnModel::train(&small_config(), &ds, &empty), Err(Error::EmptyDataset)));
    let zero_epochs = RnnConfig {
        epochs: 0,
        ..small_config()
    };
    assert!(RnnModel::train(&zero_epochs, &ds, &ds).is_err());
}

