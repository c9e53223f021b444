use innovations::model::{Checkpoint, Mode, ModelConfig, ModelError, Normalization, RngState, WiaeModel};
use innovations::ndiff::{Activation, LayerSpec, Network, NetworkSpec};
use innovations::series::InnovationsSequence;
use innovations::TimeSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn delta_network(window: usize, input: Activation, output: Activation) -> Network {
    let spec = NetworkSpec {
        input_transform: input,
        layers: vec![LayerSpec::conv(1, 1, window, output)],
        window,
        outputs: 1,
    };
    let mut net = Network::zeros(spec).unwrap();
    let mut kernel = vec![0.0; window];
    kernel[0] = 1.0;
    net.params_mut().set("layer0.weight", &kernel).unwrap();
    net
}

fn identity_model(k: usize) -> WiaeModel {
    WiaeModel::from_networks(
        Mode::Sir,
        Normalization::identity(),
        delta_network(k + 1, Activation::Identity, Activation::Sigmoid),
        delta_network(k + 1, Activation::Logit, Activation::Identity),
    )
    .unwrap()
}

fn random_series(rng: &mut impl Rng, n: usize) -> TimeSeries {
    TimeSeries::new((0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
}

#[test]
fn identity_autoencoder_reproduces_its_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let model = identity_model(4);
    let x = random_series(&mut rng, 200);
    let xh = model.reconstruct(&x).unwrap();
    for (a, b) in xh.values().iter().zip(x.values()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn reconstruction_preserves_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let model = WiaeModel::new(ModelConfig { k: 5, embed: 3, hidden: 6, depth: 1 }, Mode::Wir, Normalization::identity(), 1).unwrap();
    for _ in 0..30 {
        let n = rng.random_range(1..=1000);
        let x = random_series(&mut rng, n);
        assert_eq!(model.encode_sequence(&x).unwrap().len(), n);
        assert_eq!(model.reconstruct(&x).unwrap().len(), n);
    }
}

#[test]
fn encoder_and_decoder_are_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let model = WiaeModel::new(ModelConfig { k: 4, embed: 3, hidden: 5, depth: 1 }, Mode::Sir, Normalization::identity(), 2).unwrap();
    let x = random_series(&mut rng, 60);
    let v = model.encode_sequence(&x).unwrap();
    let xh = model.decode_sequence(&v).unwrap();
    for t in [0, 10, 33, 58] {
        let mut y = x.values().to_vec();
        y[t + 1] += 1.0;
        let w = model.encode_sequence(&TimeSeries::new(y)).unwrap();
        assert_eq!(w.values()[..=t], v.values()[..=t]);
        let mut u = v.values().to_vec();
        u[t + 1] = 1.0 - u[t + 1];
        let uh = model.decode_values(&u).unwrap();
        assert_eq!(uh.values()[..=t], xh.values()[..=t]);
    }
    // Window truncation: more than k lags back does not matter.
    let mut y = x.values().to_vec();
    y[..20].iter_mut().for_each(|s| *s = -*s);
    let w = model.encode_sequence(&TimeSeries::new(y)).unwrap();
    assert_eq!(w.values()[24..], v.values()[24..]);
}

#[test]
fn innovations_stay_in_unit_interval() {
    let model = WiaeModel::new(ModelConfig::default(), Mode::Wir, Normalization::new(-1e-3, 1e-3).unwrap(), 3).unwrap();
    let x = TimeSeries::new(vec![1e6, -1e6, 0.0, 1e300, -1e300, 42.0]);
    let v = model.encode_sequence(&x).unwrap();
    assert!(v.values().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn bad_inputs_are_rejected() {
    let model = identity_model(2);
    assert!(matches!(
        model.encode_sequence(&TimeSeries::new(vec![0.0, f64::NAN])),
        Err(ModelError::NonFinite { index: 1 })
    ));
    assert!(matches!(model.decode_values(&[0.5, 1.5]), Err(ModelError::OutOfRange(_))));
    assert!(InnovationsSequence::new(vec![-0.1], innovations::series::InnovationsKind::Pseudo).is_err());
    assert!(matches!(model.encode_sequence(&TimeSeries::new(vec![])), Err(ModelError::EmptySequence)));
    assert!(matches!(Normalization::fit(&[2.0, 2.0]), Err(ModelError::DegenerateNormalization { .. })));
}

#[test]
fn networks_must_agree() {
    let enc = delta_network(3, Activation::Identity, Activation::Sigmoid);
    let dec = delta_network(4, Activation::Logit, Activation::Identity);
    assert!(matches!(
        WiaeModel::from_networks(Mode::Sir, Normalization::identity(), enc, dec.clone()),
        Err(ModelError::WindowMismatch { encoder: 3, decoder: 4 })
    ));
    let unbounded = delta_network(4, Activation::Identity, Activation::Identity);
    assert!(matches!(
        WiaeModel::from_networks(Mode::Sir, Normalization::identity(), unbounded, dec),
        Err(ModelError::EncoderRange)
    ));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let model = WiaeModel::new(ModelConfig { k: 6, ..Default::default() }, Mode::Wir, Normalization::new(-3.7, 12.1).unwrap(), 5).unwrap();
    let x = random_series(&mut rng, 300);
    let _: u64 = rng.random();
    let path = dir.path().join("ck.json");
    Checkpoint::new(model.clone(), Some(RngState::capture(44, &rng))).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.model, model);
    assert_eq!(back.model.encode_sequence(&x).unwrap(), model.encode_sequence(&x).unwrap());
    let mut resumed = back.rng.unwrap().restore().unwrap();
    assert_eq!(resumed.random::<u64>(), rng.random::<u64>());
}

#[test]
fn checkpoint_rejects_unknown_format_and_bad_layout() {
    let model = identity_model(1);
    let text = Checkpoint::new(model, None).to_json().unwrap();
    let future = text.replacen("\"format\": 1", "\"format\": 9", 1);
    assert!(matches!(Checkpoint::from_json(&future), Err(ModelError::Format(9))));
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["model"]["decoder"]["params"]["entries"][0]["values"] = serde_json::json!([1.0]);
    value["model"]["decoder"]["params"]["entries"][0]["shape"] = serde_json::json!([1, 1, 1]);
    assert!(Checkpoint::from_json(&value.to_string()).is_err());
}
