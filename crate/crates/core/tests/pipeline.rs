// Public-API round trip: simulate, split, persist, train, checkpoint,
// sample, evaluate and discover.

use procgan::evaluation::{build_report, Provenance};
use procgan::event_log::{load_dataset, save_dataset, PreparedDataset};
use procgan::toyproc::{simulate, ToyProcessSpec};
use procgan::training::{generate_samples, train_mle, GenerateOptions, MleConfig};
use procgan::workflow::{discover, DiscoveryConfig};
use procgan::{Checkpoint, ModelKind};

#[test]
fn toy_log_through_the_whole_pipeline() {
    let spec = ToyProcessSpec::toy6(3);
    let sim = simulate(&spec, 200).unwrap();
    let data = PreparedDataset::prepare(&sim.traces, 3, None).unwrap();
    assert_eq!(data.train.len() + data.valid.len() + data.test.len(), 200);

    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &data).unwrap();
    let reloaded = load_dataset(dir.path()).unwrap();
    assert_eq!(reloaded.vocabulary, data.vocabulary);
    assert_eq!(reloaded.max_len, data.max_len);
    assert_eq!(reloaded.test, data.test);

    let cfg = MleConfig { max_epochs: 3, hidden_dim: 16, ..MleConfig::default() };
    let out = train_mle(&data.encoded("train").unwrap(), &data.encoded("valid").unwrap(), ModelKind::Gru, &cfg).unwrap();
    assert!(!out.log.is_empty());

    let path = dir.path().join("gru.ckpt");
    out.checkpoint.save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.kind, ModelKind::Gru);

    let a = generate_samples(&ck, 50, 11, GenerateOptions::default()).unwrap();
    let b = generate_samples(&ck, 50, 11, GenerateOptions::default()).unwrap();
    assert_eq!(a.traces, b.traces);
    assert!(a.traces.iter().all(|t| t.len() <= data.max_len));

    let report = build_report(&data.test, &a.traces, &data.vocabulary, None, &Provenance::default()).unwrap();
    assert_eq!(report.n_synthetic, 50);
    assert_eq!(report.n_empty_synthetic, a.empty);
    assert!(report.occurrence_distance.is_finite() && report.occurrence_distance >= 0.0);

    let found = discover(&sim.traces, &DiscoveryConfig::default()).unwrap();
    assert_eq!(found.consensus.activities, spec.backbone);
}
