use proptest::prelude::*;

use super::*;
use crate::event_log::{EncodedDataset, Trace, Vocabulary};
use crate::toyproc::{simulate, ToyProcessSpec};

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        n_blocks: 1,
        n_heads: 1,
        embed_dim: Some(8),
        ff_dim: Some(16),
        dropout_rate: 0.0,
        positional_encoding: true,
    }
}

fn encoded(traces: &[Trace]) -> EncodedDataset {
    let vocab = Vocabulary::build(traces);
    let max_len = traces.iter().map(Trace::len).max().unwrap();
    EncodedDataset::encode(traces, &vocab, max_len).unwrap()
}

fn toy_data(n: usize, seed: u64) -> EncodedDataset {
    encoded(&simulate(&ToyProcessSpec::toy6(seed), n).unwrap().traces)
}

fn empty_like(d: &EncodedDataset) -> EncodedDataset {
    EncodedDataset {
        sequences: Vec::new(),
        max_len: d.max_len,
        vocabulary: d.vocabulary.clone(),
    }
}

#[test]
fn generator_loss_points() {
    assert!(generator_loss(&[1.0, 1.0]).abs() < 1e-9);
    assert!((generator_loss(&[0.5; 4]) - 2f64.ln()).abs() < 1e-15);
    assert!((generator_loss(&[0.5; 4]) - 0.6931).abs() < 1e-4);
    assert!((generator_loss(&[0.5, 1.0]) - 0.3466).abs() < 1e-4);
    assert!(generator_loss(&[0.0]).is_finite());
}

#[test]
fn discriminator_loss_points() {
    assert!(discriminator_loss(&[1.0], &[0.0]).abs() < 1e-9);
    assert!((discriminator_loss(&[0.5], &[0.5]) - 4f64.ln()).abs() < 1e-15);
    assert!((discriminator_loss(&[0.5], &[0.5]) - 1.3863).abs() < 1e-4);
    let a = discriminator_loss(&[0.3, 0.9], &[0.2, 0.6]);
    // real 0.3 moved to the fake side as 0.7, fake 0.2 moved to the real side as 0.8
    let b = discriminator_loss(&[0.8, 0.9], &[0.7, 0.6]);
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn kl_aux_points() {
    assert_eq!(kl_aux_loss(&[0.2, 0.8], &[0.2, 0.8], 4), 0.0);
    let oracle = 0.25 * (0.25f64 / 0.5).ln() + 0.75 * (0.75f64 / 0.5).ln();
    let v = kl_aux_loss(&[0.5, 0.5], &[0.25, 0.75], 1);
    assert!((v - oracle).abs() < 1e-15);
    assert!((v - 0.1308).abs() < 1e-4);
    assert!((kl_aux_loss(&[0.5, 0.5], &[0.25, 0.75], 4) - oracle / 4.0).abs() < 1e-15);
}

#[test]
fn mse_aux_points() {
    assert_eq!(mse_aux_loss(&[0.5, 0.5], &[0.5, 0.5], 1), 0.0);
    assert!((mse_aux_loss(&[0.5, 0.5], &[0.25, 0.75], 1) - 0.0625).abs() < 1e-15);
    assert_eq!(
        mse_aux_loss(&[0.5, 0.5], &[0.25, 0.75], 3),
        mse_aux_loss(&[0.25, 0.75], &[0.5, 0.5], 3)
    );
}

#[test]
fn activity_distribution_skips_end_and_padding() {
    let d = batch_activity_distribution(&[vec![0, 0, 1, 3, 2], vec![2, 3, 3, 3, 3]], 3);
    assert_eq!(d, vec![0.5, 0.25, 0.25]);
    assert_eq!(batch_activity_distribution(&[vec![3, 0]], 3), vec![0.0; 3]);
}

fn dist() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, 4).prop_filter_map("nonzero", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn kl_is_non_negative(x in dist(), s in dist(), m in 1usize..8) {
        prop_assert!(kl_aux_loss(&x, &s, m) >= -1e-12);
    }

    #[test]
    fn mse_is_symmetric(x in dist(), s in dist(), m in 1usize..8) {
        prop_assert_eq!(mse_aux_loss(&x, &s, m), mse_aux_loss(&s, &x, m));
    }
}

#[test]
fn schedule_is_k_to_one() {
    let phases: Vec<Phase> = (0..9).map(|e| phase_of(e, 2)).collect();
    use Phase::*;
    assert_eq!(
        phases,
        vec![Generator, Generator, Discriminator, Generator, Generator, Discriminator, Generator, Generator, Discriminator]
    );
    assert_eq!(phase_of(1, 1), Discriminator);
}

fn record(epoch: usize, window_accuracy: Option<f64>) -> EpochRecord {
    EpochRecord {
        epoch,
        phase: Phase::Generator,
        losses: LossBundle {
            l_g: None,
            l_g_aux: None,
            l_g_total: None,
            l_d: None,
            d_accuracy: 0.0,
        },
        aux: None,
        w_a: 0.0,
        window_accuracy,
    }
}

#[test]
fn equilibrium_selection_rule() {
    let log = vec![record(0, None), record(1, Some(0.9)), record(2, Some(0.45)), record(3, Some(0.55)), record(4, Some(0.6))];
    assert_eq!(select_equilibrium(&log, 0), Some(2));
    assert_eq!(select_equilibrium(&log, 3), Some(3));
    assert_eq!(select_equilibrium(&log[..1], 0), None);
}

fn tiny_gan(variant: GanVariant, epochs: usize) -> GanConfig {
    GanConfig {
        variant,
        max_epochs: epochs,
        batch_size: 8,
        lr_g: 1e-3,
        lr_d: 1e-3,
        probe_size: 10,
        n_probe_batches: 2,
        window: 3,
        warmup_epochs: 0,
        seed: 17,
        generator: tiny_arch(),
        discriminator: tiny_arch(),
        ..GanConfig::default()
    }
}

#[test]
fn adversarial_log_follows_schedule_and_composition() {
    let train = toy_data(40, 1);
    let out = train_adversarial(&train, &train, &tiny_gan(GanVariant::PganK, 9)).unwrap();
    assert_eq!(out.log.len(), 9);
    let mut since_d = 0;
    for rec in &out.log {
        match rec.phase {
            Phase::Generator => {
                since_d += 1;
                let l = &rec.losses;
                let total = l.l_g.unwrap() + rec.w_a * l.l_g_aux.unwrap();
                assert!((l.l_g_total.unwrap() - total).abs() < 1e-9);
                assert_eq!(rec.aux, Some(AuxLoss::Kl));
            }
            Phase::Discriminator => {
                assert_eq!(since_d, 2);
                since_d = 0;
                assert!(rec.losses.l_d.is_some());
            }
        }
        assert!((0.0..=1.0).contains(&rec.losses.d_accuracy));
    }
    assert!(out.w_a > 0.0);
    let chosen = select_equilibrium(&out.log, 0).unwrap();
    assert_eq!(out.equilibrium.epoch, out.log[chosen].epoch);
    assert_eq!(out.last.epoch, 8);
    out.equilibrium.validate().unwrap();
}

#[test]
fn adversarial_training_is_deterministic() {
    let train = toy_data(24, 3);
    let cfg = tiny_gan(GanVariant::PganM, 4);
    let a = train_adversarial(&train, &empty_like(&train), &cfg).unwrap();
    let b = train_adversarial(&train, &empty_like(&train), &cfg).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.last, b.last);
    assert!(a.log.iter().all(|r| r.aux != Some(AuxLoss::Kl)));
}

#[test]
fn short_epochs_and_late_warmup() {
    let train = toy_data(40, 5);
    let cfg = GanConfig {
        steps_per_epoch: Some(1),
        warmup_epochs: 100,
        ..tiny_gan(GanVariant::PganK, 6)
    };
    let short = train_adversarial(&train, &train, &cfg).unwrap();
    assert_eq!(short.log.len(), 6);
    // No epoch reaches the warm-up, so the final state stands in.
    assert_eq!(short.equilibrium.epoch, 5);
    assert_eq!(short.equilibrium.params, short.last.params);
    let full = train_adversarial(&train, &train, &GanConfig { steps_per_epoch: None, ..cfg }).unwrap();
    assert_ne!(short.last.params, full.last.params);
}

#[test]
fn plain_variant_has_no_auxiliary_loss() {
    let train = toy_data(24, 4);
    let out = train_adversarial(&train, &empty_like(&train), &tiny_gan(GanVariant::Pgan, 3)).unwrap();
    assert_eq!(out.w_a, 0.0);
    for rec in out.log.iter().filter(|r| r.phase == Phase::Generator) {
        assert_eq!(rec.aux, None);
        assert_eq!(rec.losses.l_g_aux, None);
        assert_eq!(rec.losses.l_g_total, rec.losses.l_g);
    }
}

#[test]
fn invalid_gan_configs_are_rejected() {
    let train = toy_data(12, 0);
    for cfg in [
        GanConfig { k: 0, ..GanConfig::default() },
        GanConfig { batch_size: 0, ..GanConfig::default() },
        GanConfig { w_a: Some(-1.0), ..GanConfig::default() },
        GanConfig { tau: 0.0, ..GanConfig::default() },
        GanConfig { steps_per_epoch: Some(0), ..GanConfig::default() },
    ] {
        assert!(matches!(
            train_adversarial(&train, &train, &cfg),
            Err(TrainError::InvalidConfig(_))
        ));
    }
    let json = r#"{"variant":"pgan_k","k":2,"epochs":3}"#;
    assert!(serde_json::from_str::<GanConfig>(json).is_err());
    let json = r#"{"variant":"pgan_m","w_a":2.5}"#;
    let cfg: GanConfig = serde_json::from_str(json).unwrap();
    assert_eq!((cfg.variant, cfg.w_a, cfg.k), (GanVariant::PganM, Some(2.5), 2));
}

#[test]
fn mle_overfits_a_repeated_trace() {
    let trace = Trace::new("t", ["a", "b", "c", "b", "d"]);
    let traces: Vec<Trace> = (0..8).map(|_| trace.clone()).collect();
    let data = encoded(&traces);
    let cfg = MleConfig {
        max_epochs: 300,
        batch_size: 8,
        lr: 1e-2,
        hidden_dim: 16,
        embed_dim: 8,
        patience: 300,
        ..MleConfig::default()
    };
    let out = train_mle(&data, &empty_like(&data), ModelKind::Gru, &cfg).unwrap();
    let last = out.log.last().unwrap().train_loss;
    let best = out.log.iter().map(|e| e.train_loss).fold(f64::INFINITY, f64::min);
    assert!(best < 0.01, "best loss {best}, last {last}");
    let greedy = GenerateOptions {
        greedy: true,
        ..GenerateOptions::default()
    };
    let samples = generate_samples(&out.checkpoint, 3, 0, greedy).unwrap();
    for s in &samples.traces {
        assert_eq!(s.activities, trace.activities);
    }
}

#[test]
fn mle_trains_transformer_and_lstm() {
    let train = toy_data(30, 5);
    let cfg = MleConfig {
        max_epochs: 3,
        batch_size: 10,
        hidden_dim: 8,
        embed_dim: 4,
        arch: tiny_arch(),
        ..MleConfig::default()
    };
    for kind in [ModelKind::TransAr, ModelKind::Lstm] {
        let out = train_mle(&train, &train, kind, &cfg).unwrap();
        assert_eq!(out.log.len(), 3);
        assert!(out.log.iter().all(|e| e.valid_loss.is_some()));
        assert_eq!(out.checkpoint.kind, kind);
        out.checkpoint.validate().unwrap();
        let s = generate_samples(&out.checkpoint, 20, 1, GenerateOptions::default()).unwrap();
        assert_eq!(s.traces.len(), 20);
        assert!(s.traces.iter().all(|t| t.len() <= train.max_len));
    }
    assert!(train_mle(&train, &train, ModelKind::PganK, &cfg).is_err());
}

#[test]
fn mle_early_stops_on_validation() {
    let train = toy_data(20, 6);
    // Validation data with unrelated structure stops improving quickly.
    let valid = EncodedDataset {
        sequences: (0..10).map(|i| (0..train.max_len).map(|p| (i + p * 3) % train.vocabulary.width()).collect()).collect(),
        ..empty_like(&train)
    };
    let cfg = MleConfig {
        max_epochs: 400,
        batch_size: 10,
        lr: 1e-2,
        hidden_dim: 8,
        embed_dim: 4,
        patience: 3,
        ..MleConfig::default()
    };
    let out = train_mle(&train, &valid, ModelKind::Gru, &cfg).unwrap();
    assert!(out.log.len() < 400);
    let best = out.log.iter().min_by(|a, b| a.valid_loss.partial_cmp(&b.valid_loss).unwrap()).unwrap();
    assert_eq!(out.checkpoint.epoch, best.epoch);
    assert_eq!(out.log.len(), best.epoch + 1 + 3);
}

#[test]
fn nar_starts_near_uniform_and_learns_positional_modes() {
    // Clear positional modes: an optional activity at p = 0.2 shifts the tail.
    let mut spec = ToyProcessSpec::backbone_only(&["a", "b", "c", "d", "e"], 7);
    spec.optional_activities.push(crate::toyproc::OptionalActivity {
        name: "x".into(),
        first_point: 2,
        last_point: 2,
        probability: 0.2,
    });
    let train = encoded(&simulate(&spec, 200).unwrap().traces);
    let cfg = NarConfig {
        max_epochs: 150,
        batch_size: 20,
        lr: 5e-3,
        arch: tiny_arch(),
        ..NarConfig::default()
    };
    let out = train_nar(&train, &cfg).unwrap();
    let uniform = (train.vocabulary.width() as f64).ln();
    assert!((out.initial_loss - uniform).abs() < 0.1, "{} vs {uniform}", out.initial_loss);
    assert!(out.losses.last().unwrap() < &(uniform * 0.5));
    // Smoothed (5-epoch mean) loss never rises by more than noise.
    let smooth: Vec<f64> = out.losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    assert!(smooth.windows(2).all(|w| w[1] <= w[0] + 0.02));

    let width = train.vocabulary.width();
    let positional_modes = |seqs: &[Vec<usize>]| -> Vec<usize> {
        (0..train.max_len)
            .map(|pos| {
                let mut counts = vec![0usize; width];
                for s in seqs {
                    counts[s[pos]] += 1;
                }
                // highest count, lowest id on ties
                (0..width).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap()
            })
            .collect()
    };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
    let generated: Vec<Vec<usize>> = (0..300)
        .map(|_| {
            let z = crate::event_log::sample_random_sequence(width, train.max_len, &mut rng);
            generator_output_ids(&out.checkpoint, &z).unwrap()
        })
        .collect();
    assert_eq!(positional_modes(&generated), positional_modes(&train.sequences));
}

#[test]
fn convergence_rule() {
    assert!(!has_converged(&[1.0, 0.9], 10, 1e-4));
    let mut flat = vec![1.0; 11];
    assert!(has_converged(&flat, 10, 1e-4));
    flat[0] = 2.0;
    assert!(!has_converged(&flat, 10, 1e-4));
}

fn trained_gan() -> Checkpoint {
    let train = toy_data(24, 8);
    train_adversarial(&train, &empty_like(&train), &tiny_gan(GanVariant::PganK, 3))
        .unwrap()
        .last
}

#[test]
fn generation_counts_and_determinism() {
    let ck = trained_gan();
    let a = generate_samples(&ck, 500, 42, GenerateOptions::default()).unwrap();
    assert_eq!(a.traces.len(), 500);
    assert!(a.traces.iter().all(|t| t.len() <= ck.max_len));
    assert_eq!(a.empty, a.traces.iter().filter(|t| t.is_empty()).count());
    assert_eq!(a, generate_samples(&ck, 500, 42, GenerateOptions::default()).unwrap());
    assert_ne!(a.traces, generate_samples(&ck, 500, 43, GenerateOptions::default()).unwrap().traces);
    assert_eq!(a.traces[0].case_id, "synthetic_001");
    assert!(generate_samples(&ck, 0, 1, GenerateOptions::default()).is_err());
}

#[test]
fn checkpoint_round_trip_preserves_generation() {
    let ck = trained_gan();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.kind, ck.kind);
    assert_eq!(loaded.vocabulary, ck.vocabulary);
    for ((na, a), (nb, b)) in ck.params.iter().zip(loaded.params.iter()) {
        assert_eq!(na, nb);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*y, *x as f32 as f64);
        }
    }
    let before = generate_samples(&ck, 50, 5, GenerateOptions::default()).unwrap();
    let after = generate_samples(&loaded, 50, 5, GenerateOptions::default()).unwrap();
    assert_eq!(before, after);
    // Re-saving a loaded checkpoint is byte-stable.
    assert_eq!(loaded.to_bytes().unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn checkpoint_errors_are_distinct() {
    let ck = trained_gan();
    let bytes = ck.to_bytes().unwrap();
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic)));
    assert!(matches!(Checkpoint::from_bytes(b"PG"), Err(CheckpointError::BadMagic)));

    let cut = &bytes[..bytes.len() - 3];
    assert!(matches!(Checkpoint::from_bytes(cut), Err(CheckpointError::Truncated { .. })));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..10]), Err(CheckpointError::Truncated { .. })));

    let mut long = bytes.clone();
    long.extend_from_slice(&[0; 4]);
    assert!(matches!(Checkpoint::from_bytes(&long), Err(CheckpointError::TrailingBytes(4))));

    // Drop one tensor descriptor from the manifest.
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut manifest: serde_json::Value = serde_json::from_slice(&bytes[12..12 + len]).unwrap();
    manifest["tensors"].as_array_mut().unwrap().pop();
    let json = serde_json::to_vec(&manifest).unwrap();
    let mut edited = CHECKPOINT_MAGIC.to_vec();
    edited.extend_from_slice(&(json.len() as u32).to_le_bytes());
    edited.extend_from_slice(&json);
    edited.extend_from_slice(&bytes[12 + len..]);
    assert!(matches!(Checkpoint::from_bytes(&edited), Err(CheckpointError::ShapeMismatch(_))));

    let mut wrong = ck.clone();
    wrong.params.insert("out.b", crate::autodiff::Tensor::zeros(1, 2));
    assert!(matches!(wrong.validate(), Err(CheckpointError::ShapeMismatch(_))));
}

#[test]
fn model_kind_names_round_trip() {
    for k in ModelKind::ALL {
        assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
    }
    assert_eq!("pgan-k".parse::<ModelKind>().unwrap(), ModelKind::PganK);
    assert!("seqgan".parse::<ModelKind>().is_err());
}

#[test]
fn jsonl_has_one_record_per_line() {
    let log = vec![record(0, None), record(1, Some(0.5))];
    let mut buf = Vec::new();
    write_jsonl(&log, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let back: EpochRecord = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(back, log[1]);
    assert!(lines[0].contains("\"phase\":\"generator\""));
}
