//! Calibration run for adversarial training on the toy process:
//! `cargo run --release -p procgan-core --example toy6_calibration -- [epochs] [lr_g] [lr_d] [batch] [tau] [seed] [every] [k] [w_a|auto] [pgan|pgan_m|pgan_k] [steps_per_epoch]`
//! Trains pgan-k on 500 traces and compares 500 samples with 100 held-out
//! traces every `every` epochs, then for the equilibrium and final checkpoints.

use std::time::Instant;

use procgan::evaluation::{build_report, Provenance};
use procgan::event_log::{EncodedDataset, Trace, Vocabulary};
use procgan::toyproc::{simulate, ToyProcessSpec};
use procgan::training::{generate_samples, train_adversarial_observed, GanConfig, GanVariant, GenerateOptions};
use procgan::Checkpoint;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn report(name: &str, ck: &Checkpoint, held_out: &[Trace], vocab: &Vocabulary, seed: u64, show: usize) {
    let samples = generate_samples(ck, 500, seed, GenerateOptions::default()).unwrap();
    let r = build_report(held_out, &samples.traces, vocab, None, &Provenance::default()).unwrap();
    println!(
        "  {name:<11} epoch {:>4}: occurrence {:.3}, spe gap {:+.3}, len {:.2}±{:.2} vs {:.2}±{:.2}, empty {}",
        ck.epoch,
        r.occurrence_distance,
        r.spe_gap().unwrap_or(f64::NAN),
        r.authentic_length_mean,
        r.authentic_length_std,
        r.synthetic_length_mean.unwrap_or(f64::NAN),
        r.synthetic_length_std.unwrap_or(f64::NAN),
        r.n_empty_synthetic
    );
    for t in samples.traces.iter().take(show) {
        println!("    {}", t.activities.join(" > "));
    }
}

fn main() {
    let epochs: usize = arg(1, 300);
    let lr_g: f64 = arg(2, 1e-4);
    let lr_d: f64 = arg(3, 1e-4);
    let batch: usize = arg(4, 16);
    let tau: f64 = arg(5, 1.0);
    let seed: u64 = arg(6, 0);
    let every: usize = arg(7, 50);
    let k: usize = arg(8, 2);
    let w_a: Option<f64> = std::env::args().nth(9).and_then(|s| s.parse().ok());
    let variant = match std::env::args().nth(10).as_deref() {
        Some("pgan") => GanVariant::Pgan,
        Some("pgan_m") => GanVariant::PganM,
        _ => GanVariant::PganK,
    };
    let steps_per_epoch: Option<usize> = std::env::args().nth(11).and_then(|s| s.parse().ok());

    let train = simulate(&ToyProcessSpec::toy6(seed), 500).unwrap().traces;
    let held_out = simulate(&ToyProcessSpec::toy6(seed + 1000), 100).unwrap().traces;
    let vocab = Vocabulary::build(&train);
    let max_len = train.iter().chain(&held_out).map(|t| t.len()).max().unwrap();
    let data = EncodedDataset::encode(&train, &vocab, max_len).unwrap();

    let cfg = GanConfig {
        max_epochs: epochs,
        lr_g,
        lr_d,
        batch_size: batch,
        tau,
        seed,
        k,
        w_a,
        variant,
        steps_per_epoch,
        ..GanConfig::default()
    };
    println!("epochs {epochs} lr_g {lr_g} lr_d {lr_d} batch {batch} tau {tau} seed {seed} k {k} w_a {w_a:?} {variant:?} steps {steps_per_epoch:?}");
    let start = Instant::now();
    let out = train_adversarial_observed(&data, &data, &cfg, |rec, ck| {
        if (rec.epoch + 1) % every == 0 {
            println!(
                "  [{:.0}s] acc {:.3} window {:?} l_g {:?} aux {:?} l_d {:?}",
                start.elapsed().as_secs_f64(),
                rec.losses.d_accuracy,
                rec.window_accuracy,
                rec.losses.l_g,
                rec.losses.l_g_aux,
                rec.losses.l_d
            );
            report("current", ck, &held_out, &vocab, seed, 1);
        }
    })
    .unwrap();
    println!("done in {:.0}s, w_a {:.3}", start.elapsed().as_secs_f64(), out.w_a);
    report("equilibrium", &out.equilibrium, &held_out, &vocab, seed, 3);
    report("last", &out.last, &held_out, &vocab, seed, 3);
}
