// Throwaway calibration harness; deleted before the suite is finalized.

use std::time::Instant;

use genophen::model::ModelConfig;
use genophen::synth::{generate, SynthConfig};
use genophen::traineval::{make_split, prepare_fold, rmse, train, SplitMode, TrainSchedule};

fn ge_config(seed: u64, interactions: usize) -> SynthConfig {
    SynthConfig {
        hybrids: 500,
        envs: 20,
        snps: 100,
        causal: 8,
        interactions,
        beta_scale: if interactions > 0 { 0.3 } else { 1.0 },
        gamma_scale: if interactions > 0 { 0.1 } else { 0.3 },
        delta_scale: 1.0,
        noise_std: 1.0,
        obs_density: 0.4,
        center_summaries: true,
        seed,
        ..SynthConfig::default()
    }
}

fn model_config() -> ModelConfig {
    ModelConfig {
        snp_count: 100,
        filters: 4,                 // d = 12
        weather_conv: vec![12, 16], // d_w = 16
        soil_dims: vec![12, 8],
        mgmt_dims: vec![8, 8],
        fusion_dims: vec![32],
        dropout: 0.1,
        ..ModelConfig::default()
    }
}

fn run_one(seed: u64, interactions: usize) -> (f64, f64) {
    let output = generate(&ge_config(seed, interactions)).unwrap();
    let obs = output.dataset.sorted_observations();
    let plan = make_split(&obs, SplitMode::Environment, None, 0, 10, seed).unwrap();
    let run = &plan.runs()[0];
    let (train_idx, val_idx, test_idx) = plan.split_observations(&obs, run).unwrap();
    let ids: Vec<String> = output.dataset.genotypes.snps.iter().map(|s| s.id.clone()).collect();
    let cfg = model_config();
    let data = prepare_fold(
        &output.dataset,
        &obs,
        &train_idx,
        &val_idx,
        &test_idx,
        &ids,
        &cfg,
        "ge",
    )
    .unwrap();
    let schedule = TrainSchedule {
        batch_size: 64,
        max_epochs: 12,
        patience: 12,
        learning_rate: 3e-3,
    };
    let mut out = [0.0, 0.0];
    for (i, variant) in [genophen::model::Variant::Full, genophen::model::Variant::NoGe]
        .iter()
        .enumerate()
    {
        let vcfg = cfg.clone().with_variant(*variant);
        let t0 = Instant::now();
        let outcome = train(&data, &vcfg, &schedule, seed, "ge").unwrap();
        let preds = data.predict(&data.val, &outcome.params, &vcfg, 64).unwrap();
        let truth: Vec<f64> = data.val.iter().map(|r| r.y_scaled).collect();
        out[i] = rmse(&preds, &truth);
        eprintln!(
            "  seed {seed} I={interactions} {}: val_rmse(scaled) {:.4} best_epoch {} epochs {} [{:.1}s]",
            variant.label(),
            out[i],
            outcome.best_epoch,
            outcome.history.len(),
            t0.elapsed().as_secs_f64()
        );
        for e in &outcome.history {
            eprintln!("      epoch {:2}  train_mse {:.4}  val_rmse {:.4}", e.epoch, e.train_mse, e.val_rmse);
        }
    }
    (out[0], out[1])
}

#[test]
#[ignore]
fn calibrate_ge() {
    let t0 = Instant::now();
    for seed in [101u64] {
        let (full, noge) = run_one(seed, 8);
        eprintln!("seed {seed} GxE: full {full:.4} vs no_ge {noge:.4} (ratio {:.3})", full / noge);
    }
    for seed in [101u64] {
        let (full, noge) = run_one(seed, 0);
        eprintln!("seed {seed} I=0: full {full:.4} vs no_ge {noge:.4} (ratio {:.3})", full / noge);
    }
    eprintln!("total {:.1}s", t0.elapsed().as_secs_f64());
}
