//! Built-in verification: gradient checks against central finite
//! differences, divergence identities, and an in-memory IDX round-trip.
//! Everything runs in process and writes no files.

use phvae_core::autodiff::{grad_check, Activation, Tape};
use phvae_core::data::{idx, polynomial_expand};
use phvae_core::error::Error;
use phvae_core::loss;
use phvae_core::model::{self, GaussianLatentStats, ModelConfig};
use phvae_core::rng::Rng;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn full_loss_grad_error(branches: usize, amplitude: f64, seed: u64) -> f64 {
    let cfg = ModelConfig {
        input_dim: 4,
        hidden_dim: 8,
        latent_dim: 3,
        branches,
        amplitude,
        encoder_activation: Activation::Relu,
        decoder_activation: Activation::Sigmoid,
        decoder_hidden_dim: None,
        tied_encoders: false,
        seed,
    };
    let params = model::init_params::<f64>(&cfg).unwrap();
    let mut rng = Rng::new(seed ^ 0x5EED);
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..cfg.input_dim).map(|_| rng.next_f64()).collect())
        .collect();
    let batch = polynomial_expand(&rows, cfg.branches).unwrap();
    let eps: Vec<Vec<f64>> = (0..rows.len())
        .map(|_| (0..cfg.latent_dim).map(|_| rng.standard_normal()).collect())
        .collect();

    let eval = |theta: &[f64]| -> (f64, Option<Vec<f64>>) {
        let mut p = params.clone();
        p.assign_from_flat(theta).unwrap();
        let mut tape = Tape::<f64>::new();
        let handles = model::register_params(&mut tape, &p).unwrap();
        let forwards =
            model::forward_batch_with_eps(&mut tape, &cfg, &handles, &batch, &eps).unwrap();
        let lg = loss::graph::total_loss(&mut tape, &forwards, batch.target()).unwrap();
        let value = tape.value_scalar(&lg.total);
        tape.backward(&lg.total).unwrap();
        let grads = model::collect_grads(&tape, &handles);
        (value, Some(grads.concat()))
    };

    let theta = params.to_flat();
    let (_, analytic) = eval(&theta);
    grad_check(|t| eval(t).0, &analytic.unwrap(), &theta, 1e-5)
}

pub fn run() -> Result<(), Error> {
    let mut checks = Vec::new();

    // Gradient checks over a few model shapes.
    let mut worst = 0.0f64;
    for (s, a, seed) in [(1, 0.0, 11), (2, 1.0, 12), (3, 3.0, 13)] {
        worst = worst.max(full_loss_grad_error(s, a, seed));
    }
    checks.push(Check {
        name: "gradient check (full loss, S in {1,2,3})",
        passed: worst < 1e-4,
        detail: format!("max relative error {worst:.3e} (tolerance 1e-4)"),
    });

    // Divergence identities on random stats.
    let mut rng = Rng::new(99);
    let mut max_residual = 0.0f64;
    for _ in 0..200 {
        let branches = 1 + rng.index(4);
        let per_branch: Vec<(Vec<f64>, Vec<f64>)> = (0..branches)
            .map(|_| {
                let mu: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
                let lv: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
                (mu, lv)
            })
            .collect();
        let stats = GaussianLatentStats::from_branches(per_branch).unwrap();
        let ph = loss::ph_divergence(&stats).unwrap();
        let (mi, base) = loss::mi_decomposition(&stats).unwrap();
        let mean_kl = stats
            .per_branch
            .iter()
            .map(|(m, lv)| loss::kl_gaussian_standard(m, lv).unwrap())
            .sum::<f64>()
            / stats.branch_count() as f64;
        max_residual = max_residual
            .max((ph - mean_kl).abs())
            .max((ph - mi - base).abs());
    }
    checks.push(Check {
        name: "divergence identities (ph = mean KL = mi + base)",
        passed: max_residual < 1e-10,
        detail: format!("max residual {max_residual:.3e} (tolerance 1e-10)"),
    });

    // KL reference values.
    let kl0: f64 = loss::kl_gaussian_standard(&[0.0], &[0.0]).unwrap();
    let kl_mean: f64 = loss::kl_gaussian_standard(&[1.0], &[0.0]).unwrap();
    let kl_var: f64 = loss::kl_gaussian_standard(&[0.0], &[4.0f64.ln()]).unwrap();
    let expect_var = 0.5 * (3.0 - 4.0f64.ln());
    let kl_ok = kl0 == 0.0 && (kl_mean - 0.5).abs() < 1e-12 && (kl_var - expect_var).abs() < 1e-9;
    checks.push(Check {
        name: "KL closed-form reference values",
        passed: kl_ok,
        detail: format!("KL(0,0)={kl0}, KL(1,0)={kl_mean}, KL(0,ln4)={kl_var}"),
    });

    // IDX round-trip, entirely in memory.
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&idx::IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&2u32.to_be_bytes());
    bytes.extend_from_slice(&2u32.to_be_bytes());
    bytes.extend_from_slice(&2u32.to_be_bytes());
    bytes.extend_from_slice(&[0, 64, 128, 255, 17, 34, 51, 68]);
    let idx_ok = match idx::parse_idx_images::<f64>(&bytes) {
        Ok(images) => idx::write_idx_images(&images) == bytes,
        Err(_) => false,
    };
    checks.push(Check {
        name: "IDX parse -> write -> parse byte stability",
        passed: idx_ok,
        detail: format!("{} bytes", bytes.len()),
    });

    let mut all_ok = true;
    for check in &checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {}: {}", check.name, check.detail);
        all_ok &= check.passed;
    }
    if all_ok {
        println!("selfcheck: all {} checks passed", checks.len());
        Ok(())
    } else {
        let failed: Vec<&str> = checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        Err(Error::Verification(failed.join(", ")))
    }
}
