use phvae_core::config::RunConfig;
use phvae_core::data::Source;
use phvae_core::metrics;
use phvae_core::train;

// Diagnostic: where do the S-trends live? Check loss at several epochs
// (training-speed effect) for tied and per-branch encoders.
fn main() {
    for tied in [false, true] {
        for a in [1.0, 5.0] {
            println!("--- tied={tied} A={a}");
            for seed in 1..=3u64 {
                for s in [1usize, 2, 3] {
                    let mut run = RunConfig::example1(Source::Uniform);
                    run.model.tied_encoders = tied;
                    run.model.branches = s;
                    run.model.amplitude = a;
                    run.model.seed = seed;
                    run.optimizer.epochs = 400;
                    let outcome = train::train::<f64>(&run).unwrap();
                    let r = &outcome.report.epochs;
                    let recon = train::reconstruct(&run.model, &outcome.params, &outcome.dataset.samples, a, 20, seed).unwrap();
                    let d = metrics::histogram_density(&metrics::pool(&recon), 20, (0.0, 1.0)).unwrap();
                    let truth = metrics::histogram_density(&metrics::pool(&outcome.dataset.samples), 20, (0.0, 1.0)).unwrap();
                    let l1 = metrics::l1_density_distance(&d, &truth).unwrap();
                    println!("  seed{seed} S={s}: e10 {:.2} e50 {:.2} e100 {:.2} e200 {:.2} e400 {:.2} | L1@400 {:.3}",
                        r[9].loss.total, r[49].loss.total, r[99].loss.total, r[199].loss.total, r[399].loss.total, l1);
                }
            }
        }
    }
}
