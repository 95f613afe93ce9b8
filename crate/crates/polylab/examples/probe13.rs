//! Focused diagnostics for the crossover ladder.

use polylab_core::crossover::{run_crossover, CrossoverSchedule};
use polylab_core::numerics::Moments;

fn main() {
    let arg = std::env::args().nth(1).unwrap_or_default();
    let schedule = CrossoverSchedule::unit(0.5).unwrap();
    match arg.as_str() {
        "bias64" => {
            // Large-replica unbiasedness probe at the first rung.
            for seed in [111u64, 222] {
                let rungs = run_crossover(&schedule, &[64.0], 6000, seed).unwrap();
                let r = &rungs[0];
                println!(
                    "seed {seed}: t=64 mean {:.5} se {:.5} (z = {:+.2}) var {:.4} target {:.4}",
                    r.mean,
                    r.mean_se,
                    (r.mean - 1.0) / r.mean_se,
                    r.var,
                    r.var_target
                );
            }
        }
        "accept" => {
            // The acceptance computation with full printing.
            let master = polylab_core::rng::derive_seed(90_210, &[22]);
            let rungs = run_crossover(&schedule, &[64.0, 256.0, 1024.0], 2000, master).unwrap();
            for r in &rungs {
                println!(
                    "t={:>5}: n={} mean {:.5} se {:.5} (z = {:+.2}) var {:.4} se {:.4} target {:.4} ks {:?}",
                    r.entry.t,
                    r.n_particles,
                    r.mean,
                    r.mean_se,
                    (r.mean - 1.0) / r.mean_se,
                    r.var,
                    r.var_se,
                    r.var_target,
                    r.ks_prev
                );
                let m = Moments::from_slice(r.samples());
                println!("    sample var {:.4}, n = {}", m.var(), m.n());
            }
        }
        _ => eprintln!("usage: probe13 bias64|accept"),
    }
}
