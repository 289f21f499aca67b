//! Sweeps the synthesis multipliers over a few seeds and prints mean ACC_U.

use hardboost::bench::{make_benchmark, BenchmarkSpec};
use hardboost::hars::{run_hars, HarsConfig};

fn main() -> hardboost::Result<()> {
    let seeds = [0u64, 1, 2];
    let benches = seeds
        .iter()
        .map(|&s| make_benchmark(&BenchmarkSpec::standard(s)))
        .collect::<hardboost::Result<Vec<_>>>()?;

    println!("{:>5} {:>5} {:>8}", "alpha", "beta", "ACC_U");
    for alpha in [0.0, 1.0, 2.0] {
        for beta in [1.0, 2.0] {
            let mut total = 0.0;
            for (b, &seed) in benches.iter().zip(&seeds) {
                let config = HarsConfig {
                    alpha,
                    beta,
                    seed,
                    n_unseen: 100,
                    ..HarsConfig::new(2)
                };
                total += run_hars(&b.bundle, &config)?.report.map_or(0.0, |r| r.acc_u);
            }
            println!("{alpha:>5} {beta:>5} {:>8.4}", total / seeds.len() as f64);
        }
    }
    Ok(())
}
