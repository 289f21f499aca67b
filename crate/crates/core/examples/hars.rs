//! Inductive boosting: synthesize extra rows for hard classes and compare with
//! the plain generative baseline.

use hardboost::bench::{make_benchmark, BenchmarkSpec};
use hardboost::hars::{run_generative_baseline, run_hars, synthesize_hard_seen, HarsConfig};

fn main() -> hardboost::Result<()> {
    let b = make_benchmark(&BenchmarkSpec::standard(1))?;
    let config = HarsConfig {
        n_unseen: 100,
        ..HarsConfig::new(2)
    };

    let out = run_hars(&b.bundle, &config)?;
    let (_, baseline) = run_generative_baseline(&b.bundle, &config)?;

    println!("hard classes: {:?}", out.hardness.hard.iter().map(|c| c.as_str()).collect::<Vec<_>>());
    println!("synthetic rows: {} seen interpolations, {} unseen", out.seen_synth_rows, out.unseen_synth_rows);

    let bundle = &b.bundle;
    let synth = synthesize_hard_seen(
        &bundle.train_seen,
        &bundle.semantics,
        &bundle.split,
        &out.hardness.hard,
        config.alpha,
        config.support,
        config.seed,
    )?;
    if let Some(row) = synth.rows().first() {
        println!("first row provenance: {:?}", row.provenance);
    }
    let acc = |r: &Option<hardboost::eval::EvalReport>| r.as_ref().map_or(f64::NAN, |r| r.acc_u);
    println!("ACC_U baseline {:.4}  boosted {:.4}", acc(&baseline), acc(&out.report));
    Ok(())
}
