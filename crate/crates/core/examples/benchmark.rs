//! Builds a planted benchmark and shows that semantic similarity recovers the
//! planted hard classes.

use hardboost::bench::{make_benchmark, BenchmarkSpec};
use hardboost::hardness::identify_ss;

fn main() -> hardboost::Result<()> {
    let spec = BenchmarkSpec::standard(7);
    let b = make_benchmark(&spec)?;
    let bundle = &b.bundle;
    println!(
        "seen {} unseen {} train rows {} test rows {} (accepted on attempt {})",
        bundle.split.seen().len(),
        bundle.split.unseen_count(),
        bundle.train_seen.len(),
        bundle.test_unseen.len(),
        b.truth.attempt
    );
    for (u, s) in &b.truth.pairs {
        println!("planted pair {u} ~ {s}");
    }

    let ss = identify_ss(&bundle.semantics, &bundle.split, b.truth.planted.len())?;
    println!("SS top-{}: {:?}", ss.k, ss.hard.iter().map(|c| c.as_str()).collect::<Vec<_>>());
    let hit = ss.hard.iter().filter(|c| b.truth.planted.contains(c)).count();
    println!("recall {hit}/{}", b.truth.planted.len());
    Ok(())
}
