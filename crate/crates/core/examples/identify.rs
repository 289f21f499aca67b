//! Compares the three hardness metrics on a class-imbalanced benchmark.

use hardboost::base::{fit_predict, BaseParams};
use hardboost::bench::{make_benchmark, BenchmarkSpec};
use hardboost::hardness::{identify_cf, identify_ss};
use hardboost::models::BaseKind;
use hardboost::ClassId;

fn main() -> hardboost::Result<()> {
    let b = make_benchmark(&BenchmarkSpec::standard(3).unbalanced())?;
    let bundle = &b.bundle;
    let k = 2;

    let unseen: Vec<ClassId> = bundle.split.unseen().iter().cloned().collect();
    let rows: Vec<Vec<f64>> = (0..bundle.test_unseen.len()).map(|i| bundle.test_unseen.row_f64(i)).collect();
    let preds = fit_predict(
        BaseKind::Embedding,
        &bundle.train_seen.samples(),
        &bundle.semantics,
        &unseen,
        &rows,
        &BaseParams::default(),
        0,
    )?;

    let ss = identify_ss(&bundle.semantics, &bundle.split, k)?;
    let cf = identify_cf(&preds, &bundle.split, k, None)?;
    let priors = bundle.class_priors.as_ref().expect("benchmarks carry priors");
    let pncf = identify_cf(&preds, &bundle.split, k, Some(priors))?;

    println!("shrunken class: {:?}", b.truth.shrunken);
    println!("{:<6} {:>8} {:>8} {:>8}", "class", "ss", "cf", "pncf");
    for c in &unseen {
        println!(
            "{:<6} {:>8.4} {:>8.0} {:>8.3}",
            c.as_str(),
            ss.scores[c],
            cf.scores[c],
            pncf.scores[c]
        );
    }
    for r in [&ss, &cf, &pncf] {
        println!("{:?} hard: {:?}", r.metric, r.hard.iter().map(|c| c.as_str()).collect::<Vec<_>>());
    }
    Ok(())
}
