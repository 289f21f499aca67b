//! Per-class accuracy, a capped confusion matrix and the APR/AMR diagnostics.

use hardboost::base::{fit_predict, BaseParams};
use hardboost::bench::{make_benchmark, BenchmarkSpec};
use hardboost::eval::{confusion_matrix, evaluate};
use hardboost::models::BaseKind;
use hardboost::ClassId;

fn main() -> hardboost::Result<()> {
    let b = make_benchmark(&BenchmarkSpec::standard(4))?;
    let bundle = &b.bundle;
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

    let truths = bundle.test_unseen.labels();
    let report = evaluate(&preds, truths, &bundle.split)?.with_diagnostics(&bundle.semantics, &bundle.split, &[1, 2, 3])?;
    println!("ACC_U {:.4}", report.acc_u);
    for (c, a) in &report.per_class_accuracy {
        println!("  {c} {a:.3}");
    }
    println!("APR {:?}", report.apr);
    println!("AMR {:?}", report.amr);

    let m = confusion_matrix(&preds, truths, &bundle.split, Some(10), 0)?;
    print!("{}", m.to_csv());
    Ok(())
}
