//! Transductive boosting: iterative pseudo-label selection balanced toward the
//! classes the model over-predicts, against a random-selection control.

use hardboost::bench::{make_benchmark, BenchmarkSpec};
use hardboost::harst::{run_harst, HarstConfig, SelectionKind};

fn main() -> hardboost::Result<()> {
    let b = make_benchmark(&BenchmarkSpec::standard(2))?;

    for selection in [SelectionKind::Hardness, SelectionKind::Random] {
        let config = HarstConfig {
            selection,
            ..HarstConfig::new(5, 2)
        };
        let out = run_harst(&b.bundle, &config)?;
        println!("{selection:?}");
        for r in &out.trace.records {
            let acc = r.eval.as_ref().map_or(f64::NAN, |e| e.acc_u);
            let hard = r
                .hardness
                .as_ref()
                .map(|h| h.hard.iter().map(|c| c.as_str().to_string()).collect::<Vec<_>>().join(","))
                .unwrap_or_default();
            println!(
                "  t={} quota={:<3} selected={:<4} ACC_U={acc:.4} hard=[{hard}]",
                r.t, r.quota, r.selected_total
            );
        }
    }
    Ok(())
}
