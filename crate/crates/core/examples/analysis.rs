//! Oracle easy/hard split, the three training-group compositions, and how well
//! each metric finds the truly hard classes.

use hardboost::base::BaseParams;
use hardboost::bench::{make_benchmark, BenchmarkSpec};
use hardboost::eval::{contrastive_analysis, identification_quality, oracle_split, GroupSpec, Setting};
use hardboost::hardness::identify_ss;
use hardboost::models::BaseKind;

fn main() -> hardboost::Result<()> {
    let b = make_benchmark(&BenchmarkSpec::standard(5))?;
    let bundle = &b.bundle;
    let params = BaseParams {
        n_unseen: 100,
        ..BaseParams::default()
    };

    let (oracle, baseline) = oracle_split(bundle, BaseKind::Generative, &params, 0)?;
    println!("oracle hard: {:?}", oracle.hard.iter().map(|c| c.as_str()).collect::<Vec<_>>());
    println!("baseline ACC_U {:.4}", baseline.acc_u);

    for group in GroupSpec::ALL {
        let r = contrastive_analysis(bundle, &oracle, Setting::Inductive, BaseKind::Generative, group, 50, &params, 0)?;
        println!("{group:?}: ACC_U {:.4}", r.acc_u);
    }

    let ss = identify_ss(&bundle.semantics, &bundle.split, oracle.hard.len())?;
    let q = identification_quality(&ss.hard, &baseline, &bundle.split)?;
    println!("SS recall of oracle-hard {:.2}, APA hard {:?} easy {:?}", q.recall_of_true_hard, q.apa_hard, q.apa_easy);
    Ok(())
}
