//! Scores a few follower paths against one reference on the house graph.

use std::path::Path;

use pangea::metrics::{evaluate, summarize, EvalParams};
use pangea::navgraph::{NavPath, NavigationGraph};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/envs/house/graph.json");
    let graph = NavigationGraph::load(&std::fs::read(file)?)?;
    let reference = NavPath::new(["hall", "kitchen", "dining", "lounge"]);
    let params = EvalParams::default();

    let attempts = [
        ("ana", NavPath::new(["hall", "kitchen", "dining", "lounge"])),
        ("ana", NavPath::new(["hall", "kitchen", "study", "lounge"])),
        ("ben", NavPath::new(["hall", "stairs", "dining"])),
        ("ben", NavPath::new(["hall", "kitchen"])),
    ];
    let mut evals = Vec::new();
    for (worker, path) in attempts {
        let e = evaluate(&graph, &path, &reference, &params)?;
        println!(
            "{worker} {path}: ne {:.2} m, success {}, spl {:.3}, path sim {:.3}",
            e.ne_m, e.success, e.spl, e.path_sim
        );
        evals.push((worker.to_owned(), e));
    }
    println!("{}", serde_json::to_string_pretty(&summarize(&evals))?);
    Ok(())
}
