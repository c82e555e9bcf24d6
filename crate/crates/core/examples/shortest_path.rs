//! Shortest paths on the bundled house graph.
//!
//!     cargo run --example shortest_path -- hall lounge

use std::path::Path;

use pangea::navgraph::{NavPath, NavigationGraph};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/envs/house/graph.json");
    let graph = NavigationGraph::load(&std::fs::read(file)?)?;
    let mut args = std::env::args().skip(1);
    let from = args.next().unwrap_or_else(|| "hall".into());
    let to = args.next().unwrap_or_else(|| "lounge".into());

    let (meters, path) = graph.geodesic(&from, &to)?;
    println!("{from} -> {to}: {meters:.2} m via {path}");

    for (node, d) in graph.distances_from(&from)? {
        println!("  {node:<8} {d:6.2} m");
    }

    let shortcut = NavPath::new([from.as_str(), to.as_str()]);
    for v in graph.validate_path(&shortcut) {
        println!("{shortcut} is not walkable: {v}");
    }
    Ok(())
}
