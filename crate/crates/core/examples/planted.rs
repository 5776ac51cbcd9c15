//! Runs every model on the planted-structure dataset and prints the test table.
//!
//! `cargo run --release -p ggcnn-core --example planted [epochs]`

use std::time::Instant;

use ggcnn_core::evalbench::{evaluate_model, generate_synthetic, Comparison, ModelKind, Space, SyntheticSpec};
use ggcnn_core::train::{PreparedData, TrainConfig};
use ggcnn_core::SplitSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let spec = SyntheticSpec::default();
    let data = generate_synthetic(&spec)?;
    let cfg = TrainConfig { epochs, ..Default::default() };
    let prepared = PreparedData::new(&data.features, &data.demand, &data.adjacency, &SplitSpec::default(), cfg.validation_fraction)?;
    let mut cmp = Comparison::default();
    for kind in ModelKind::ALL {
        let started = Instant::now();
        let e = evaluate_model(kind, &prepared, &cfg, None)?;
        eprintln!("{:<12} {:>8.1}s", kind.name(), started.elapsed().as_secs_f64());
        cmp.reports.push(e.scaled);
        cmp.reports.push(e.counts);
    }
    print!("{}", cmp.render_table(Space::Scaled));
    println!();
    print!("{}", cmp.render_table(Space::Counts));
    Ok(())
}
