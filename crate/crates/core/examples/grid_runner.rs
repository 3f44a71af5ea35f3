//! A small experiment grid run end to end from a TOML string, with the
//! summary table it writes.
//!
//! cargo run --release --example grid_runner

use al_harness::{run_grid, GridConfig};

const GRID: &str = r#"
seeds = [1, 2, 3]
imbalances = [0.1]
n_batches = 8
strategies = ["random", "least_confidence"]

[datasets.synth]
source = "synthetic"
pool_size = 4000
test_size = 1000
synthetic = { size = 12000 }

[classifiers.linear]

[classifiers.linear-hinge]
loss = "hinge"
"#;

fn main() -> al_harness::Result<()> {
    let out = tempfile::tempdir().expect("temp dir");
    let mut grid = GridConfig::from_toml_str(GRID)?;
    grid.output_dir = out.path().to_path_buf();
    let report = run_grid(&grid)?;
    for p in &report.passive {
        println!("passive {} {}: {:?}", p.dataset, p.imbalance, p.f1_20k);
    }
    for e in &report.experiments {
        let row = e.row();
        println!(
            "{:<13} {:<17} F1_AL {:.4}  N_90 {}",
            row.classifier,
            row.strategy,
            row.f1_al.unwrap_or(f64::NAN),
            row.n90
        );
    }
    println!("{} curves written", report.curves.len());
    print!("{}", std::fs::read_to_string(out.path().join("summary.csv")).expect("summary written"));
    Ok(())
}
