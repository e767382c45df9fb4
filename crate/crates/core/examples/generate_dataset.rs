//! Simulates a few operator datasets and writes them to disk.
use std::path::PathBuf;

use iconcl::dataset::{
    generate_operator_datasets, read_dataset, sample_training_fluxes, write_dataset,
    GenerationConfig,
};

fn main() -> iconcl::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("iconcl_dataset_example"));
    let cfg = GenerationConfig::desk();
    let fluxes = sample_training_fluxes(3, 42);
    for ds in generate_operator_datasets(&fluxes, &cfg, 42) {
        let dir = out.join(format!("op_{:05}", ds.id));
        write_dataset(&ds, &cfg, &dir)?;
        let back = read_dataset(&dir)?;
        println!(
            "{}: flux {}, tau {}, {} pairs of {} cells, {} records of {} frames",
            dir.display(),
            back.operator.flux,
            back.operator.stride,
            back.pairs.len(),
            back.n(),
            back.records.len(),
            back.records.first().map_or(0, |r| r.len()),
        );
    }
    Ok(())
}
