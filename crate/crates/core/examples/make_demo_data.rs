//! Writes a demo schema + resident CSV pair for trying the cluster command.

use prevopt_core::dataset::synthetic_residents_csv;
use prevopt_core::pfs::FeatureSchema;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| ".".into());
    let schema = FeatureSchema::desk_default();
    std::fs::write(format!("{out}/schema.json"), schema.to_json()).unwrap();
    let csv = synthetic_residents_csv(&schema, 60, 0.3, 7);
    std::fs::write(format!("{out}/residents.csv"), csv).unwrap();
    println!("wrote {out}/schema.json and {out}/residents.csv");
}
