//! Steady-state maps over pumped fraction and pulse area, written as CSV
//! and SVG heatmaps with the `E = 1/2` threshold overlaid.
//!
//! ```text
//! cargo run --example svg_report -- /tmp/maps
//! ```

use std::fs::{self, File};
use std::path::PathBuf;

use wgdicke::experiments::run_scan_detailed;
use wgdicke::presets;
use wgdicke::report::{scan_figures, write_records_csv};

fn main() -> wgdicke::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("wgdicke-maps"), PathBuf::from);
    fs::create_dir_all(&dir)?;
    let preset = presets::find("fig3-small")?;
    for scan in &preset.scenarios {
        let outcomes = run_scan_detailed(scan, None)?;
        let records: Vec<_> = outcomes.iter().map(|o| o.record.clone()).collect();
        write_records_csv(&records, File::create(dir.join(format!("{}.csv", scan.name)))?)?;
        for (stem, svg) in scan_figures(scan, &outcomes) {
            let path = dir.join(format!("{stem}.svg"));
            fs::write(&path, svg)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
