//! Grid scans from presets: lost excitation against `N` and the `1/N`
//! scaling of the transfer time.
//!
//! ```text
//! cargo run --example parameter_scan > fig2b-small.csv
//! ```

use wgdicke::experiments::{run_scan, tsa_scaling};
use wgdicke::presets;
use wgdicke::report::write_records_csv;

fn main() -> wgdicke::Result<()> {
    let preset = presets::find("fig2b-small")?;
    eprint!("{}", preset.describe());
    let scan = &preset.scenarios[0];
    let records = run_scan(scan, None)?;
    write_records_csv(&records, std::io::stdout().lock())?;
    let worst = records.iter().map(|r| r.bookkeeping_error()).fold(0.0, f64::max);
    eprintln!("largest bookkeeping error: {worst:.1e}");

    let fig4 = presets::find("fig4a-small")?;
    let fit = tsa_scaling(&fig4.scenarios[0], None)?;
    for (n, t) in &fit.points {
        eprintln!("N = {n:>6}: T_sa = {t:.4e}/Γ");
    }
    eprintln!("T_sa ≈ {:.3} · N^{:.3}", fit.prefactor, fit.exponent);
    Ok(())
}
