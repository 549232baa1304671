//! Run one suite programmatically and write JSON and CSV next to the
//! working directory. Usage: `cargo run --example run_suite -- cz`.
use orbitcz::suite::{run_suite, Suite, SuiteConfig};
use orbitcz::ReportFormat;

fn main() -> orbitcz::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "group".into());
    let suite: Suite = name.parse()?;
    let report = run_suite(suite, SuiteConfig::reference_1d())?;
    print!("{}", report.summary());
    report.emit(ReportFormat::Json, format!("{name}.json"))?;
    report.emit(ReportFormat::Csv, format!("{name}.csv"))?;
    println!("{} failures", report.failures().count());
    Ok(())
}
