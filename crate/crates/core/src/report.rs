//! CSV and JSON renderings of an [`EfficiencyReport`].

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::study::EfficiencyReport;

pub const NOT_ESTIMABLE: &str = "NOT-ESTIMABLE";

pub const CSV_HEADER: [&str; 6] = [
    "design",
    "space",
    "correlation",
    "target",
    "min_eff",
    "median_eff",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| NOT_ESTIMABLE.to_string(), |x| x.to_string())
}

pub fn write_csv<W: Write>(report: &EfficiencyReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let target = report.target.to_string();
    for d in &report.designs {
        w.write_record([
            d.name.as_str(),
            report.space.as_str(),
            report.correlation.as_str(),
            target.as_str(),
            &cell(d.min_eff),
            &cell(d.median_eff),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(report: &EfficiencyReport) -> String {
    let mut buf = Vec::new();
    write_csv(report, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    version: &'static str,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    generated_unix: u64,
    #[serde(flatten)]
    report: &'a EfficiencyReport,
}

pub fn to_json_string(report: &EfficiencyReport) -> String {
    let doc = JsonDocument {
        version: env!("CARGO_PKG_VERSION"),
        generated_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        report,
    };
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

/// Table with four decimals, the layout used for printed summaries.
pub fn to_table(report: &EfficiencyReport) -> String {
    let mut s = format!(
        "space {}  p={}  {}  corr {}  target {}  draws {}  seed {}  m={}\n",
        report.space,
        report.periods,
        if report.carryover {
            "carryover"
        } else {
            "no-carryover"
        },
        report.correlation,
        report.target,
        report.draws,
        report.seed,
        report.eff_exponent
    );
    for d in &report.designs {
        match (d.min_eff, d.median_eff) {
            (Some(min), Some(med)) => {
                s.push_str(&format!("  {:<8} ({min:.4}, {med:.4})\n", d.name))
            }
            _ => s.push_str(&format!("  {:<8} {NOT_ESTIMABLE}\n", d.name)),
        }
        if let Some(w) = &d.mean_weights {
            let parts: Vec<String> = w
                .iter()
                .map(|x| format!("{}:{:.4}", x.sequence, x.weight))
                .collect();
            s.push_str(&format!("           mean weights {}\n", parts.join(" ")));
        }
    }
    let parts: Vec<String> = report
        .average_optimal_allocation
        .iter()
        .filter(|x| x.weight >= 5e-5)
        .map(|x| format!("{}:{:.4}", x.sequence, x.weight))
        .collect();
    s.push_str(&format!("  optimum mean weights {}\n", parts.join(" ")));
    s
}
