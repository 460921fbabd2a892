use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::{ExperimentOutput, HistogramRow, StrategyRow, SummaryTable};
use crate::policy::EpisodeResult;

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_results_csv<W: io::Write>(
    out: W,
    records: &[EpisodeResult],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a results file written by [`write_results_csv`].
pub fn read_results_csv<R: io::Read>(input: R) -> Result<Vec<EpisodeResult>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn write_histogram_csv<W: io::Write>(out: W, rows: &[HistogramRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_strategy_csv<W: io::Write>(out: W, rows: &[StrategyRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Fixed-width table with one line per (policy, material) cell.
pub fn format_table(summary: &SummaryTable) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "experiment {}  trials {}  objects {}  base_seed {}",
        summary.experiment, summary.n_trials, summary.n_objects, summary.base_seed
    );
    let _ = writeln!(
        s,
        "{:<16} {:<14} {:>6} {:>8} {:>8} {:>9} {:>10} {:>8} {:>8}",
        "policy", "material", "n", "open%", "single%", "insert%", "contain%", "full%", "actions"
    );
    for c in &summary.cells {
        let single = c.single_layer.rate.map_or_else(|| "-".to_string(), pct);
        let _ = writeln!(
            s,
            "{:<16} {:<14} {:>6} {:>8} {:>8} {:>9} {:>10} {:>8} {:>8.2}",
            c.policy.name(),
            c.material.name(),
            c.n,
            pct(c.flatten.value()),
            single,
            pct(c.mean_inserted_frac),
            pct(c.mean_contained_frac),
            pct(c.full_success.value()),
            c.mean_actions
        );
    }
    s
}

fn to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Writes `results.csv`, `summary.json` and `table.txt` into `dir`.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv_bytes = Vec::new();
    write_results_csv(&mut csv_bytes, &output.records).map_err(to_io)?;
    fs::write(dir.join("results.csv"), csv_bytes)?;
    let mut json = serde_json::to_string_pretty(&output.summary).map_err(io::Error::other)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    fs::write(dir.join("table.txt"), format_table(&output.summary))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagsim::MaterialKind;
    use crate::policy::{FailureTag, PolicyKind};

    fn sample() -> Vec<EpisodeResult> {
        vec![
            EpisodeResult {
                policy: PolicyKind::SlipBagging,
                material: MaterialKind::HandBag,
                seed: u64::MAX,
                flatten_success: true,
                grasp_attempted: true,
                single_layer_success: true,
                objects_inserted: 6,
                objects_contained: 5,
                n_objects: 6,
                flatten_actions: 4,
                slip_iterations: 3,
                failure_tag: FailureTag::DInsertHit,
                wall_time_sim: 123.25,
            },
            EpisodeResult {
                policy: PolicyKind::FlingOpen,
                material: MaterialKind::Drawstring,
                seed: 0,
                flatten_success: false,
                grasp_attempted: false,
                single_layer_success: false,
                objects_inserted: 0,
                objects_contained: 0,
                n_objects: 6,
                flatten_actions: 5,
                slip_iterations: 0,
                failure_tag: FailureTag::None,
                wall_time_sim: 0.1,
            },
        ]
    }

    #[test]
    fn results_csv_round_trips_byte_identical() {
        let mut a = Vec::new();
        write_results_csv(&mut a, &sample()).unwrap();
        let text = String::from_utf8(a.clone()).unwrap();
        assert!(
            text.starts_with("policy,material,seed,flatten_success,"),
            "{text}"
        );
        assert!(text.contains("slip_bagging,handbag,18446744073709551615,true"));
        assert!(text.contains(",D_insert_hit,123.25"));
        let back = read_results_csv(a.as_slice()).unwrap();
        assert_eq!(back, sample());
        let mut b = Vec::new();
        write_results_csv(&mut b, &back).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_rows_are_errors() {
        let mut a = Vec::new();
        write_results_csv(&mut a, &sample()).unwrap();
        let text = String::from_utf8(a).unwrap().replace("handbag", "tote_bag");
        assert!(read_results_csv(text.as_bytes()).is_err());
        assert!(read_results_csv("policy\nslip_bagging\n".as_bytes()).is_err());
    }
}
