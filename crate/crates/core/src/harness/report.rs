use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::experiment::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::param(
                "format",
                format!("unknown report format `{other}`"),
            )),
        }
    }
}

/// One point of a noise sweep as it appears in JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub density: f64,
    pub metrics: Metrics,
}

const CSV_HEADER: &str = "arm,scope,accuracy_mean,accuracy_std";

fn csv_rows(metrics: &Metrics, prefix: &str, out: &mut String) {
    for arm in &metrics.arms {
        for (k, s) in arm.per_class.iter().enumerate() {
            out.push_str(&format!(
                "{prefix}{},class_{k},{},{}\n",
                arm.arm.name(),
                s.mean,
                s.std
            ));
        }
        out.push_str(&format!(
            "{prefix}{},overall,{},{}\n",
            arm.arm.name(),
            arm.overall.mean,
            arm.overall.std
        ));
    }
}

/// Serializes experiment metrics as pretty JSON or as `arm,scope,accuracy_mean,accuracy_std` CSV.
pub fn emit_report(metrics: &Metrics, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_vec_pretty(metrics)?),
        ReportFormat::Csv => {
            let mut out = format!("{CSV_HEADER}\n");
            csv_rows(metrics, "", &mut out);
            Ok(out.into_bytes())
        }
    }
}

/// Like [`emit_report`], with a leading `density` column in CSV.
pub fn emit_sweep_report(sweep: &[(f64, Metrics)], format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let entries: Vec<SweepEntry> = sweep
                .iter()
                .map(|(density, metrics)| SweepEntry {
                    density: *density,
                    metrics: metrics.clone(),
                })
                .collect();
            Ok(serde_json::to_vec_pretty(&entries)?)
        }
        ReportFormat::Csv => {
            let mut out = format!("density,{CSV_HEADER}\n");
            for (density, metrics) in sweep {
                csv_rows(metrics, &format!("{density},"), &mut out);
            }
            Ok(out.into_bytes())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Arm;
    use crate::harness::experiment::{AccuracySummary, ArmMetrics};

    fn sample() -> Metrics {
        Metrics {
            arms: vec![ArmMetrics {
                arm: Arm::LpmDl,
                overall: AccuracySummary::from_trials(vec![0.75, 0.85]),
                per_class: vec![
                    AccuracySummary::from_trials(vec![0.9, 0.8]),
                    AccuracySummary::from_trials(vec![0.6, 0.9]),
                ],
                confusion: vec![vec![17, 3], vec![5, 15]],
            }],
        }
    }

    #[test]
    fn csv_has_one_row_per_scope() {
        let text = String::from_utf8(emit_report(&sample(), ReportFormat::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "arm,scope,accuracy_mean,accuracy_std");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("lpm_dl,class_0,"));
        assert!(lines[2].starts_with("lpm_dl,class_1,"));
        assert!(lines[3].starts_with("lpm_dl,overall,"));
    }

    #[test]
    fn json_round_trips() {
        let m = sample();
        let bytes = emit_report(&m, ReportFormat::Json).unwrap();
        let back: Metrics = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn sweep_csv_leads_with_density() {
        let text =
            String::from_utf8(emit_sweep_report(&[(0.25, sample())], ReportFormat::Csv).unwrap())
                .unwrap();
        assert!(
            text.starts_with("density,arm,scope,accuracy_mean,accuracy_std\n0.25,lpm_dl,class_0,")
        );
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
