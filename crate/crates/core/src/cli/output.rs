//! CSV rendering. Every file starts with one `# ` header line.

use std::fs;
use std::path::Path;

use crate::controller::ClosedLoopRecord;
use crate::error::{Error, Result};
use crate::experiment::{CampaignResult, TighteningRow};
use crate::model::{NORMAL_SAMPLER_NAME, PRNG_NAME};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance line written at the top of every output file.
pub fn header_line(config_hash: Option<&str>, seed: Option<u64>, mode: Option<&str>) -> String {
    let mut line = format!(
        "# smpc {VERSION} config_sha256={} seed={} prng={PRNG_NAME} normal={NORMAL_SAMPLER_NAME}",
        config_hash.unwrap_or("none"),
        seed.map_or_else(|| "none".to_string(), |s| s.to_string()),
    );
    if let Some(mode) = mode {
        line.push_str(" mode=");
        line.push_str(mode);
    }
    line.push('\n');
    line
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Io(format!("csv: {e}"))
}

fn render<F>(header: &str, fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    fill(&mut writer).map_err(csv_error)?;
    let body = writer.into_inner().map_err(csv_error)?;
    let body = String::from_utf8(body).map_err(csv_error)?;
    Ok(format!("{header}{body}"))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn indexed(prefix: &str, count: usize) -> Vec<String> {
    if count == 1 && prefix == "u" {
        return vec!["u".into()];
    }
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// Sample time `k·dt`, rounded to nine decimals.
fn time_label(k: usize, dt: f64) -> String {
    num((k as f64 * dt * 1e9).round() / 1e9)
}

pub fn trajectory_csv(header: &str, record: &ClosedLoopRecord, dt: f64) -> Result<String> {
    let n = record.states[0].len();
    let m = record.steps.first().map_or(0, |s| s.u.len());
    let q = record.steps.first().map_or(0, |s| s.w.len());
    render(header, |w| {
        let mut columns = vec!["t".to_string()];
        columns.extend(indexed("x", n));
        columns.extend(indexed("u", m));
        columns.extend(indexed("w", q));
        columns.extend(["violated", "qp_status", "gamma_1_used"].map(String::from));
        w.write_record(&columns)?;
        for (k, x) in record.states.iter().enumerate() {
            let mut row = vec![time_label(k, dt)];
            row.extend(x.iter().map(|v| num(*v)));
            match record.steps.get(k) {
                Some(step) => {
                    row.extend(step.u.iter().map(|v| num(*v)));
                    row.extend(step.w.iter().map(|v| num(*v)));
                    row.push(flag(record.violations[k].iter().any(|v| *v)));
                    row.push(if step.relaxed { "relaxed".into() } else { step.status.as_str().into() });
                    row.push(num(step.gamma_1));
                }
                None => {
                    row.extend(std::iter::repeat_n(String::new(), m + q));
                    row.push(flag(record.violations[k].iter().any(|v| *v)));
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            w.write_record(&row)?;
        }
        Ok(())
    })
}

pub fn summary_csv(header: &str, result: &CampaignResult, p: f64) -> Result<String> {
    render(header, |w| {
        w.write_record([
            "mode",
            "p",
            "trials",
            "steps",
            "rate",
            "rate_at_risk",
            "se",
            "max_x1",
            "se_at_risk",
            "at_risk_steps",
            "relaxed_steps",
        ])?;
        w.write_record([
            result.mode.name().to_string(),
            num(p),
            result.trials.to_string(),
            result.steps.to_string(),
            num(result.overall.rate),
            num(result.at_risk.rate),
            num(result.overall.standard_error),
            num(result.max_x1()),
            num(result.at_risk.standard_error),
            result.at_risk.samples.to_string(),
            result.relaxed_steps.to_string(),
        ])
    })
}

/// Long format: one row per trial and state `x_1 … x_T`.
pub fn trials_csv(header: &str, result: &CampaignResult) -> Result<String> {
    render(header, |w| {
        w.write_record(["trial", "seed", "step", "x1", "violated", "at_risk"])?;
        for trial in &result.per_trial {
            for (t, (violated, at_risk)) in trial.violated.iter().zip(&trial.at_risk).enumerate() {
                w.write_record([
                    trial.trial.to_string(),
                    trial.seed.to_string(),
                    (t + 1).to_string(),
                    num(trial.states[t + 1][0]),
                    flag(*violated),
                    flag(*at_risk),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn tightening_csv(header: &str, rows: &[TighteningRow]) -> Result<String> {
    render(header, |w| {
        w.write_record(["p", "gaussian_factor", "cantelli_factor"])?;
        for row in rows {
            w.write_record([num(row.p), num(row.gaussian_factor), num(row.cantelli_factor)])?;
        }
        Ok(())
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}
