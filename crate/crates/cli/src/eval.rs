use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use dprfs::baselines::pool_labels;
use dprfs::eval::{partition_matching, rate_report};
use dprfs::sampler::PosteriorSummary;
use dprfs::synth;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset the fit was run on; labels enable accuracy and rate matching.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory written by `fit` (one chain).
    #[arg(long)]
    pub fit: PathBuf,
    /// Output directory for metrics.json, k_trace.csv and rates.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Deserialize)]
struct Assignments {
    method: String,
    unit: String,
    assignments: Vec<usize>,
}

#[derive(Deserialize)]
struct SummaryFile {
    config: Value,
    summary: Value,
}

/// `(sweep, K)` pairs from a trace CSV.
fn read_k_trace(path: &std::path::Path) -> CliResult<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("sweep,k,eta,loglik") {
        return Err(CliError::at(path, "expected header sweep,k,eta,loglik"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut fields = line.split(',');
            let mut next = || -> Option<usize> { fields.next()?.parse().ok() };
            match (next(), next()) {
                (Some(sweep), Some(k)) => Ok((sweep, k)),
                _ => Err(CliError::at(path, format!("line {}: malformed row {line:?}", i + 2))),
            }
        })
        .collect()
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let dataset = synth::read_dataset(&args.data).map_err(|e| CliError::at(&args.data, e))?;
    let assignments_path = args.fit.join("assignments.json");
    let assignments: Assignments = io::read_json(&assignments_path)?;
    let summary_path = args.fit.join("summary.json");
    let summary_file: SummaryFile = io::read_json(&summary_path)?;
    let k_trace = read_k_trace(&args.fit.join("trace.csv"))?;

    let truth = match (assignments.unit.as_str(), &dataset.labels) {
        (_, None) => None,
        ("set", Some(labels)) => Some(labels.clone()),
        ("point", Some(labels)) => Some(pool_labels(&dataset.patterns, labels)?),
        (unit, _) => return Err(CliError::at(&assignments_path, format!("unknown unit {unit:?}"))),
    };
    let expected = match assignments.unit.as_str() {
        "set" => dataset.patterns.len(),
        _ => dataset.patterns.iter().map(|p| p.len()).sum(),
    };
    if assignments.assignments.len() != expected {
        return Err(CliError::Input(format!(
            "{} has {} assignments but {} holds {expected} {}s",
            assignments_path.display(),
            assignments.assignments.len(),
            args.data.display(),
            assignments.unit
        )));
    }

    let mut metrics = Map::new();
    metrics.insert("method".into(), Value::from(assignments.method.clone()));
    metrics.insert("unit".into(), Value::from(assignments.unit.clone()));
    metrics.insert("num_items".into(), Value::from(expected));
    metrics.insert("fit_config".into(), summary_file.config.clone());
    metrics.insert(
        "final_k".into(),
        Value::from(assignments.assignments.iter().collect::<std::collections::BTreeSet<_>>().len()),
    );
    metrics.insert("k_mode".into(), summary_file.summary.get("k_mode").cloned().unwrap_or(Value::Null));

    let matching = truth
        .as_ref()
        .map(|t| partition_matching(&assignments.assignments, t))
        .transpose()?;
    if let Some(m) = &matching {
        metrics.insert("accuracy".into(), Value::from(m.accuracy));
    }

    io::ensure_dir(&args.out)?;
    io::write_csv(
        &args.out.join("k_trace.csv"),
        "sweep,k",
        k_trace.iter().map(|(s, k)| format!("{s},{k}")),
    )?;

    // Rates exist only for set-level fits.
    let posterior: Option<PosteriorSummary> = (assignments.unit == "set")
        .then(|| serde_json::from_value(summary_file.summary.clone()))
        .transpose()
        .map_err(|e| CliError::at(&summary_path, e))?;
    if let Some(summary) = &posterior {
        let cluster_rates: Vec<Value> = summary
            .clusters
            .iter()
            .map(|c| json!({ "cluster": c.label, "member_count": c.member_count, "rate": c.mean_rate, "degenerate": c.degenerate }))
            .collect();
        metrics.insert("cluster_rates".into(), Value::from(cluster_rates));
        if let (Some(m), Some(star)) = (&matching, dataset.star_config()) {
            let report = rate_report(summary, &star, m)?;
            io::write_csv(
                &args.out.join("rates.csv"),
                "component,true_rate,cluster,estimated_rate",
                report.components.iter().map(|r| {
                    let opt = |v: Option<String>| v.unwrap_or_default();
                    format!(
                        "{},{},{},{}",
                        r.component,
                        r.true_rate,
                        opt(r.cluster.map(|c| c.to_string())),
                        opt(r.estimated_rate.map(|v| v.to_string()))
                    )
                }),
            )?;
            metrics.insert("rate_report".into(), serde_json::to_value(&report)?);
        }
    }
    if let Some(m) = &matching {
        let pairs: BTreeMap<usize, usize> = m.pairs.iter().map(|p| (p.truth, p.predicted)).collect();
        metrics.insert("matching".into(), serde_json::to_value(pairs)?);
    }

    let metrics = Value::Object(metrics);
    io::write_json(&args.out.join("metrics.json"), &metrics)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}
