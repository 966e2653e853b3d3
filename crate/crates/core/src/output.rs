//! Result files of a run or sweep.
//!
//! | file           | one row per                     |
//! |----------------|---------------------------------|
//! | `slots.csv`    | (episode, slot, user)           |
//! | `episodes.csv` | episode                         |
//! | `summary.json` | scheme, with means and orderings |
//! | `traces.csv`   | AO block solve (iterative only) |
//!
//! Rows follow the order of the metrics slice, so equal inputs give equal bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{EpisodeMetrics, Scheme};
use crate::utility::mean;

pub const SLOTS_FILE: &str = "slots.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACES_FILE: &str = "traces.csv";

#[derive(Serialize)]
struct SlotRow {
    scheme: &'static str,
    mu: f64,
    seed: u64,
    slot: usize,
    sum_rate: f64,
    user_id: u32,
    user_rate: f64,
}

#[derive(Serialize)]
struct EpisodeRow {
    scheme: &'static str,
    mu: f64,
    seed: u64,
    avg_rate_p1: f64,
    avg_rate_p2: Option<f64>,
    variance: f64,
    jain: f64,
    iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    /// Scheme label, with mu for the proposed scheme.
    pub key: String,
    pub scheme: &'static str,
    pub mu: f64,
    pub episodes: usize,
    pub avg_rate_p1: f64,
    /// `None` when no episode had a second period.
    pub avg_rate_p2: Option<f64>,
    pub variance: f64,
    pub variance_std: f64,
    pub jain: f64,
    pub iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Orderings {
    /// Highest mean period-1 rate first.
    pub avg_rate_p1: Vec<String>,
    /// Lowest mean variance first.
    pub variance: Vec<String>,
    /// Highest mean Jain index first.
    pub jain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schemes: Vec<SchemeSummary>,
    pub orderings: Orderings,
}

/// `pro-alg(mu=-2)` for the proposed scheme, the plain label otherwise.
pub fn scheme_key(scheme: Scheme) -> String {
    match scheme {
        Scheme::ProAlg { mu } => format!("{}(mu={mu})", scheme.label()),
        _ => scheme.label().to_string(),
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Per-scheme means over seeds, schemes in order of first appearance.
pub fn summarize(metrics: &[EpisodeMetrics]) -> Summary {
    let mut schemes: Vec<Scheme> = Vec::new();
    for m in metrics {
        if !schemes.contains(&m.scheme) {
            schemes.push(m.scheme);
        }
    }
    let rows: Vec<SchemeSummary> = schemes
        .iter()
        .map(|&scheme| {
            let eps: Vec<&EpisodeMetrics> = metrics.iter().filter(|m| m.scheme == scheme).collect();
            let col = |f: &dyn Fn(&EpisodeMetrics) -> f64| eps.iter().map(|m| f(m)).collect::<Vec<f64>>();
            let p2: Vec<f64> = eps.iter().filter_map(|m| m.period_averages.get(1).copied()).collect();
            let variances = col(&|m| m.variance);
            SchemeSummary {
                key: scheme_key(scheme),
                scheme: scheme.label(),
                mu: scheme.mu(),
                episodes: eps.len(),
                avg_rate_p1: mean(&col(&|m| m.period_averages[0])),
                avg_rate_p2: (!p2.is_empty()).then(|| mean(&p2)),
                variance: mean(&variances),
                variance_std: std_dev(&variances),
                jain: mean(&col(&|m| m.jain)),
                iterations: mean(&col(&|m| m.iterations() as f64)),
            }
        })
        .collect();
    let order = |key: fn(&SchemeSummary) -> f64, descending: bool| {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.sort_by(|&a, &b| {
            let o = key(&rows[a]).total_cmp(&key(&rows[b]));
            if descending {
                o.reverse()
            } else {
                o
            }
        });
        idx.into_iter().map(|i| rows[i].key.clone()).collect()
    };
    let orderings = Orderings {
        avg_rate_p1: order(|s| s.avg_rate_p1, true),
        variance: order(|s| s.variance, false),
        jain: order(|s| s.jain, true),
    };
    Summary {
        schemes: rows,
        orderings,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_slots(metrics: &[EpisodeMetrics], user_ids: &[u32], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for m in metrics {
        for (n, &sum) in m.slot_sums.iter().enumerate() {
            for (k, &id) in user_ids.iter().enumerate() {
                w.serialize(SlotRow {
                    scheme: m.scheme.label(),
                    mu: m.mu(),
                    seed: m.seed,
                    slot: n + 1,
                    sum_rate: sum,
                    user_id: id,
                    user_rate: m.user_rates[[k, n]],
                })
                .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_episodes(metrics: &[EpisodeMetrics], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for m in metrics {
        w.serialize(EpisodeRow {
            scheme: m.scheme.label(),
            mu: m.mu(),
            seed: m.seed,
            avg_rate_p1: m.period_averages[0],
            avg_rate_p2: m.period_averages.get(1).copied(),
            variance: m.variance,
            jain: m.jain,
            iterations: m.iterations(),
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_traces(metrics: &[EpisodeMetrics], path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(f, "scheme,mu,seed,call,iteration,block,objective,status").map_err(io)?;
    for m in metrics {
        for (call, t) in m.traces.iter().enumerate() {
            let prefix = format!("{},{:?},{},{},", m.scheme.label(), m.mu(), m.seed, call + 1);
            t.write_rows(&mut f, &prefix).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

/// Writes the result files into `out_dir`, creating it if needed, and
/// returns their paths. `traces.csv` is written only when some episode
/// ran the alternating optimization.
pub fn emit_results(metrics: &[EpisodeMetrics], user_ids: &[u32], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if metrics.is_empty() {
        return Err(Error::Parse("no episodes to write".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let path = out_dir.join(SLOTS_FILE);
    write_slots(metrics, user_ids, &path)?;
    written.push(path);

    let path = out_dir.join(EPISODES_FILE);
    write_episodes(metrics, &path)?;
    written.push(path);

    let path = out_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summarize(metrics)).expect("summary serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if metrics.iter().any(|m| !m.traces.is_empty()) {
        let path = out_dir.join(TRACES_FILE);
        write_traces(metrics, &path)?;
        written.push(path);
    }
    Ok(written)
}
