//! CSV and JSON artifacts of a run. Numbers carry 17 significant digits so
//! reading them back reproduces the values exactly.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::solver::IterationRecord;
use crate::trajectory::{EdgeKind, EdgeSeries, NodeSeries, ObjectiveBreakdown, Trajectory, TransferSeries};

pub const NODES_HEADER: [&str; 7] = ["time_h", "node", "rho_h2_kg_m3", "rho_ng_kg_m3", "eta", "p_pa", "p_mpa"];
pub const EDGES_HEADER: [&str; 7] = ["time_h", "edge", "kind", "f0_kg_s", "fl_kg_s", "gamma", "alpha"];
pub const TRANSFERS_HEADER: [&str; 6] = ["time_h", "node", "q_s_kg_s", "eta_s", "q_w_kg_s", "g_e_mj_s"];
pub const OBJECTIVE_HEADER: [&str; 3] = ["r_e_usd", "r_c_usd", "total_usd"];
pub const ITERATIONS_HEADER: [&str; 12] = [
    "stage",
    "iter",
    "objective",
    "inf_pr",
    "inf_du",
    "mu",
    "step_norm",
    "regularization",
    "alpha_pr",
    "alpha_du",
    "line_search_trials",
    "restoration",
];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Full-precision decimal form.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>, OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    Ok(w)
}

/// Writes `nodes.csv`, `edges.csv`, `transfers.csv` and `objective.csv`.
pub fn write_solution(traj: &Trajectory, dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let path = dir.join("nodes.csv");
    let mut w = writer(&path, &NODES_HEADER)?;
    for (t, &time) in traj.times_h.iter().enumerate() {
        for n in &traj.nodes {
            w.write_record([
                num(time),
                n.id.clone(),
                num(n.rho_h2[t]),
                num(n.rho_ng[t]),
                num(n.eta[t]),
                num(n.p[t]),
                num(n.p[t] / 1e6),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("edges.csv");
    let mut w = writer(&path, &EDGES_HEADER)?;
    for (t, &time) in traj.times_h.iter().enumerate() {
        for e in &traj.edges {
            let kind = match e.kind {
                EdgeKind::Pipe => "pipe",
                EdgeKind::Compressor => "compressor",
            };
            w.write_record([
                num(time),
                e.id.clone(),
                kind.to_string(),
                num(e.f0[t]),
                num(e.fl[t]),
                num(e.gamma[t]),
                num(e.alpha[t]),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("transfers.csv");
    let mut w = writer(&path, &TRANSFERS_HEADER)?;
    for (t, &time) in traj.times_h.iter().enumerate() {
        for tr in &traj.transfers {
            w.write_record([
                num(time),
                tr.node.clone(),
                num(tr.q_s[t]),
                num(tr.eta_s[t]),
                num(tr.q_w[t]),
                num(tr.g_e[t]),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("objective.csv");
    let mut w = writer(&path, &OBJECTIVE_HEADER)?;
    let o = traj.objective;
    w.write_record([num(o.r_e), num(o.r_c), num(o.total)]).map_err(csv_err(&path))?;
    w.flush().map_err(io_err(&path))
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let got = r.headers().map_err(csv_err(path))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(OutputError::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header {:?}", got),
        });
    }
    r.records().map(|rec| rec.map_err(csv_err(path))).collect()
}

fn parse(path: &Path, s: &str) -> Result<f64, OutputError> {
    s.parse().map_err(|_| OutputError::Format {
        path: path.to_path_buf(),
        message: format!("`{s}` is not a number"),
    })
}

/// Times, entity ids in order, and row indices per entity.
type Grouped = (Vec<f64>, Vec<String>, HashMap<String, Vec<usize>>);

/// Groups rows by entity (column 1) in first-seen order and checks that
/// every entity has one row per time.
fn by_entity(
    path: &Path,
    rows: &[csv::StringRecord],
) -> Result<Grouped, OutputError> {
    let mut times = Vec::new();
    let mut order = Vec::new();
    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for (k, row) in rows.iter().enumerate() {
        let t = parse(path, &row[0])?;
        if times.last() != Some(&t) && !times.contains(&t) {
            times.push(t);
        }
        let id = row[1].to_string();
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(k);
    }
    if groups.values().any(|g| g.len() != times.len()) {
        return Err(OutputError::Format {
            path: path.to_path_buf(),
            message: "entities have unequal numbers of rows".into(),
        });
    }
    Ok((times, order, groups))
}

/// Reads the files written by [`write_solution`]. The step length is not
/// stored in the tables, so the caller supplies it.
pub fn read_solution(dir: &Path, dt_h: f64) -> Result<Trajectory, OutputError> {
    let path = dir.join("nodes.csv");
    let rows = read_rows(&path, &NODES_HEADER)?;
    let (times_h, order, groups) = by_entity(&path, &rows)?;
    let col = |ids: &[usize], c: usize, path: &Path, rows: &[csv::StringRecord]| -> Result<Vec<f64>, OutputError> {
        ids.iter().map(|&k| parse(path, &rows[k][c])).collect()
    };
    let mut nodes = Vec::new();
    for id in &order {
        let g = &groups[id];
        nodes.push(NodeSeries {
            id: id.clone(),
            rho_h2: col(g, 2, &path, &rows)?,
            rho_ng: col(g, 3, &path, &rows)?,
            eta: col(g, 4, &path, &rows)?,
            p: col(g, 5, &path, &rows)?,
        });
    }

    let path = dir.join("edges.csv");
    let rows = read_rows(&path, &EDGES_HEADER)?;
    let (_, order, groups) = by_entity(&path, &rows)?;
    let mut edges = Vec::new();
    for id in &order {
        let g = &groups[id];
        let kind = match &rows[g[0]][2] {
            "pipe" => EdgeKind::Pipe,
            "compressor" => EdgeKind::Compressor,
            other => {
                return Err(OutputError::Format {
                    path: path.clone(),
                    message: format!("unknown edge kind `{other}`"),
                })
            }
        };
        edges.push(EdgeSeries {
            id: id.clone(),
            kind,
            f0: col(g, 3, &path, &rows)?,
            fl: col(g, 4, &path, &rows)?,
            gamma: col(g, 5, &path, &rows)?,
            alpha: col(g, 6, &path, &rows)?,
        });
    }

    let path = dir.join("transfers.csv");
    let rows = read_rows(&path, &TRANSFERS_HEADER)?;
    let (_, order, groups) = by_entity(&path, &rows)?;
    let mut transfers = Vec::new();
    for id in &order {
        let g = &groups[id];
        transfers.push(TransferSeries {
            node: id.clone(),
            q_s: col(g, 2, &path, &rows)?,
            eta_s: col(g, 3, &path, &rows)?,
            q_w: col(g, 4, &path, &rows)?,
            g_e: col(g, 5, &path, &rows)?,
        });
    }

    let path = dir.join("objective.csv");
    let rows = read_rows(&path, &OBJECTIVE_HEADER)?;
    let row = rows.first().ok_or_else(|| OutputError::Format {
        path: path.clone(),
        message: "no data row".into(),
    })?;
    let objective = ObjectiveBreakdown {
        r_e: parse(&path, &row[0])?,
        r_c: parse(&path, &row[1])?,
        total: parse(&path, &row[2])?,
    };
    Ok(Trajectory {
        dt_h,
        times_h,
        nodes,
        edges,
        transfers,
        objective,
    })
}

/// Writes the solver iteration log of one or more stages.
pub fn write_iteration_log(path: &Path, stages: &[(&str, &[IterationRecord])]) -> Result<(), OutputError> {
    let mut w = writer(path, &ITERATIONS_HEADER)?;
    for (stage, log) in stages {
        for r in *log {
            w.write_record([
                stage.to_string(),
                r.iter.to_string(),
                num(r.objective),
                num(r.inf_pr),
                num(r.inf_du),
                num(r.mu),
                num(r.step_norm),
                num(r.regularization),
                num(r.alpha_pr),
                num(r.alpha_du),
                r.line_search_trials.to_string(),
                u8::from(r.restoration).to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| OutputError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    fs::write(path, text).map_err(io_err(path))
}
