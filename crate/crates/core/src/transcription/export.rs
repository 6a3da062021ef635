//! CSV export of an assembled program for inspection by other tools.

use std::io;
use std::path::Path;

use super::NlpProblem;
use crate::solver::Nlp;

/// Writes `variables.csv`, `constraints.csv` and `jacobian.csv` into `dir`,
/// evaluated at `x`.
pub fn export_nlp(problem: &NlpProblem, x: &[f64], dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let to_io = |e: csv::Error| io::Error::other(e);

    let (xl, xu) = problem.variable_bounds();
    let mut w = csv::Writer::from_path(dir.join("variables.csv")).map_err(to_io)?;
    w.write_record(["index", "name", "lower", "upper", "value"]).map_err(to_io)?;
    for i in 0..problem.n() {
        w.write_record([
            i.to_string(),
            problem.variable_name(i),
            fmt(xl[i]),
            fmt(xu[i]),
            fmt(x[i]),
        ])
        .map_err(to_io)?;
    }
    w.flush()?;

    let (cl, cu) = problem.constraint_bounds();
    let mut c = vec![0.0; problem.m()];
    let ok = problem.constraints(x, &mut c).is_ok();
    let mut w = csv::Writer::from_path(dir.join("constraints.csv")).map_err(to_io)?;
    w.write_record(["index", "name", "kind", "lower", "upper", "value"]).map_err(to_io)?;
    for (r, row) in problem.rows().iter().enumerate() {
        w.write_record([
            r.to_string(),
            problem.row_name(r),
            row.kind.name().to_string(),
            fmt(cl[r]),
            fmt(cu[r]),
            if ok { fmt(c[r]) } else { "nan".into() },
        ])
        .map_err(to_io)?;
    }
    w.flush()?;

    let (jr, jc) = problem.jacobian_structure();
    let mut jv = vec![0.0; jr.len()];
    let ok = problem.jacobian_values(x, &mut jv).is_ok();
    let mut w = csv::Writer::from_path(dir.join("jacobian.csv")).map_err(to_io)?;
    w.write_record(["row", "col", "value"]).map_err(to_io)?;
    for k in 0..jr.len() {
        w.write_record([jr[k].to_string(), jc[k].to_string(), if ok { fmt(jv[k]) } else { "nan".into() }])
            .map_err(to_io)?;
    }
    w.flush()
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}
