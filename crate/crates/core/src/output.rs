//! CSV writers for trajectories and error reports.

use std::io::Write;

use crate::dynamics::{RunResult, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::ErrorReport;

pub const TRAJECTORY_HEADER: &str = "mechanism,replication,t,k,p";
pub const METRICS_HEADER: &str = "metric,mechanism,N,M,T,estimate,std_error,bound,replications";

/// `v` rounded to 10 significant digits, printed in its shortest form.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let rounded: f64 = format!("{v:.9e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Usage(format!("csv: {other:?}")),
    }
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, label: &str, traj: &Trajectory) -> Result<()> {
    let rep = traj.replication.to_string();
    for (t, p) in traj.points.iter().enumerate() {
        let t = t.to_string();
        for (k, v) in p.as_slice().iter().enumerate() {
            w.write_record([label, &rep, &t, &(k + 1).to_string(), &format_sig(*v)]).map_err(csv_error)?;
        }
    }
    Ok(())
}

/// One row per (mechanism, replication, t, class); classes are numbered from
/// 1 and the mean-field estimate appears under the label `mkv`.
pub fn write_trajectories(w: impl Write, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(TRAJECTORY_HEADER.split(',')).map_err(csv_error)?;
    for traj in &result.trajectories {
        write_rows(&mut w, &traj.mechanism.to_string(), traj)?;
    }
    for traj in &result.mkv {
        write_rows(&mut w, "mkv", traj)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(w: impl Write, reports: &[ErrorReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(METRICS_HEADER.split(',')).map_err(csv_error)?;
    for r in reports {
        w.write_record([
            r.metric.to_string(),
            r.mechanism.to_string(),
            r.n_agents.to_string(),
            r.survey_size.to_string(),
            r.horizon.to_string(),
            format_sig(r.estimate),
            format_sig(r.std_error),
            format_sig(r.bound),
            r.replications.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
