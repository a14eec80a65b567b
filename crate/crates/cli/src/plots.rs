//! Suite tables to SVG figures.

use taskprio::sim::experiments::{SuiteReport, Table};

use crate::svg::{Band, Plot, Style};

fn column(t: &Table, name: &str) -> Option<Vec<f64>> {
    let c = t.columns.iter().position(|n| n == name)?;
    Some(t.rows.iter().map(|r| r[c]).collect())
}

fn pairs(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    x.iter().copied().zip(y.iter().copied()).collect()
}

/// Error-vs-weight curves of a transition sweep.
fn weights(t: &Table) -> Option<String> {
    let w = column(t, "w_position_first")?;
    let mut plot = Plot::new("Task errors along the weight sweep", "weight of position-first hierarchy", "error");
    for (name, label) in [("err_position", "position error"), ("err_orientation", "orientation error")] {
        plot = plot.series(label, pairs(&w, &column(t, name)?), Style::Line);
    }
    Some(plot.render())
}

/// Candidate-hierarchy projections over time; every 5th point keeps files small.
fn projected(t: &Table, title: &str) -> Option<String> {
    let time = column(t, "t")?;
    let mut plot = Plot::new(title, "t [s]", "projected task velocity");
    for name in &t.columns[1..] {
        let y = column(t, name)?;
        let pts = pairs(&time, &y).into_iter().step_by(5).collect();
        plot = plot.series(name.as_str(), pts, Style::Points);
    }
    Some(plot.render())
}

/// Per-dimension variances of each candidate frame, log scale.
fn variances(t: &Table, labels: &[String]) -> Option<String> {
    let mut plot = Plot::new("Projected-data variance per frame", "task dimension", "variance").log_y();
    for row in &t.rows {
        let frame = row[0] as usize;
        let pts = row[1..].iter().enumerate().map(|(d, &v)| (d as f64, v)).collect();
        let name = labels.get(frame).cloned().unwrap_or_else(|| format!("frame {frame}"));
        plot = plot.series(name, pts, Style::Bars);
    }
    Some(plot.render())
}

pub fn closed_loop(t: &Table) -> String {
    let time = column(t, "t").unwrap_or_default();
    let mut plot = Plot::new(format!("End-effector errors ({})", t.name), "t [s]", "error").log_y();
    for (name, label) in [("err_left", "left error"), ("err_right", "right error")] {
        if let Some(y) = column(t, name) {
            plot = plot.series(label, pairs(&time, &y), Style::Line);
        }
    }
    plot.render()
}

/// One figure per joint: combined reference and both candidates, with
/// one-standard-deviation envelopes from the candidate covariance traces.
pub fn reproduction(t: &Table) -> Vec<(String, String)> {
    let Some(time) = column(t, "t") else {
        return vec![];
    };
    let trace_cfg = column(t, "trace_cfg").unwrap_or_default();
    let trace_obj = column(t, "trace_obj").unwrap_or_default();
    let mut out = Vec::new();
    for j in 0.. {
        let (Some(q), Some(cc), Some(co)) = (
            column(t, &format!("q_{j}")),
            column(t, &format!("cand_cfg_{j}")),
            column(t, &format!("cand_obj_{j}")),
        ) else {
            break;
        };
        let envelope = |name: &str, c: &[f64], tr: &[f64]| Band {
            name: name.into(),
            x: time.clone(),
            lower: c.iter().zip(tr).map(|(m, v)| m - v.max(0.0).sqrt()).collect(),
            upper: c.iter().zip(tr).map(|(m, v)| m + v.max(0.0).sqrt()).collect(),
        };
        let plot = Plot::new(format!("Joint {j}: candidates and combined reference"), "t [s]", "angle [rad]")
            .band(envelope("configuration spread", &cc, &trace_cfg))
            .band(envelope("object spread", &co, &trace_obj))
            .series("combined", pairs(&time, &q), Style::Line)
            .series("configuration candidate", pairs(&time, &cc), Style::Line)
            .series("object candidate", pairs(&time, &co), Style::Line);
        out.push((format!("reproduction_q{j}.svg"), plot.render()));
    }
    out
}

pub fn for_report(r: &SuiteReport) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let labels: Vec<String> = r
        .tables
        .iter()
        .filter_map(|t| t.name.strip_prefix("projected_").map(str::to_string))
        .collect();
    for t in &r.tables {
        let stem = format!("{}_{}", r.suite, t.name);
        let svg = match t.name.as_str() {
            "weights" => weights(t),
            "variances" => variances(t, &labels),
            "reproduction" => {
                out.extend(reproduction(t).into_iter().map(|(n, s)| (format!("{}_{n}", r.suite), s)));
                None
            }
            n if n.starts_with("projected_") => projected(t, &format!("Projection through {}", &n[10..])),
            n if n.ends_with("_run") => Some(closed_loop(t)),
            _ => None,
        };
        if let Some(svg) = svg {
            out.push((format!("{stem}.svg"), svg));
        }
    }
    out
}
