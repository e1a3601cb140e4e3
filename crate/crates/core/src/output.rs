//! Run artifacts: trajectory and barrier-trace CSVs, a JSON report, and
//! static SVG plots — the position components against their shrinking
//! envelopes, and the blended barrier value against zero.
//!
//! Everything here is deterministic: the same log produces byte-identical
//! files, so runs can be diffed. Floats are written in Rust's default
//! shortest-roundtrip form, which `read_positions_csv` recovers exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::barrier::{AtomGeometry, CompositeBarrier};
use crate::qp::QpStatus;
use crate::rigid_body::Vec3;
use crate::sim::{Report, RunLog};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: io::Error },
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: io::Error },
    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}:{line}: {message}")]
    Csv {
        path: String,
        line: usize,
        message: String,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    fs::write(path, contents).map_err(|source| OutputError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// One row per state sample — every control step plus the terminal state,
/// so the file covers the full run horizon and can be monitored offline.
/// The header row names every column and its unit; positions, velocities and
/// accelerations are in the user frame of the scenario. Command cells are
/// empty on the terminal row (no step starts there).
pub fn write_trajectory_csv(path: &Path, log: &RunLog) -> Result<(), OutputError> {
    let n_thrusts = log.records.first().map_or(0, |r| r.thrusts.len());
    let mut s = String::new();
    s.push_str("t_s,x_m,y_m,z_m,vx_m_per_s,vy_m_per_s,vz_m_per_s");
    s.push_str(",ux_m_per_s2,uy_m_per_s2,uz_m_per_s2");
    for i in 1..=n_thrusts {
        let _ = write!(s, ",thrust{i}_n");
    }
    s.push('\n');
    for (k, (pos, vel)) in log.positions.iter().zip(&log.velocities).enumerate() {
        let t = k as f64 * log.period;
        let _ = write!(
            s,
            "{t},{},{},{},{},{},{}",
            pos.x, pos.y, pos.z, vel.x, vel.y, vel.z
        );
        match log.records.get(k) {
            Some(rec) => {
                let _ = write!(s, ",{},{},{}", rec.u_cmd.x, rec.u_cmd.y, rec.u_cmd.z);
                for f in &rec.thrusts {
                    let _ = write!(s, ",{f}");
                }
            }
            None => {
                for _ in 0..3 + n_thrusts {
                    s.push(',');
                }
            }
        }
        s.push('\n');
    }
    write_file(path, &s)
}

fn status_name(status: Option<QpStatus>) -> &'static str {
    match status {
        None => "inactive",
        Some(QpStatus::Optimal) => "optimal",
        Some(QpStatus::Relaxed) => "relaxed",
        Some(QpStatus::Infeasible) => "infeasible",
    }
}

/// Per-step certificate trace: blended barrier value, first recursive
/// certificate, the constraint row handed to the solver, and solver health.
/// Cells are empty while no goal is active. Wall-clock timings are kept out
/// of the CSVs on purpose (they land in the JSON report instead) so that
/// identical runs emit byte-identical files.
pub fn write_barrier_csv(path: &Path, log: &RunLog) -> Result<(), OutputError> {
    let mut s = String::new();
    s.push_str(
        "t_s,b,psi1,row_nx,row_ny,row_nz,row_bound,status,slack,n_active,accel_residual_m_per_s2\n",
    );
    for rec in &log.records {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let (nx, ny, nz, bound) = match rec.row {
            Some((n, h)) => (
                n.x.to_string(),
                n.y.to_string(),
                n.z.to_string(),
                h.to_string(),
            ),
            None => Default::default(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{nx},{ny},{nz},{bound},{},{},{},{}",
            rec.t,
            opt(rec.b),
            opt(rec.psi1),
            status_name(rec.status),
            rec.slack,
            rec.n_active,
            rec.accel_residual
        );
    }
    write_file(path, &s)
}

pub fn write_report_json(path: &Path, report: &Report) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_file(path, &text)
}

// ---------------------------------------------------------------------------
// SVG plotting. Hand-rolled: each plot is polylines over a fixed viewport
// with a light grid, which is all these figures need.

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    t_min: f64,
    t_max: f64,
    v_min: f64,
    v_max: f64,
}

impl Panel {
    fn x(&self, t: f64) -> f64 {
        self.x0 + (t - self.t_min) / (self.t_max - self.t_min) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        // SVG y grows downward.
        self.y0 + self.h - (v - self.v_min) / (self.v_max - self.v_min) * self.h
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.v_min && v <= self.v_max
    }

    /// Emits `points`, split into polyline segments wherever the value
    /// leaves the panel's range (envelopes start far above the data).
    fn polyline(&self, svg: &mut String, points: &[(f64, f64)], style: &str) {
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |svg: &mut String, run: &mut Vec<(f64, f64)>| {
            if run.len() > 1 {
                let _ = write!(svg, "<polyline {style} points=\"");
                for (t, v) in run.iter() {
                    let _ = write!(svg, "{:.2},{:.2} ", self.x(*t), self.y(*v));
                }
                svg.push_str("\"/>\n");
            }
            run.clear();
        };
        for &(t, v) in points {
            if self.contains(v) {
                run.push((t, v));
            } else {
                flush(svg, &mut run);
            }
        }
        flush(svg, &mut run);
    }

    fn frame(&self, svg: &mut String, label: &str) {
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#888\"/>",
            self.x0, self.y0, self.w, self.h
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" fill=\"#333\">{label}</text>",
            self.x0 + 6.0,
            self.y0 + 16.0
        );
        // Value ticks at the panel corners, time ticks under the frame.
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" fill=\"#555\" text-anchor=\"end\">{:.1}</text>",
            self.x0 - 4.0,
            self.y0 + 10.0,
            self.v_max
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" fill=\"#555\" text-anchor=\"end\">{:.1}</text>",
            self.x0 - 4.0,
            self.y0 + self.h,
            self.v_min
        );
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let t = self.t_min + frac * (self.t_max - self.t_min);
            let _ = writeln!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" fill=\"#555\" text-anchor=\"middle\">{t:.0}</text>",
                self.x(t),
                self.y0 + self.h + 14.0
            );
        }
    }
}

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];
const ENVELOPE_COLORS: [&str; 4] = ["#c44", "#284", "#46c", "#a4a"];

/// Three stacked panels, one per position component, each showing the
/// payload trace and, for every ball goal, the moving admissible band
/// `center ± Γ(t)` over the goal's active window (dashed, clipped to the
/// panel). Mirrors the classic waypoint-convergence figure.
pub fn write_position_svg(
    path: &Path,
    log: &RunLog,
    barrier: &CompositeBarrier,
) -> Result<(), OutputError> {
    let (width, height) = (860.0, 760.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let t_min = log.records.first().map_or(0.0, |r| r.t);
    let t_max = log.records.last().map_or(1.0, |r| r.t).max(t_min + 1e-9);

    for axis in 0..3 {
        let series: Vec<(f64, f64)> = log.records.iter().map(|r| (r.t, r.pos[axis])).collect();
        let lo = series.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = series.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.15 * (hi - lo).max(1.0);
        let panel = Panel {
            x0: 60.0,
            y0: 20.0 + axis as f64 * 245.0,
            w: width - 90.0,
            h: 215.0,
            t_min,
            t_max,
            v_min: lo - pad,
            v_max: hi + pad,
        };
        panel.frame(
            &mut svg,
            &format!("{} position [m] vs time [s]", AXIS_NAMES[axis]),
        );

        for (k, atom) in barrier.atoms().iter().enumerate() {
            let AtomGeometry::Ball { center, .. } = atom.geometry else {
                continue;
            };
            let color = ENVELOPE_COLORS[k % ENVELOPE_COLORS.len()];
            let style = format!(
                "fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" stroke-dasharray=\"5 3\""
            );
            let span_lo = atom.t_activate.max(t_min);
            let span_hi = atom.t_expire.min(t_max);
            if span_hi <= span_lo {
                continue;
            }
            let samples = 240;
            let mut upper = Vec::with_capacity(samples + 1);
            let mut lower = Vec::with_capacity(samples + 1);
            for i in 0..=samples {
                let t = span_lo + (span_hi - span_lo) * i as f64 / samples as f64;
                let gamma = atom.profile.value(t);
                upper.push((t, center[axis] + gamma));
                lower.push((t, center[axis] - gamma));
            }
            panel.polyline(&mut svg, &upper, &style);
            panel.polyline(&mut svg, &lower, &style);
        }

        panel.polyline(
            &mut svg,
            &series,
            "fill=\"none\" stroke=\"#111\" stroke-width=\"1.6\"",
        );
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

/// The blended barrier value over time. The admissible half `b ≥ 0` is
/// shaded so a safe run reads as "the curve stays inside the band".
pub fn write_barrier_svg(path: &Path, log: &RunLog) -> Result<(), OutputError> {
    let (width, height) = (860.0, 360.0);
    let series: Vec<(f64, f64)> = log
        .records
        .iter()
        .filter_map(|r| r.b.map(|b| (r.t, b)))
        .collect();
    let t_min = series.first().map_or(0.0, |p| p.0);
    let t_max = series.last().map_or(1.0, |p| p.0).max(t_min + 1e-9);
    let lo = series.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = series.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if series.is_empty() {
        (-1.0, 1.0)
    } else {
        (lo, hi)
    };
    let pad = 0.1 * (hi - lo).max(1.0);
    let panel = Panel {
        x0: 60.0,
        y0: 20.0,
        w: width - 90.0,
        h: height - 60.0,
        t_min,
        t_max,
        v_min: (lo - pad).min(-pad),
        v_max: (hi + pad).max(pad),
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Admissible band: everything at or above zero.
    let zero_y = panel.y(0.0);
    let _ = writeln!(
        svg,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#e8f5e9\"/>",
        panel.x0,
        panel.y0,
        panel.w,
        (zero_y - panel.y0).max(0.0)
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{zero_y:.2}\" x2=\"{:.2}\" y2=\"{zero_y:.2}\" stroke=\"#284\" stroke-width=\"1\"/>",
        panel.x0,
        panel.x0 + panel.w
    );
    panel.frame(&mut svg, "blended barrier b vs time [s]");
    panel.polyline(
        &mut svg,
        &series,
        "fill=\"none\" stroke=\"#111\" stroke-width=\"1.6\"",
    );
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

/// Writes the full artifact set into `dir` (created if missing) and returns
/// the paths written: trajectory.csv, barrier.csv, report.json,
/// positions.svg, barrier.svg.
pub fn emit_outputs(
    dir: &Path,
    log: &RunLog,
    report: &Report,
    barrier: &CompositeBarrier,
) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    let trajectory = dir.join("trajectory.csv");
    let barrier_csv = dir.join("barrier.csv");
    let report_json = dir.join("report.json");
    let positions = dir.join("positions.svg");
    let barrier_svg = dir.join("barrier.svg");
    write_trajectory_csv(&trajectory, log)?;
    write_barrier_csv(&barrier_csv, log)?;
    write_report_json(&report_json, report)?;
    write_position_svg(&positions, log, barrier)?;
    write_barrier_svg(&barrier_svg, log)?;
    Ok(vec![
        trajectory,
        barrier_csv,
        report_json,
        positions,
        barrier_svg,
    ])
}

/// Reads a trajectory CSV back as `(times, positions)`. Only the first four
/// columns are consulted, so the files written here and any externally
/// produced table with a `t,x,y,z` prefix both load. Rows must carry
/// strictly increasing times.
pub fn read_positions_csv(path: &Path) -> Result<(Vec<f64>, Vec<Vec3>), OutputError> {
    let text = fs::read_to_string(path).map_err(|source| OutputError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let err = |line: usize, message: String| OutputError::Csv {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut times = Vec::new();
    let mut positions = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<f64, OutputError> {
            let cell = fields
                .next()
                .ok_or_else(|| err(idx + 1, format!("missing {name} column")))?;
            cell.trim()
                .parse::<f64>()
                .map_err(|e| err(idx + 1, format!("bad {name} value {cell:?}: {e}")))
        };
        // The first row may be a header with numeric-looking names; treat a
        // parse failure on row one as a header and skip it.
        let t = match next("t") {
            Ok(t) => t,
            Err(e) => {
                if idx == 0 {
                    continue;
                }
                return Err(e);
            }
        };
        let x = next("x")?;
        let y = next("y")?;
        let z = next("z")?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(err(idx + 1, format!("time {t} not after {prev}")));
            }
        }
        times.push(t);
        positions.push(Vec3::new(x, y, z));
    }
    if times.is_empty() {
        return Err(err(0, "no data rows".into()));
    }
    Ok((times, positions))
}
