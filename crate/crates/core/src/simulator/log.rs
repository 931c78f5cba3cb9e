use std::fmt;
use std::io::{self, Write};

use nalgebra::{DVector, Vector2, Vector3};

use super::scenario::ControllerKind;
use crate::rigid_body::LEG_NAMES;

const JOINT_NAMES: [&str; 2] = ["hip", "knee"];

/// One control period.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    /// CoM `x`, `z` and base pitch.
    pub com: Vector3<f64>,
    pub com_ref: Vector3<f64>,
    /// Ground force on each foot, before sensor noise.
    pub force: Vec<Vector2<f64>>,
    pub force_ref: Vec<Vector2<f64>>,
    pub contact: Vec<bool>,
    pub tau_cmd: DVector<f64>,
    pub tau_applied: DVector<f64>,
    pub qp_time_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario: String,
    pub controller: ControllerKind,
    pub dt: f64,
    pub rows: Vec<LogRow>,
}

/// Aggregate metrics over a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSummary {
    pub samples: usize,
    /// RMS of the planar CoM position error, m.
    pub rms_com_error: f64,
    /// Largest pitch deviation from its reference, degrees.
    pub max_pitch_deg: f64,
    /// RMS normal-force tracking error over stance feet, N.
    pub force_rms: f64,
    pub mean_normal_ref: f64,
    pub min_normal_force: f64,
    pub qp_mean_us: f64,
    pub qp_p95_us: f64,
    pub final_com_x: f64,
}

impl SimSummary {
    /// Force tracking RMS relative to the mean reference normal force.
    pub fn relative_force_rms(&self) -> f64 {
        self.force_rms / self.mean_normal_ref
    }
}

impl fmt::Display for SimSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples: {}", self.samples)?;
        writeln!(f, "rms_com_error_m: {:.6e}", self.rms_com_error)?;
        writeln!(f, "max_pitch_deg: {:.4}", self.max_pitch_deg)?;
        writeln!(f, "force_tracking_rms_n: {:.4}", self.force_rms)?;
        writeln!(f, "force_tracking_rel: {:.4}", self.relative_force_rms())?;
        writeln!(f, "min_normal_force_n: {:.4}", self.min_normal_force)?;
        writeln!(f, "qp_time_mean_us: {:.2}", self.qp_mean_us)?;
        writeln!(f, "qp_time_p95_us: {:.2}", self.qp_p95_us)?;
        write!(f, "final_com_x_m: {:.4}", self.final_com_x)
    }
}

impl SimLog {
    pub fn new(scenario: &str, controller: ControllerKind, dt: f64) -> Self {
        Self { scenario: scenario.to_string(), controller, dt, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn header(feet: usize, joints: usize, dof: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((0..dof).map(|i| format!("q{i}")));
        h.extend((0..dof).map(|i| format!("qd{i}")));
        h.extend(["com_x", "com_z", "com_pitch", "com_x_ref", "com_z_ref", "com_pitch_ref"].map(String::from));
        for f in 0..feet {
            let name = LEG_NAMES.get(f).map_or_else(|| format!("foot{f}"), |s| s.to_string());
            h.extend(["fx", "fz", "fx_ref", "fz_ref", "contact"].map(|c| format!("{name}_{c}")));
        }
        for j in 0..joints {
            let name = match LEG_NAMES.get(j / 2) {
                Some(leg) => format!("{leg}_{}", JOINT_NAMES[j % 2]),
                None => format!("joint{j}"),
            };
            h.push(format!("{name}_tau_cmd"));
            h.push(format!("{name}_tau_applied"));
        }
        h.push("qp_time_us".into());
        h
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let Some(first) = self.rows.first() else {
            return Ok(());
        };
        let header = Self::header(first.force.len(), first.tau_cmd.len(), first.q.len());
        writeln!(w, "{}", header.join(","))?;
        let mut line = Vec::with_capacity(header.len());
        for r in &self.rows {
            line.clear();
            line.push(r.t);
            line.extend(r.q.iter());
            line.extend(r.qd.iter());
            line.extend(r.com.iter());
            line.extend(r.com_ref.iter());
            for f in 0..r.force.len() {
                line.extend([r.force[f].x, r.force[f].y, r.force_ref[f].x, r.force_ref[f].y]);
                line.push(if r.contact[f] { 1.0 } else { 0.0 });
            }
            for j in 0..r.tau_cmd.len() {
                line.extend([r.tau_cmd[j], r.tau_applied[j]]);
            }
            line.push(r.qp_time_us);
            let text: Vec<String> = line.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", text.join(","))?;
        }
        Ok(())
    }

    /// Equal up to wall-clock solver timings.
    pub fn same_trajectory(&self, other: &SimLog) -> bool {
        self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| LogRow { qp_time_us: 0.0, ..a.clone() } == LogRow { qp_time_us: 0.0, ..b.clone() })
    }

    /// Metrics over rows with `from <= t <= to`.
    pub fn summary(&self, from: f64, to: f64) -> SimSummary {
        let rows: Vec<&LogRow> = self.rows.iter().filter(|r| r.t >= from && r.t <= to).collect();
        let n = rows.len().max(1) as f64;
        let rms_com_error =
            (rows.iter().map(|r| (r.com.x - r.com_ref.x).powi(2) + (r.com.y - r.com_ref.y).powi(2)).sum::<f64>() / n)
                .sqrt();
        let max_pitch_deg = rows.iter().map(|r| (r.com.z - r.com_ref.z).abs()).fold(0.0, f64::max).to_degrees();
        let (mut se, mut sref, mut cnt) = (0.0, 0.0, 0usize);
        for r in &rows {
            for (f, fr) in r.force.iter().zip(&r.force_ref) {
                if fr.y > 0.0 {
                    se += (f.y - fr.y).powi(2);
                    sref += fr.y;
                    cnt += 1;
                }
            }
        }
        let cnt_f = cnt.max(1) as f64;
        let min_normal_force = rows.iter().flat_map(|r| r.force.iter().map(|f| f.y)).fold(f64::INFINITY, f64::min);
        let mut times: Vec<f64> = rows.iter().map(|r| r.qp_time_us).collect();
        times.sort_by(f64::total_cmp);
        let qp_mean_us = times.iter().sum::<f64>() / n;
        let qp_p95_us = times
            .get(((times.len() as f64 * 0.95) as usize).min(times.len().saturating_sub(1)))
            .copied()
            .unwrap_or(0.0);
        SimSummary {
            samples: rows.len(),
            rms_com_error,
            max_pitch_deg,
            force_rms: (se / cnt_f).sqrt(),
            mean_normal_ref: sref / cnt_f,
            min_normal_force,
            qp_mean_us,
            qp_p95_us,
            final_com_x: rows.last().map_or(0.0, |r| r.com.x),
        }
    }
}
