//! On-disk formats: per-snapshot particle CSV and the per-run metrics CSV.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! parsing a written value gives back the same bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Kernel, Result};
use crate::pipeline::{ContactStats, ParticleSet, StepMetrics};

pub const SNAPSHOT_HEADER: &str = "id,x,y,z,vx,vy,vz,wx,wy,wz,r";
pub const METRICS_HEADER: &str =
    "step,kernel,wall_ns,model_cycles_baseline,model_cycles_two_phase,\
utilization_baseline,utilization_two_phase,contacts,max_contacts_per_particle,clamps";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn snapshot_name(step: u64) -> String {
    format!("snapshot_{step:06}.csv")
}

/// Snapshot rows ordered by particle id.
pub fn snapshot_csv(state: &ParticleSet) -> String {
    let mut order: Vec<usize> = (0..state.len()).collect();
    order.sort_unstable_by_key(|&i| state.ids[i]);
    let mut out = String::with_capacity(64 + state.len() * 200);
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    for i in order {
        let (x, v, w) = (
            &state.position[i],
            &state.velocity[i],
            &state.angular_velocity[i],
        );
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            state.ids[i], x.x, x.y, x.z, v.x, v.y, v.z, w.x, w.y, w.z, state.radius[i]
        ));
    }
    out
}

pub fn write_snapshot(dir: &Path, step: u64, state: &ParticleSet) -> Result<PathBuf> {
    let path = dir.join(snapshot_name(step));
    std::fs::write(&path, snapshot_csv(state)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotRow {
    pub id: u32,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
    pub radius: f64,
}

/// Parses a snapshot file written by [`snapshot_csv`].
pub fn parse_snapshot(text: &str) -> std::result::Result<Vec<SnapshotRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(SNAPSHOT_HEADER) {
        return Err("missing snapshot header".into());
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(format!(
                    "row {}: expected 11 fields, got {}",
                    n + 1,
                    fields.len()
                ));
            }
            let num = |k: usize| {
                fields[k]
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: {e}", n + 1))
            };
            Ok(SnapshotRow {
                id: fields[0]
                    .parse()
                    .map_err(|e| format!("row {}: {e}", n + 1))?,
                position: [num(1)?, num(2)?, num(3)?],
                velocity: [num(4)?, num(5)?, num(6)?],
                angular_velocity: [num(7)?, num(8)?, num(9)?],
                radius: num(10)?,
            })
        })
        .collect()
}

/// Nine rows per step, one per kernel. Columns that do not apply to a
/// kernel are left empty; `wall_ns` is empty unless wall timing is on, so
/// runs with equal inputs produce equal files.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
    wall_time: bool,
}

impl MetricsWriter {
    pub fn create(path: impl Into<PathBuf>, wall_time: bool) -> Result<Self> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = MetricsWriter {
            path,
            out: BufWriter::new(file),
            wall_time,
        };
        w.line(METRICS_HEADER.to_string())?;
        Ok(w)
    }

    fn line(&mut self, line: String) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_step(&mut self, step: u64, metrics: &StepMetrics) -> Result<()> {
        for row in metrics_rows(step, metrics, self.wall_time) {
            self.line(row)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn metrics_rows(step: u64, m: &StepMetrics, wall_time: bool) -> Vec<String> {
    let contacts = |s: &ContactStats| (s.contacts.to_string(), s.max_per_particle.to_string());
    Kernel::ALL
        .iter()
        .map(|&k| {
            let wall = if wall_time {
                m.wall_ns(k).to_string()
            } else {
                String::new()
            };
            let mut model = [String::new(), String::new(), String::new(), String::new()];
            let (mut count, mut max, mut clamps) = (String::new(), String::new(), String::new());
            match k {
                Kernel::CalcHash => clamps = m.clamps.to_string(),
                Kernel::Collide => {
                    model = [
                        format!("{:?}", m.warp.cycles_baseline),
                        format!("{:?}", m.warp.cycles_two_phase),
                        format!("{:?}", m.warp.utilization_baseline()),
                        format!("{:?}", m.warp.utilization_two_phase()),
                    ];
                    (count, max) = contacts(&m.particle_contacts);
                }
                Kernel::CollideRectangle => (count, max) = contacts(&m.rect_contacts),
                Kernel::CollideLine => (count, max) = contacts(&m.line_contacts),
                _ => {}
            }
            let [cb, ct, ub, ut] = model;
            format!(
                "{step},{},{wall},{cb},{ct},{ub},{ut},{count},{max},{clamps}",
                k.name()
            )
        })
        .collect()
}
