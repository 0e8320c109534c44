//! The `run`, `bench` and `verify` entry points.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::SimConfig;
use crate::contacts::Partner;
use crate::error::{Error, Kernel, Result};
use crate::init;
use crate::oracle;
use crate::output::{self, MetricsWriter};
use crate::physics::{contact_coefficients, Vec3};
use crate::pipeline::{CollideMode, CollideVariant, ContactStats, SimOptions, Simulation};
use crate::simt::WarpStats;

/// Builds the initial particles and the simulation described by `config`.
pub fn setup(config: &SimConfig) -> Result<Simulation> {
    setup_with(config, config.sim_options())
}

pub fn setup_with(config: &SimConfig, options: SimOptions) -> Result<Simulation> {
    config.validate()?;
    let state = init::build_particles(config)?;
    Simulation::new(state, config.environment(), config.grid()?, options)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Record per-kernel wall time in the metrics file.
    pub wall_time: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub snapshots: Vec<PathBuf>,
    pub metrics: PathBuf,
    pub steps: u64,
}

/// Warm-up steps without output, then `run.steps` measured steps. A
/// snapshot is written before the first measured step, every
/// `snapshot_every` steps, and after the last step; the metrics file gets
/// one row per kernel per measured step.
pub fn run(config: &SimConfig, options: &RunOptions) -> Result<RunSummary> {
    let mut sim = setup(config)?;
    for _ in 0..config.run.warmup_steps {
        sim.step()?;
    }
    let dir = &options.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics_path = dir.join(output::METRICS_FILE);
    let mut metrics = MetricsWriter::create(&metrics_path, options.wall_time)?;
    let mut snapshots = vec![output::write_snapshot(dir, 0, sim.state())?];
    let (steps, every) = (config.run.steps, config.run.snapshot_every);
    for s in 1..=steps {
        let m = sim.step()?;
        metrics.write_step(s, &m)?;
        if s == steps || (every > 0 && s % every == 0) {
            snapshots.push(output::write_snapshot(dir, s, sim.state())?);
        }
    }
    metrics.finish()?;
    Ok(RunSummary {
        snapshots,
        metrics: metrics_path,
        steps,
    })
}

/// Modeled and measured Collide costs over a set of steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Comparison {
    pub steps: u64,
    pub warp: WarpStats,
    pub contacts: ContactStats,
    /// Summed wall time per kernel.
    pub wall_ns: [u64; 9],
    /// Summed Collide wall time of the baseline and two-phase variants.
    pub collide_wall_ns: (u64, u64),
}

impl Comparison {
    fn add(&mut self, m: &crate::pipeline::StepMetrics) {
        self.steps += 1;
        self.warp.add(&m.warp);
        self.contacts.contacts += m.particle_contacts.contacts;
        self.contacts.max_per_particle = self
            .contacts
            .max_per_particle
            .max(m.particle_contacts.max_per_particle);
        self.contacts.capped += m.particle_contacts.capped;
        self.contacts.friction_violations += m.friction_violations();
        for k in 0..9 {
            self.wall_ns[k] += m.wall_ns[k];
        }
        if let Some((nb, nt)) = m.collide_wall_ns {
            self.collide_wall_ns.0 += nb;
            self.collide_wall_ns.1 += nt;
        }
    }

    /// Modeled baseline cycles over two-phase cycles.
    pub fn speedup(&self) -> f64 {
        self.warp.speedup()
    }

    /// Mean contacts per particle per step.
    pub fn coordination(&self, particles: usize) -> f64 {
        if self.steps == 0 || particles == 0 {
            0.0
        } else {
            self.contacts.contacts as f64 / (self.steps as f64 * particles as f64)
        }
    }

    pub fn measured_speedup(&self) -> f64 {
        self.collide_wall_ns.0 as f64 / self.collide_wall_ns.1.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub particles: usize,
    pub warmup_steps: u64,
    /// One step from the initial lattice, before any contact forms.
    pub sparse: Comparison,
    /// The measured steps after warm-up.
    pub dense: Comparison,
}

impl BenchReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let n = self.particles;
        let _ = writeln!(s, "particles: {n}");
        let _ = writeln!(s, "warmup_steps: {}", self.warmup_steps);
        for (label, c) in [("sparse", &self.sparse), ("dense", &self.dense)] {
            let _ = writeln!(s, "[{label}]");
            let _ = writeln!(s, "  steps: {}", c.steps);
            let _ = writeln!(s, "  coordination_number: {:.4}", c.coordination(n));
            let _ = writeln!(
                s,
                "  max_contacts_per_particle: {}",
                c.contacts.max_per_particle
            );
            let _ = writeln!(s, "  model_cycles_baseline: {}", c.warp.cycles_baseline);
            let _ = writeln!(s, "  model_cycles_two_phase: {}", c.warp.cycles_two_phase);
            let _ = writeln!(s, "  model_speedup: {:.4}", c.speedup());
            let _ = writeln!(
                s,
                "  model_two_phase_fraction: {:.4}",
                c.warp.cycles_two_phase / c.warp.cycles_baseline.max(f64::MIN_POSITIVE)
            );
            let _ = writeln!(
                s,
                "  utilization_baseline: {:.4}",
                c.warp.utilization_baseline()
            );
            let _ = writeln!(
                s,
                "  utilization_two_phase: {:.4}",
                c.warp.utilization_two_phase()
            );
            let steps = c.steps.max(1) as f64;
            let _ = writeln!(
                s,
                "  collide_wall_ns_per_step: baseline {:.0}, two_phase {:.0}",
                c.collide_wall_ns.0 as f64 / steps,
                c.collide_wall_ns.1 as f64 / steps
            );
            for k in Kernel::ALL {
                let _ = writeln!(
                    s,
                    "  wall_ns_per_step.{}: {:.0}",
                    k.name(),
                    c.wall_ns[k.index()] as f64 / steps
                );
            }
        }
        s
    }
}

/// Runs one comparison step on the initial lattice, `run.warmup_steps`
/// steps with the configured variant, then `run.steps` steps that run both
/// variants on identical input and abort unless their results are bitwise
/// equal.
pub fn bench(config: &SimConfig) -> Result<BenchReport> {
    bench_with_progress(config, |_, _| {})
}

/// As [`bench`], calling `progress(done, total)` after every step.
pub fn bench_with_progress(
    config: &SimConfig,
    mut progress: impl FnMut(u64, u64),
) -> Result<BenchReport> {
    let mut sim = setup(config)?;
    let total = 1 + config.run.warmup_steps + config.run.steps;
    let mut done = 0;
    let mut sparse = Comparison::default();
    sparse.add(&sim.step_with(CollideMode::Compare)?);
    done += 1;
    progress(done, total);
    for _ in 0..config.run.warmup_steps {
        sim.step()?;
        done += 1;
        progress(done, total);
    }
    let mut dense = Comparison::default();
    for _ in 0..config.run.steps {
        dense.add(&sim.step_with(CollideMode::Compare)?);
        done += 1;
        progress(done, total);
    }
    Ok(BenchReport {
        particles: sim.state().len(),
        warmup_steps: config.run.warmup_steps,
        sparse,
        dense,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        let _ = writeln!(
            s,
            "{}",
            if self.passed() {
                "all properties pass"
            } else {
                "verification failed"
            }
        );
        s
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check {
            name,
            passed,
            detail,
        });
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Steps of the zero-gravity, wall-free run used for the momentum and
    /// dissipation checks.
    pub conservation_steps: u64,
    /// Sampling period of the dissipation check, in steps.
    pub energy_window: u64,
    /// Allowed relative growth of mechanical energy between samples.
    pub energy_tolerance: f64,
    pub momentum_tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            conservation_steps: 1000,
            energy_window: 50,
            energy_tolerance: 1e-6,
            momentum_tolerance: 1e-9,
        }
    }
}

pub const CHECK_COMPLETENESS: &str = "contact_completeness";
pub const CHECK_ORACLE_FORCES: &str = "oracle_forces";
pub const CHECK_VARIANTS: &str = "variant_equivalence";
pub const CHECK_FRICTION: &str = "friction_bound";
pub const CHECK_MOMENTUM: &str = "momentum";
pub const CHECK_DISSIPATION: &str = "dissipation";

pub fn verify(config: &SimConfig) -> Result<VerifyReport> {
    verify_with(config, &VerifyOptions::default())
}

/// Runs the configured scenario for `run.warmup_steps + run.steps` steps,
/// checking every step against the O(N²) oracle and both Collide variants
/// against each other, then a zero-gravity, wall-free run of the same
/// particles for the conservation checks. Configuration errors are
/// returned; everything else is report content.
pub fn verify_with(config: &SimConfig, options: &VerifyOptions) -> Result<VerifyReport> {
    config.validate()?;
    let mut report = VerifyReport::default();
    let sim_options = SimOptions {
        allow_undersized_cells: true,
        ..config.sim_options()
    };
    let mut sim = setup_with(config, sim_options)?;
    let steps = config.run.warmup_steps + config.run.steps;

    let h = sim.grid().cell_size();
    let r_max = sim.state().max_radius();
    let mut missed = 0usize;
    let mut extra = 0usize;
    let mut oracle_pairs = 0usize;
    let mut force_mismatch: Option<String> = None;
    let mut variant_error: Option<String> = None;
    let mut violations = 0usize;
    let mut checked_contacts = 0usize;
    let mut abort: Option<String> = None;

    for _ in 0..steps {
        if let Err(e) = sim.begin_step() {
            abort = Some(e.to_string());
            break;
        }
        let mut table = sim.table().clone();
        let mut forces = sim.forces().clone();
        let oracle_result = oracle::collide_all(sim.state(), sim.env(), &mut table, &mut forces);
        let step = sim.step_index();
        let metrics = match sim.finish_step_with(CollideMode::Compare) {
            Ok(m) => m,
            Err(e) => {
                if matches!(e, Error::VariantMismatch { .. }) {
                    variant_error = Some(e.to_string());
                }
                abort = Some(e.to_string());
                break;
            }
        };
        violations += metrics.friction_violations();
        checked_contacts += metrics.all_contacts().contacts;

        let expected: HashSet<(usize, usize)> = oracle::contact_pairs(sim.state())
            .into_iter()
            .flat_map(|(i, j)| [(i, j), (j, i)])
            .collect();
        let found: HashSet<(usize, usize)> = (0..sim.traces().lane_count())
            .flat_map(|i| {
                sim.traces()
                    .lane(i)
                    .iter()
                    .filter(|e| e.is_contact)
                    .map(move |e| (i, e.candidate as usize))
            })
            .collect();
        oracle_pairs += expected.len();
        missed += expected.difference(&found).count();
        extra += found.difference(&expected).count();

        if force_mismatch.is_none() {
            match oracle_result {
                Err(e) => force_mismatch = Some(format!("step {step}: oracle failed: {e}")),
                Ok(()) => {
                    if !forces.bitwise_eq(sim.forces()) {
                        force_mismatch = Some(format!(
                            "step {step}: forces or torques differ from the oracle"
                        ));
                    } else if !table.bitwise_eq(sim.table()) {
                        force_mismatch = Some(format!(
                            "step {step}: contact history differs from the oracle"
                        ));
                    }
                }
            }
        }
    }

    let ran = format!("{} of {steps} steps", sim.step_index());
    if let Some(msg) = &abort {
        report.push("run", false, format!("aborted after {ran}: {msg}"));
    }
    let complete = missed == 0 && extra == 0;
    let detail = if complete {
        format!("{oracle_pairs} contact directions over {ran} match the O(N^2) oracle")
    } else if h < 2.0 * r_max {
        format!(
            "{missed} of {oracle_pairs} contact directions missed: cell size {h} is below 2 r_max = {}, so \
             the 27-cell neighborhood cannot reach every contact",
            2.0 * r_max
        )
    } else {
        format!("{missed} contact directions missed and {extra} spurious over {ran}")
    };
    report.push(CHECK_COMPLETENESS, complete && abort.is_none(), detail);
    report.push(
        CHECK_ORACLE_FORCES,
        force_mismatch.is_none() && abort.is_none(),
        force_mismatch.unwrap_or_else(|| {
            format!("forces, torques and contact history bitwise equal over {ran}")
        }),
    );
    report.push(
        CHECK_VARIANTS,
        variant_error.is_none() && abort.is_none(),
        variant_error.unwrap_or_else(|| format!("baseline and two-phase bitwise equal over {ran}")),
    );
    report.push(
        CHECK_FRICTION,
        violations == 0 && abort.is_none(),
        format!("{violations} violations among {checked_contacts} contact evaluations"),
    );

    conservation_checks(config, sim_options, options, &mut report);
    Ok(report)
}

/// Total linear momentum drift and mechanical energy over a zero-gravity,
/// wall-free run of the configured particles.
fn conservation_checks(
    config: &SimConfig,
    sim_options: SimOptions,
    options: &VerifyOptions,
    report: &mut VerifyReport,
) {
    let mut free = config.clone();
    free.gravity = Vec3::zeros();
    free.rects.clear();
    free.lines.clear();
    let mut sim = match setup_with(&free, sim_options) {
        Ok(sim) => sim,
        Err(e) => {
            report.push(CHECK_MOMENTUM, false, format!("setup failed: {e}"));
            report.push(CHECK_DISSIPATION, false, format!("setup failed: {e}"));
            return;
        }
    };
    let p0 = sim.state().linear_momentum();
    let magnitude: f64 = (0..sim.state().len())
        .map(|i| sim.state().mass[i] * sim.state().velocity[i].norm())
        .sum();
    let scale = if p0.norm() > 1e-6 * magnitude {
        p0.norm()
    } else {
        magnitude
    };
    let mut max_drift = 0.0f64;
    let mut energies = vec![mechanical_energy(&sim)];
    let mut contacts = 0usize;
    let mut abort = None;
    for s in 1..=options.conservation_steps {
        match sim.step() {
            Ok(m) => contacts += m.particle_contacts.contacts,
            Err(e) => {
                abort = Some(e.to_string());
                break;
            }
        }
        let drift = (sim.state().linear_momentum() - p0).norm() / scale;
        max_drift = max_drift.max(drift);
        if s % options.energy_window.max(1) == 0 {
            energies.push(mechanical_energy(&sim));
        }
    }
    if let Some(e) = abort {
        report.push(CHECK_MOMENTUM, false, format!("run aborted: {e}"));
        report.push(CHECK_DISSIPATION, false, format!("run aborted: {e}"));
        return;
    }
    report.push(
        CHECK_MOMENTUM,
        max_drift <= options.momentum_tolerance,
        format!(
            "max relative drift {max_drift:.3e} over {} steps ({contacts} contact evaluations), limit {:e}",
            options.conservation_steps, options.momentum_tolerance
        ),
    );
    let worst = energies
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    let restitution_below_one = config.materials.values().all(|m| m.restitution < 1.0);
    let passed = !restitution_below_one || worst <= options.energy_tolerance;
    report.push(
        CHECK_DISSIPATION,
        passed,
        format!(
            "largest relative energy change between {} samples: {worst:.3e} (energy {:.6e} -> {:.6e})",
            energies.len(),
            energies[0],
            energies[energies.len() - 1]
        ),
    );
}

/// Kinetic energy plus the elastic energy stored in particle contacts:
/// `(2/5) k_n δ^{5/2}` for the Hertz spring and `k_t |δ_t|² / 2` for the
/// tangential spring, each contact counted once.
pub fn mechanical_energy(sim: &Simulation) -> f64 {
    let p = sim.state();
    let env = sim.env();
    let mut energy = 0.0;
    for i in 0..p.len() {
        energy += 0.5 * p.mass[i] * p.velocity[i].norm_squared()
            + 0.5 * p.inertia(i) * p.angular_velocity[i].norm_squared();
        for slot in sim.table().row(i) {
            let Partner::Particle(j) = slot.partner else {
                continue;
            };
            let j = j as usize;
            let d = (p.position[j] - p.position[i]).norm();
            let overlap = p.radius[i] + p.radius[j] - d;
            if overlap <= 0.0 {
                continue;
            }
            let (mi, mj) = (p.material[i] as usize, p.material[j] as usize);
            let c = contact_coefficients(
                overlap,
                env.materials.get(mi),
                env.materials.get(mj),
                env.materials.pair_restitution(mi, mj),
                p.radius[i],
                p.radius[j],
                p.mass[i],
                p.mass[j],
            );
            // each contact is held by both particles
            energy +=
                0.5 * (0.4 * c.k_n * overlap.powf(2.5) + 0.5 * c.k_t * slot.delta_t.norm_squared());
        }
    }
    energy
}

/// Writes a rendered report to `path`.
pub fn write_report(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn variant_from_flag(
    flag: Option<&str>,
) -> std::result::Result<Option<CollideVariant>, String> {
    flag.map(|f| {
        CollideVariant::parse(f)
            .ok_or_else(|| format!("unknown variant '{f}', expected baseline or two_phase"))
    })
    .transpose()
}
