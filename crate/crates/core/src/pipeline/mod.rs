//! The simulation step: nine data-parallel kernels separated by barriers.
//!
//! Order per step: Integrate, CalcHash, BitonicSort,
//! FindCellBoundsAndReorder, ForceGravity, InitializeContactIDs, Collide,
//! CollideRectangle, CollideLine. Integrate consumes the forces of the
//! previous step; [`Simulation::new`] evaluates the initial forces so the
//! first step starts from a consistent state.

mod collide;
mod state;

use std::time::Instant;

use rayon::prelude::*;

pub use collide::{
    collide, collide_baseline, collide_line, collide_rectangle, collide_two_phase, CollideContext,
    CollideOutput, ContactStats, FRICTION_TOLERANCE,
};
pub use state::{ForceAccumulator, ParticleSet};

use crate::contacts::ContactTable;
use crate::error::{Error, Kernel, Result};
use crate::grid::{self, SortStats, SortedOrder, UniformGrid};
use crate::physics::{MaterialTable, Rectangle, Segment, Vec3};
use crate::simt::{self, TraceSet, WarpCostParams, WarpStats};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CollideVariant {
    /// Force evaluated inside the candidate loop, as soon as a contact is found.
    Baseline,
    /// Candidate loop records partner ids; a second loop evaluates forces.
    #[default]
    TwoPhase,
}

impl CollideVariant {
    pub fn name(self) -> &'static str {
        match self {
            CollideVariant::Baseline => "baseline",
            CollideVariant::TwoPhase => "two_phase",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(CollideVariant::Baseline),
            "two_phase" => Some(CollideVariant::TwoPhase),
            _ => None,
        }
    }
}

/// How the Collide kernel runs in a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollideMode {
    Single(CollideVariant),
    /// Run both variants on identical input, require bitwise-equal results,
    /// and keep the two-phase output.
    Compare,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectangleWall {
    pub shape: Rectangle,
    pub material: u16,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineWall {
    pub shape: Segment,
    pub material: u16,
}

/// Everything a kernel reads besides particle state.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub dt: f64,
    pub gravity: Vec3,
    pub materials: MaterialTable,
    pub rectangles: Vec<RectangleWall>,
    pub lines: Vec<LineWall>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub variant: CollideVariant,
    pub contact_capacity: usize,
    pub warp: WarpCostParams,
    /// Accept cells smaller than `2 r_max`; contacts may then be missed.
    pub allow_undersized_cells: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            variant: CollideVariant::TwoPhase,
            contact_capacity: crate::contacts::DEFAULT_CAPACITY,
            warp: WarpCostParams::default(),
            allow_undersized_cells: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    /// Wall time per kernel, indexed by [`Kernel::index`].
    pub wall_ns: [u64; 9],
    /// Collide wall time per variant when both ran (compare mode).
    pub collide_wall_ns: Option<(u64, u64)>,
    pub warp: WarpStats,
    pub particle_contacts: ContactStats,
    pub rect_contacts: ContactStats,
    pub line_contacts: ContactStats,
    pub clamps: usize,
    pub sort: SortStats,
}

impl StepMetrics {
    pub fn wall_ns(&self, kernel: Kernel) -> u64 {
        self.wall_ns[kernel.index()]
    }

    /// Particle and wall contacts of the step combined.
    pub fn all_contacts(&self) -> ContactStats {
        self.particle_contacts
            .merged(&self.rect_contacts)
            .merged(&self.line_contacts)
    }

    pub fn friction_violations(&self) -> usize {
        self.all_contacts().friction_violations
    }
}

fn timed<T>(metrics: &mut StepMetrics, kernel: Kernel, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    metrics.wall_ns[kernel.index()] = start.elapsed().as_nanos() as u64;
    out
}

/// Semi-implicit Euler update of velocity, position and angular velocity.
pub fn integrate(state: &mut ParticleSet, forces: &ForceAccumulator, dt: f64) -> Result<()> {
    let ParticleSet {
        ids,
        position,
        velocity,
        angular_velocity,
        radius,
        mass,
        ..
    } = state;
    let bad = (
        position.par_iter_mut(),
        velocity.par_iter_mut(),
        angular_velocity.par_iter_mut(),
    )
        .into_par_iter()
        .enumerate()
        .filter_map(|(i, (x, v, w))| {
            let (f, t) = (&forces.force[i], &forces.torque[i]);
            if !(f.iter().all(|c| c.is_finite()) && t.iter().all(|c| c.is_finite())) {
                return Some(i);
            }
            let inertia = 0.4 * mass[i] * radius[i] * radius[i];
            *v += f / mass[i] * dt;
            *x += *v * dt;
            *w += t / inertia * dt;
            None
        })
        .min();
    match bad {
        Some(i) => Err(Error::NonFiniteForce {
            particle: ids[i] as usize,
        }),
        None => Ok(()),
    }
}

/// Adds `m g` to every particle's force.
pub fn force_gravity(state: &ParticleSet, forces: &mut ForceAccumulator, gravity: &Vec3) {
    forces
        .force
        .par_iter_mut()
        .zip(state.mass.par_iter())
        .for_each(|(f, &m)| *f += m * gravity);
}

pub struct Simulation {
    state: ParticleSet,
    forces: ForceAccumulator,
    table: ContactTable,
    grid: UniformGrid,
    order: SortedOrder,
    env: Environment,
    options: SimOptions,
    step: u64,
    keys: Vec<u32>,
    traces: TraceSet,
    pending: Option<StepMetrics>,
    initial_metrics: StepMetrics,
}

impl Simulation {
    /// Builds the simulation and evaluates the forces on the initial state.
    pub fn new(
        state: ParticleSet,
        env: Environment,
        grid: UniformGrid,
        options: SimOptions,
    ) -> Result<Self> {
        let max_radius = state.max_radius();
        if !options.allow_undersized_cells && !grid.covers_radius(max_radius) {
            return Err(Error::CellTooSmall {
                cell_size: grid.cell_size(),
                max_radius,
            });
        }
        let n = state.len();
        let mut sim = Simulation {
            state,
            forces: ForceAccumulator::zeros(n),
            table: ContactTable::new(n, options.contact_capacity),
            grid,
            order: SortedOrder::default(),
            env,
            options,
            step: 0,
            keys: Vec::with_capacity(n),
            traces: TraceSet::new(),
            pending: None,
            initial_metrics: StepMetrics::default(),
        };
        let mut metrics = StepMetrics::default();
        sim.prepare_forces(&mut metrics)?;
        sim.pending = Some(metrics);
        sim.initial_metrics = sim.finish_step_with(CollideMode::Single(options.variant))?;
        Ok(sim)
    }

    pub fn state(&self) -> &ParticleSet {
        &self.state
    }

    pub fn forces(&self) -> &ForceAccumulator {
        &self.forces
    }

    pub fn table(&self) -> &ContactTable {
        &self.table
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn order(&self) -> &SortedOrder {
        &self.order
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn options(&self) -> &SimOptions {
        &self.options
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Traces recorded by the most recent Collide.
    pub fn traces(&self) -> &TraceSet {
        &self.traces
    }

    /// Metrics of the force evaluation done at construction.
    pub fn initial_metrics(&self) -> &StepMetrics {
        &self.initial_metrics
    }

    pub fn set_variant(&mut self, variant: CollideVariant) {
        self.options.variant = variant;
    }

    pub fn collide_context(&self) -> CollideContext<'_> {
        CollideContext {
            particles: &self.state,
            grid: &self.grid,
            order: &self.order,
            env: &self.env,
        }
    }

    pub fn step(&mut self) -> Result<StepMetrics> {
        self.step_with(CollideMode::Single(self.options.variant))
    }

    pub fn step_with(&mut self, mode: CollideMode) -> Result<StepMetrics> {
        self.begin_step()?;
        self.finish_step_with(mode)
    }

    /// Runs Integrate through InitializeContactIDs, leaving the simulation
    /// ready for Collide. Tests and benchmarks use this to feed identical
    /// inputs to several Collide implementations.
    pub fn begin_step(&mut self) -> Result<()> {
        assert!(self.pending.is_none(), "begin_step called twice");
        self.step += 1;
        let mut metrics = StepMetrics {
            step: self.step,
            ..StepMetrics::default()
        };
        let dt = self.env.dt;
        timed(&mut metrics, Kernel::Integrate, || {
            integrate(&mut self.state, &self.forces, dt)
        })
        .map_err(|e| e.in_kernel(self.step, Kernel::Integrate))?;
        self.prepare_forces(&mut metrics)?;
        self.pending = Some(metrics);
        Ok(())
    }

    fn prepare_forces(&mut self, metrics: &mut StepMetrics) -> Result<()> {
        metrics.clamps = timed(metrics, Kernel::CalcHash, || {
            grid::calc_hashes(&self.grid, &self.state.position, &mut self.keys)
        });

        let identity: Vec<u32> = (0..self.state.len() as u32).collect();
        let (sorted_keys, permutation, stats) = timed(metrics, Kernel::BitonicSort, || {
            grid::bitonic_sort(&self.keys, &identity)
        });
        metrics.sort = stats;

        let cell_count = self.grid.cell_count();
        let (order, state) = timed(metrics, Kernel::FindCellBoundsAndReorder, || {
            grid::find_cell_bounds_and_reorder(
                sorted_keys,
                permutation,
                cell_count,
                &self.state,
                &mut self.table,
            )
        });
        self.order = order;
        self.state = state;

        let gravity = self.env.gravity;
        timed(metrics, Kernel::ForceGravity, || {
            self.forces.clear();
            force_gravity(&self.state, &mut self.forces, &gravity);
        });

        timed(metrics, Kernel::InitializeContactIds, || {
            self.table.initialize_contact_ids()
        });
        Ok(())
    }

    /// Runs Collide, CollideRectangle and CollideLine after [`begin_step`].
    ///
    /// [`begin_step`]: Simulation::begin_step
    pub fn finish_step_with(&mut self, mode: CollideMode) -> Result<StepMetrics> {
        let mut metrics = self.pending.take().expect("finish_step without begin_step");
        let step = self.step;
        let ctx = CollideContext {
            particles: &self.state,
            grid: &self.grid,
            order: &self.order,
            env: &self.env,
        };

        let out = match mode {
            CollideMode::Single(variant) => timed(&mut metrics, Kernel::Collide, || {
                collide(variant, &ctx, &mut self.table, &mut self.forces)
            })
            .map_err(|e| e.in_kernel(step, Kernel::Collide))?,
            CollideMode::Compare => {
                let mut base_table = self.table.clone();
                let mut base_forces = self.forces.clone();
                let t0 = Instant::now();
                let base = collide_baseline(&ctx, &mut base_table, &mut base_forces)
                    .map_err(|e| e.in_kernel(step, Kernel::Collide))?;
                let t1 = Instant::now();
                let two = collide_two_phase(&ctx, &mut self.table, &mut self.forces)
                    .map_err(|e| e.in_kernel(step, Kernel::Collide))?;
                let t2 = Instant::now();
                let (nb, nt) = ((t1 - t0).as_nanos() as u64, (t2 - t1).as_nanos() as u64);
                metrics.collide_wall_ns = Some((nb, nt));
                metrics.wall_ns[Kernel::Collide.index()] = nt;
                let mismatch = |what: &str| Error::VariantMismatch {
                    step,
                    what: what.to_string(),
                };
                if !base_forces.bitwise_eq(&self.forces) {
                    return Err(mismatch("forces or torques"));
                }
                if !base_table.bitwise_eq(&self.table) {
                    return Err(mismatch("contact table"));
                }
                if base.traces != two.traces || base.stats != two.stats {
                    return Err(mismatch("candidate traces"));
                }
                two
            }
        };
        metrics.particle_contacts = out.stats;
        metrics.warp = simt::analyze(&out.traces, &self.options.warp).aggregate;
        self.traces = out.traces;

        let rect = timed(&mut metrics, Kernel::CollideRectangle, || {
            collide_rectangle(&ctx, &mut self.table, &mut self.forces)
        })
        .map_err(|e| e.in_kernel(step, Kernel::CollideRectangle))?;
        let line = timed(&mut metrics, Kernel::CollideLine, || {
            collide_line(&ctx, &mut self.table, &mut self.forces)
        })
        .map_err(|e| e.in_kernel(step, Kernel::CollideLine))?;
        metrics.rect_contacts = rect;
        metrics.line_contacts = line;
        Ok(metrics)
    }

    /// Clones the state needed to resume from this point.
    pub fn snapshot(&self) -> SimSnapshot {
        SimSnapshot {
            state: self.state.clone(),
            forces: self.forces.clone(),
            table: self.table.clone(),
            step: self.step,
        }
    }

    pub fn restore(&mut self, snapshot: &SimSnapshot) {
        assert!(self.pending.is_none());
        self.state = snapshot.state.clone();
        self.forces = snapshot.forces.clone();
        self.table = snapshot.table.clone();
        self.step = snapshot.step;
    }
}

/// Saved dynamic state of a [`Simulation`].
#[derive(Clone, Debug)]
pub struct SimSnapshot {
    pub state: ParticleSet,
    pub forces: ForceAccumulator,
    pub table: ContactTable,
    pub step: u64,
}
