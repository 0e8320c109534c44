//! Collide kernels. One logical thread per particle; a thread reads the
//! shared state and writes only its own force, torque and contact row.

use arrayvec::ArrayVec;
use rayon::prelude::*;

use super::{CollideVariant, Environment, ForceAccumulator, ParticleSet};
use crate::contacts::{ContactRow, ContactTable, Partner};
use crate::error::{Error, Result};
use crate::grid::{SortedOrder, UniformGrid};
use crate::physics::{
    self, contact_coefficients, contact_force, contact_geometry, update_tangential_displacement,
    ContactForce, ContactGeometry, ContactPartner, PartnerKind, Vec3,
};
use crate::simt::{CandidateEvent, TraceSet};

/// Relative slack allowed on `|F_t| <= μ_D |F_n|` when checking contacts.
pub const FRICTION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy)]
pub struct CollideContext<'a> {
    /// State in cell order, consistent with `order`.
    pub particles: &'a ParticleSet,
    pub grid: &'a UniformGrid,
    pub order: &'a SortedOrder,
    pub env: &'a Environment,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactStats {
    /// Contacts seen, counted once per owning particle.
    pub contacts: usize,
    pub max_per_particle: usize,
    pub capped: usize,
    pub friction_violations: usize,
}

impl ContactStats {
    fn add_lane(&mut self, lane: &ContactStats) {
        self.contacts += lane.contacts;
        self.max_per_particle = self.max_per_particle.max(lane.contacts);
        self.capped += lane.capped;
        self.friction_violations += lane.friction_violations;
    }

    fn record(&mut self, f: &ContactForce, mu: f64) {
        self.contacts += 1;
        self.capped += f.capped as usize;
        let limit = mu * f.normal_force.norm() * (1.0 + FRICTION_TOLERANCE);
        if f.tangential_force.norm() > limit {
            self.friction_violations += 1;
        }
    }

    /// Combines the stats of two wall kernels run over the same particles.
    pub fn merged(&self, other: &ContactStats) -> ContactStats {
        ContactStats {
            contacts: self.contacts + other.contacts,
            max_per_particle: self.max_per_particle.max(other.max_per_particle),
            capped: self.capped + other.capped,
            friction_violations: self.friction_violations + other.friction_violations,
        }
    }

    /// Mean contacts per particle.
    pub fn coordination(&self, particles: usize) -> f64 {
        if particles == 0 {
            0.0
        } else {
            self.contacts as f64 / particles as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CollideOutput {
    pub traces: TraceSet,
    pub stats: ContactStats,
}

/// Shared per-pair physics: tangential history update, force, friction cap,
/// torque, and write-back of the history.
fn interact(
    ctx: &CollideContext<'_>,
    i: usize,
    partner_id: Partner,
    partner: &ContactPartner,
    geom: &ContactGeometry,
    row: &mut ContactRow<'_>,
) -> Result<(ContactForce, f64)> {
    let p = ctx.particles;
    let materials = &ctx.env.materials;
    let (mat_i, mat_j) = (p.material[i] as usize, partner.material);
    let capacity = row.capacity();
    let slot = row
        .lookup_or_insert(partner_id)
        .map_err(|_| Error::CapacityExceeded {
            particle: p.ids[i] as usize,
            capacity,
        })?;
    let delta_t =
        update_tangential_displacement(slot, &geom.normal, &geom.tangential_velocity, ctx.env.dt);
    let coeffs = contact_coefficients(
        geom.overlap,
        materials.get(mat_i),
        materials.get(mat_j),
        materials.pair_restitution(mat_i, mat_j),
        p.radius[i],
        partner.radius,
        p.mass[i],
        partner.mass,
    );
    let mu = materials.pair_friction(mat_i, mat_j);
    let f = contact_force(geom, &coeffs, &delta_t, mu, p.radius[i]);
    *slot = f.tangential_displacement;
    Ok((f, mu))
}

fn particle_partner(p: &ParticleSet, j: usize) -> ContactPartner {
    ContactPartner::particle(
        p.radius[j],
        p.mass[j],
        p.velocity[j],
        p.angular_velocity[j],
        p.material[j] as usize,
    )
}

fn geometry(p: &ParticleSet, i: usize, j: usize) -> Result<Option<ContactGeometry>> {
    contact_geometry(
        &p.position[i],
        p.radius[i],
        &p.position[j],
        p.radius[j],
        &p.velocity[i],
        &p.velocity[j],
        &p.angular_velocity[i],
        &p.angular_velocity[j],
    )
    .map_err(|_| degenerate(p, i, Partner::Particle(p.ids[j])))
}

fn degenerate(p: &ParticleSet, i: usize, partner: Partner) -> Error {
    Error::DegenerateContact {
        particle: p.ids[i] as usize,
        partner,
    }
}

/// Visits every candidate of particle `i` in traversal order: neighbor cells
/// in ascending index, slots ascending within a cell, skipping `i` itself.
#[inline]
fn for_each_candidate(
    ctx: &CollideContext<'_>,
    i: usize,
    mut visit: impl FnMut(usize) -> Result<()>,
) -> Result<()> {
    let cell = ctx.order.sorted_keys[i] as usize;
    for nc in ctx.grid.neighbor_cells(cell) {
        for j in ctx.order.cell_range(nc as usize) {
            if j != i {
                visit(j)?;
            }
        }
    }
    Ok(())
}

struct Lane {
    events: Vec<CandidateEvent>,
    stats: ContactStats,
}

fn baseline_lane(
    ctx: &CollideContext<'_>,
    i: usize,
    force: &mut Vec3,
    torque: &mut Vec3,
    row: &mut ContactRow<'_>,
) -> Result<Lane> {
    let p = ctx.particles;
    let mut lane = Lane {
        events: Vec::with_capacity(32),
        stats: ContactStats::default(),
    };
    for_each_candidate(ctx, i, |j| {
        let geom = geometry(p, i, j)?;
        lane.events.push(CandidateEvent {
            candidate: j as u32,
            is_contact: geom.is_some(),
        });
        if let Some(geom) = geom {
            let (f, mu) = interact(
                ctx,
                i,
                Partner::Particle(j as u32),
                &particle_partner(p, j),
                &geom,
                row,
            )?;
            *force += f.force;
            *torque += f.torque;
            lane.stats.record(&f, mu);
        }
        Ok(())
    })?;
    Ok(lane)
}

fn two_phase_lane(
    ctx: &CollideContext<'_>,
    i: usize,
    force: &mut Vec3,
    torque: &mut Vec3,
    row: &mut ContactRow<'_>,
) -> Result<Lane> {
    let p = ctx.particles;
    let capacity = row.capacity();
    let mut lane = Lane {
        events: Vec::with_capacity(32),
        stats: ContactStats::default(),
    };
    let mut found: ArrayVec<u32, 64> = ArrayVec::new();
    let local_capacity = capacity.min(found.capacity());

    // scan: contact checks only, partner ids kept locally
    for_each_candidate(ctx, i, |j| {
        let hit =
            physics::overlap_distance(&p.position[i], p.radius[i], &p.position[j], p.radius[j])
                .map_err(|_| degenerate(p, i, Partner::Particle(p.ids[j])))?
                .is_some();
        lane.events.push(CandidateEvent {
            candidate: j as u32,
            is_contact: hit,
        });
        if hit {
            if found.len() == local_capacity {
                return Err(Error::CapacityExceeded {
                    particle: p.ids[i] as usize,
                    capacity,
                });
            }
            found.push(j as u32);
        }
        Ok(())
    })?;

    // forces over the recorded partners, in discovery order
    for &j in &found {
        let j = j as usize;
        let geom = geometry(p, i, j)?.expect("recorded partner is in contact");
        let (f, mu) = interact(
            ctx,
            i,
            Partner::Particle(j as u32),
            &particle_partner(p, j),
            &geom,
            row,
        )?;
        *force += f.force;
        *torque += f.torque;
        lane.stats.record(&f, mu);
    }
    Ok(lane)
}

type LaneFn =
    fn(&CollideContext<'_>, usize, &mut Vec3, &mut Vec3, &mut ContactRow<'_>) -> Result<Lane>;

fn run_lanes(
    ctx: &CollideContext<'_>,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
    lane_fn: LaneFn,
) -> Result<CollideOutput> {
    assert_eq!(table.particle_count(), ctx.particles.len());
    let lanes: Vec<Result<Lane>> = forces
        .force
        .par_iter_mut()
        .zip(forces.torque.par_iter_mut())
        .zip(table.par_rows_mut())
        .enumerate()
        .map(|(i, ((f, t), mut row))| lane_fn(ctx, i, f, t, &mut row))
        .collect();

    let mut traces = TraceSet::new();
    let mut stats = ContactStats::default();
    for lane in lanes {
        // the lowest failing slot wins, independent of scheduling
        let lane = lane?;
        traces.push_lane(&lane.events);
        stats.add_lane(&lane.stats);
    }
    Ok(CollideOutput { traces, stats })
}

/// Collide with the force evaluated as soon as a contact is found.
pub fn collide_baseline(
    ctx: &CollideContext<'_>,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
) -> Result<CollideOutput> {
    run_lanes(ctx, table, forces, baseline_lane)
}

/// Collide split into a contact scan that records partner ids and a second
/// loop that evaluates forces for the recorded partners. Forces, torques
/// and contact history are bitwise identical to [`collide_baseline`].
pub fn collide_two_phase(
    ctx: &CollideContext<'_>,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
) -> Result<CollideOutput> {
    run_lanes(ctx, table, forces, two_phase_lane)
}

pub fn collide(
    variant: CollideVariant,
    ctx: &CollideContext<'_>,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
) -> Result<CollideOutput> {
    match variant {
        CollideVariant::Baseline => collide_baseline(ctx, table, forces),
        CollideVariant::TwoPhase => collide_two_phase(ctx, table, forces),
    }
}

fn collide_walls<W: Sync>(
    ctx: &CollideContext<'_>,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
    walls: &[W],
    wall: impl Fn(&W, u32, &Vec3) -> (Partner, ContactPartner, Vec3) + Sync,
) -> Result<ContactStats> {
    if walls.is_empty() {
        return Ok(ContactStats::default());
    }
    let p = ctx.particles;
    let lanes: Vec<Result<ContactStats>> = forces
        .force
        .par_iter_mut()
        .zip(forces.torque.par_iter_mut())
        .zip(table.par_rows_mut())
        .enumerate()
        .map(|(i, ((force, torque), mut row))| {
            let mut stats = ContactStats::default();
            for (w, shape) in walls.iter().enumerate() {
                let (id, partner, closest) = wall(shape, w as u32, &p.position[i]);
                let geom = physics::wall_contact_geometry(
                    &p.position[i],
                    p.radius[i],
                    &p.velocity[i],
                    &p.angular_velocity[i],
                    &closest,
                )
                .map_err(|_| degenerate(p, i, id))?;
                if let Some(geom) = geom {
                    let (f, mu) = interact(ctx, i, id, &partner, &geom, &mut row)?;
                    *force += f.force;
                    *torque += f.torque;
                    stats.record(&f, mu);
                }
            }
            Ok(stats)
        })
        .collect();
    let mut stats = ContactStats::default();
    for lane in lanes {
        stats.add_lane(&lane?);
    }
    Ok(stats)
}

pub fn collide_rectangle(
    ctx: &CollideContext<'_>,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
) -> Result<ContactStats> {
    collide_walls(ctx, table, forces, &ctx.env.rectangles, |w, id, pos| {
        (
            Partner::Rectangle(id),
            ContactPartner::wall(PartnerKind::Rectangle, w.material as usize),
            w.shape.closest_point(pos).0,
        )
    })
}

pub fn collide_line(
    ctx: &CollideContext<'_>,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
) -> Result<ContactStats> {
    collide_walls(ctx, table, forces, &ctx.env.lines, |w, id, pos| {
        (
            Partner::Line(id),
            ContactPartner::wall(PartnerKind::Line, w.material as usize),
            w.shape.closest_point(pos).0,
        )
    })
}
