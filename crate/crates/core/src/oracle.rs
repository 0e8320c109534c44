//! O(N²) reference for the Collide kernels: every particle against every
//! other particle and every wall, single threaded, without the grid.
//!
//! On a cell-sorted state, candidates in ascending slot order visit
//! neighbor cells in ascending cell index, which is the pipeline's
//! traversal order, so forces agree bitwise when detection is complete.

use crate::contacts::{ContactTable, Partner};
use crate::error::{Error, Result};
use crate::physics::{
    contact_coefficients, contact_force, contact_geometry, update_tangential_displacement,
    wall_contact_geometry, ContactGeometry, Vec3,
};
use crate::pipeline::{Environment, ForceAccumulator, ParticleSet};

/// Contacting pairs `(i, j)` with `i < j`, in slot indices.
pub fn contact_pairs(particles: &ParticleSet) -> Vec<(usize, usize)> {
    let n = particles.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = (particles.position[j] - particles.position[i]).norm();
            if d < particles.radius[i] + particles.radius[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

#[allow(clippy::too_many_arguments)]
fn apply(
    particles: &ParticleSet,
    env: &Environment,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
    i: usize,
    partner: Partner,
    geom: &ContactGeometry,
    other: (f64, f64, usize),
) -> Result<()> {
    let (r2, m2, mat2) = other;
    let mat1 = particles.material[i] as usize;
    let capacity = table.capacity();
    let slot = table
        .lookup_or_insert(i, partner)
        .map_err(|_| Error::CapacityExceeded {
            particle: particles.ids[i] as usize,
            capacity,
        })?;
    let delta =
        update_tangential_displacement(slot, &geom.normal, &geom.tangential_velocity, env.dt);
    let m = &env.materials;
    let coeffs = contact_coefficients(
        geom.overlap,
        m.get(mat1),
        m.get(mat2),
        m.pair_restitution(mat1, mat2),
        particles.radius[i],
        r2,
        particles.mass[i],
        m2,
    );
    let f = contact_force(
        geom,
        &coeffs,
        &delta,
        m.pair_friction(mat1, mat2),
        particles.radius[i],
    );
    *slot = f.tangential_displacement;
    forces.force[i] += f.force;
    forces.torque[i] += f.torque;
    Ok(())
}

/// Adds every particle and wall contact force to `forces`, updating the
/// contact history in `table` exactly as Collide, CollideRectangle and
/// CollideLine would.
pub fn collide_all(
    particles: &ParticleSet,
    env: &Environment,
    table: &mut ContactTable,
    forces: &mut ForceAccumulator,
) -> Result<()> {
    let p = particles;
    let degenerate = |i: usize, partner| Error::DegenerateContact {
        particle: p.ids[i] as usize,
        partner,
    };
    for i in 0..p.len() {
        for j in 0..p.len() {
            if j == i {
                continue;
            }
            let geom = contact_geometry(
                &p.position[i],
                p.radius[i],
                &p.position[j],
                p.radius[j],
                &p.velocity[i],
                &p.velocity[j],
                &p.angular_velocity[i],
                &p.angular_velocity[j],
            )
            .map_err(|_| degenerate(i, Partner::Particle(p.ids[j])))?;
            if let Some(geom) = geom {
                let other = (p.radius[j], p.mass[j], p.material[j] as usize);
                apply(
                    p,
                    env,
                    table,
                    forces,
                    i,
                    Partner::Particle(j as u32),
                    &geom,
                    other,
                )?;
            }
        }
    }
    let walls = |closest: &dyn Fn(&Vec3) -> Vec3, i: usize| {
        wall_contact_geometry(
            &p.position[i],
            p.radius[i],
            &p.velocity[i],
            &p.angular_velocity[i],
            &closest(&p.position[i]),
        )
    };
    for i in 0..p.len() {
        for (w, wall) in env.rectangles.iter().enumerate() {
            let id = Partner::Rectangle(w as u32);
            if let Some(geom) =
                walls(&|x| wall.shape.closest_point(x).0, i).map_err(|_| degenerate(i, id))?
            {
                let other = (f64::INFINITY, f64::INFINITY, wall.material as usize);
                apply(p, env, table, forces, i, id, &geom, other)?;
            }
        }
    }
    for i in 0..p.len() {
        for (w, wall) in env.lines.iter().enumerate() {
            let id = Partner::Line(w as u32);
            if let Some(geom) =
                walls(&|x| wall.shape.closest_point(x).0, i).map_err(|_| degenerate(i, id))?
            {
                let other = (f64::INFINITY, f64::INFINITY, wall.material as usize);
                apply(p, env, table, forces, i, id, &geom, other)?;
            }
        }
    }
    Ok(())
}
