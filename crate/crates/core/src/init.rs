//! Initial particle placement.
//!
//! Lattice sites sit at `domain.min + spacing (k + 1/2)` per axis, filled x
//! fastest, then y, then z. Each particle draws three position offsets and
//! then three velocity offsets from Xoshiro256++ seeded through SplitMix64
//! with the configured seed. A draw maps `next_u64() >> 11` to `u` in
//! `[0, 1)` and then to `(2u − 1) · half_width`.

use std::collections::HashMap;

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::config::{InitKind, SimConfig};
use crate::contacts::Partner;
use crate::error::{Error, Result};
use crate::physics::Vec3;
use crate::pipeline::{Environment, ParticleSet};

pub struct Jitter {
    rng: Xoshiro256PlusPlus,
}

impl Jitter {
    pub fn new(seed: u64) -> Self {
        Jitter {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn symmetric(&mut self, half_width: f64) -> f64 {
        (2.0 * self.unit() - 1.0) * half_width
    }

    pub fn vector(&mut self, half_width: f64) -> Vec3 {
        let x = self.symmetric(half_width);
        let y = self.symmetric(half_width);
        let z = self.symmetric(half_width);
        Vec3::new(x, y, z)
    }
}

/// Builds the initial particles and checks that none touch each other or
/// a wall.
pub fn build_particles(config: &SimConfig) -> Result<ParticleSet> {
    let p = &config.particles;
    let material = config.particle_material()?;
    let mut set = ParticleSet::with_capacity(p.count);
    match p.init {
        InitKind::Lattice => {
            let spacing = p.spacing();
            let jitter = p.jitter();
            let [nx, ny, _] = config.lattice_dims();
            let mut rng = Jitter::new(config.seed);
            for k in 0..p.count {
                let (ix, iy, iz) = (k % nx, (k / nx) % ny, k / (nx * ny));
                let site = config.domain_min
                    + spacing * Vec3::new(ix as f64 + 0.5, iy as f64 + 0.5, iz as f64 + 0.5);
                let position = site + rng.vector(jitter);
                let velocity = p.velocity + rng.vector(p.velocity_jitter);
                set.push(
                    position,
                    velocity,
                    Vec3::zeros(),
                    p.radius,
                    p.mass,
                    material,
                );
            }
        }
        InitKind::Explicit => {
            for e in config.explicit.values() {
                set.push(
                    e.position,
                    e.velocity,
                    e.angular_velocity,
                    p.radius,
                    p.mass,
                    material,
                );
            }
        }
    }
    check_separated(&set, &config.environment())?;
    Ok(set)
}

/// Fails on the first pair of overlapping particles, or particle touching
/// a wall, in id order.
pub fn check_separated(set: &ParticleSet, env: &Environment) -> Result<()> {
    let n = set.len();
    if n == 0 {
        return Ok(());
    }
    let h = 2.0 * set.max_radius();
    let cell = |x: &Vec3| [0, 1, 2].map(|i| (x[i] / h).floor() as i64);
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for i in 0..n {
        buckets.entry(cell(&set.position[i])).or_default().push(i);
    }
    for i in 0..n {
        let [cx, cy, cz] = cell(&set.position[i]);
        let mut first: Option<usize> = None;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(list) = buckets.get(&[cx + dx, cy + dy, cz + dz]) else {
                        continue;
                    };
                    for &j in list {
                        let d = (set.position[j] - set.position[i]).norm();
                        if j > i && d < set.radius[i] + set.radius[j] && first.is_none_or(|f| j < f)
                        {
                            first = Some(j);
                        }
                    }
                }
            }
        }
        if let Some(j) = first {
            return Err(Error::InitialContact {
                first: set.ids[i] as usize,
                second: set.ids[j] as usize,
            });
        }
        let pos = &set.position[i];
        let r = set.radius[i];
        for (w, wall) in env.rectangles.iter().enumerate() {
            if (wall.shape.closest_point(pos).0 - pos).norm() < r {
                return Err(Error::InitialWallContact {
                    particle: set.ids[i] as usize,
                    wall: Partner::Rectangle(w as u32),
                });
            }
        }
        for (w, wall) in env.lines.iter().enumerate() {
            if (wall.shape.closest_point(pos).0 - pos).norm() < r {
                return Err(Error::InitialWallContact {
                    particle: set.ids[i] as usize,
                    wall: Partner::Line(w as u32),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
dt = 1e-4
domain.min.x = -1
domain.min.y = 0
domain.min.z = 0
domain.max.x = 1
domain.max.y = 1
domain.max.z = 1
particles.count = 100
particles.radius = 0.05
particles.mass = 0.001
material.glass.poisson = 0.3
material.glass.shear_modulus = 4e6
material.glass.youngs_modulus = 1e7
material.glass.restitution = 0.9
material.glass.mu_d = 0.3
";

    #[test]
    fn lattice_fills_x_first_from_the_corner() {
        let c: SimConfig = format!("{BASE}particles.jitter = 0\n").parse().unwrap();
        let s = build_particles(&c).unwrap();
        let spacing = c.particles.spacing();
        let nx = (2.0f64 / spacing).floor() as usize;
        assert_eq!(s.len(), 100);
        assert_eq!(
            s.position[0],
            Vec3::new(-1.0 + 0.5 * spacing, 0.5 * spacing, 0.5 * spacing)
        );
        assert_eq!(s.position[1].x, -1.0 + 1.5 * spacing);
        assert_eq!(s.position[nx].y, 1.5 * spacing);
        assert_eq!(s.ids, (0..100).collect::<Vec<u32>>());
    }

    #[test]
    fn jitter_is_seeded_and_bounded() {
        let c: SimConfig = BASE.parse().unwrap();
        let a = build_particles(&c).unwrap();
        let b = build_particles(&c).unwrap();
        assert!(a.bitwise_eq(&b));
        let mut other = c.clone();
        other.seed = 1;
        assert!(!build_particles(&other).unwrap().bitwise_eq(&a));
        let zero: SimConfig = format!("{BASE}particles.jitter = 0\n").parse().unwrap();
        let z = build_particles(&zero).unwrap();
        let j = c.particles.jitter();
        for i in 0..a.len() {
            let off = a.position[i] - z.position[i];
            assert!(off.amax() <= j);
        }
    }

    #[test]
    fn unit_draws_stay_in_range() {
        let mut rng = Jitter::new(7);
        for _ in 0..10_000 {
            let u = rng.unit();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn overlapping_explicit_particles_are_rejected() {
        let text = BASE.replace("particles.count = 100", "particles.count = 2")
            + "particles.init = explicit\nparticle.0.position = 0 0.5 0.5\nparticle.1.position = 0.09 0.5 0.5\n";
        let c: SimConfig = text.parse().unwrap();
        assert!(matches!(
            build_particles(&c),
            Err(Error::InitialContact {
                first: 0,
                second: 1
            })
        ));
    }

    #[test]
    fn particle_touching_a_wall_is_rejected() {
        let text = format!(
            "{BASE}particles.jitter = 0\nparticles.lattice_spacing = 0.12\n\
             wall.rect.0.corner = -1 0 0.01\nwall.rect.0.edge_u = 2 0 0\nwall.rect.0.edge_v = 0 1 0\nwall.rect.0.material = glass\n"
        );
        let c: SimConfig = text.parse().unwrap();
        assert!(matches!(
            build_particles(&c),
            Err(Error::InitialWallContact {
                particle: 0,
                wall: Partner::Rectangle(0)
            })
        ));
    }
}
