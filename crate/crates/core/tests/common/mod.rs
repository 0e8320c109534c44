#![allow(dead_code)]

use demforge::grid::UniformGrid;
use demforge::init::Jitter;
use demforge::physics::{MaterialParams, MaterialTable, Rectangle, Segment, Vec3};
use demforge::pipeline::{
    Environment, LineWall, ParticleSet, RectangleWall, SimOptions, Simulation,
};

pub fn material(restitution: f64, mu: f64) -> MaterialParams {
    MaterialParams {
        poisson_ratio: 0.3,
        shear_modulus: 3.85e5,
        youngs_modulus: 1e6,
        restitution,
        sliding_friction: mu,
    }
}

/// Closed box `[0, side]³` minus the lid, plus one segment along a floor edge.
pub fn boxed_env(side: f64, dt: f64, gravity: Vec3) -> Environment {
    let r = |c: [f64; 3], u: [f64; 3], v: [f64; 3], m| RectangleWall {
        shape: Rectangle::new(Vec3::from(c), Vec3::from(u), Vec3::from(v)).unwrap(),
        material: m,
    };
    Environment {
        dt,
        gravity,
        materials: MaterialTable::new(vec![material(0.7, 0.3), material(0.5, 0.6)]),
        rectangles: vec![
            r([0.0, 0.0, 0.0], [side, 0.0, 0.0], [0.0, side, 0.0], 1),
            r([0.0, 0.0, 0.0], [0.0, side, 0.0], [0.0, 0.0, side], 1),
            r([side, 0.0, 0.0], [0.0, side, 0.0], [0.0, 0.0, side], 1),
            r([0.0, 0.0, 0.0], [side, 0.0, 0.0], [0.0, 0.0, side], 0),
            r([0.0, side, 0.0], [side, 0.0, 0.0], [0.0, 0.0, side], 0),
        ],
        lines: vec![LineWall {
            shape: Segment::new(Vec3::new(0.0, 0.3, 0.3), Vec3::new(side, 0.3, 0.3)).unwrap(),
            material: 0,
        }],
    }
}

/// Overlapping packing: a cubic lattice of pitch 0.9 holding particles of
/// radius 0.4 to 0.5, jittered, with random velocities and spins and two
/// materials. About half of the lattice neighbors overlap.
pub fn dense_particles(n: usize, seed: u64) -> (ParticleSet, f64) {
    let side_count = (n as f64).cbrt().ceil() as usize;
    let pitch = 0.9;
    let side = side_count as f64 * pitch;
    let mut rng = Jitter::new(seed);
    let mut set = ParticleSet::with_capacity(n);
    for k in 0..n {
        let (ix, iy, iz) = (
            k % side_count,
            (k / side_count) % side_count,
            k / (side_count * side_count),
        );
        let site = pitch * Vec3::new(ix as f64 + 0.5, iy as f64 + 0.5, iz as f64 + 0.5);
        let position = site + rng.vector(0.05);
        let velocity = rng.vector(0.5);
        let spin = rng.vector(1.0);
        let radius = 0.4 + 0.1 * rng.unit();
        let mass = 4.0 * radius * radius * radius;
        set.push(position, velocity, spin, radius, mass, (k % 2) as u16);
    }
    (set, side)
}

pub fn dense_sim(n: usize, seed: u64, walls: bool) -> Simulation {
    let (set, side) = dense_particles(n, seed);
    let mut env = boxed_env(side, 1e-4, Vec3::new(0.0, 0.0, -9.81));
    if !walls {
        env.rectangles.clear();
        env.lines.clear();
    }
    let grid = UniformGrid::new(
        Vec3::zeros(),
        Vec3::from_element(side),
        UniformGrid::default_cell_size(0.5),
    )
    .unwrap();
    Simulation::new(set, env, grid, SimOptions::default()).unwrap()
}
