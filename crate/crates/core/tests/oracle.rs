mod common;

use std::collections::BTreeSet;

use demforge::oracle;
use demforge::pipeline::{CollideMode, CollideVariant, Simulation};

fn found_pairs(sim: &Simulation) -> BTreeSet<(usize, usize)> {
    let t = sim.traces();
    (0..t.lane_count())
        .flat_map(|i| {
            t.lane(i)
                .iter()
                .filter(|e| e.is_contact)
                .map(move |e| (i, e.candidate as usize))
        })
        .collect()
}

fn oracle_pairs(sim: &Simulation) -> BTreeSet<(usize, usize)> {
    oracle::contact_pairs(sim.state())
        .into_iter()
        .flat_map(|(i, j)| [(i, j), (j, i)])
        .collect()
}

/// Steps `sim` and checks Collide plus the wall kernels against the O(N²)
/// reference at every step.
fn check_against_oracle(sim: &mut Simulation, steps: usize, variant: CollideVariant) {
    for _ in 0..steps {
        sim.begin_step().unwrap();
        let mut table = sim.table().clone();
        let mut forces = sim.forces().clone();
        oracle::collide_all(sim.state(), sim.env(), &mut table, &mut forces).unwrap();
        sim.finish_step_with(CollideMode::Single(variant)).unwrap();
        let step = sim.step_index();
        assert_eq!(
            found_pairs(sim),
            oracle_pairs(sim),
            "contact sets differ at step {step}"
        );
        assert!(
            forces.bitwise_eq(sim.forces()),
            "forces differ at step {step}"
        );
        assert!(
            table.bitwise_eq(sim.table()),
            "contact history differs at step {step}"
        );
    }
}

#[test]
fn grid_detection_matches_brute_force_on_dense_states() {
    for seed in 0..20 {
        for n in [256, 2048] {
            let mut sim = common::dense_sim(n, seed, true);
            assert!(sim.initial_metrics().particle_contacts.contacts > n);
            let variant = if seed % 2 == 0 {
                CollideVariant::TwoPhase
            } else {
                CollideVariant::Baseline
            };
            check_against_oracle(&mut sim, 2, variant);
        }
    }
}

#[test]
fn initial_force_evaluation_matches_brute_force() {
    let sim = common::dense_sim(500, 99, true);
    let (set, _) = common::dense_particles(500, 99);
    // the constructor sorts; compare on its cell-ordered state
    assert_eq!(sim.state().len(), set.len());
    let mut forces = demforge::pipeline::ForceAccumulator::zeros(500);
    let mut table = demforge::contacts::ContactTable::new(500, sim.options().contact_capacity);
    demforge::pipeline::force_gravity(sim.state(), &mut forces, &sim.env().gravity);
    oracle::collide_all(sim.state(), sim.env(), &mut table, &mut forces).unwrap();
    assert!(forces.bitwise_eq(sim.forces()));
    assert!(table.bitwise_eq(sim.table()));
}

#[test]
fn brute_force_pairs_on_a_tiny_example() {
    let mut set = demforge::pipeline::ParticleSet::default();
    let z = demforge::Vec3::zeros();
    set.push(demforge::Vec3::new(0.0, 0.0, 0.0), z, z, 0.5, 1.0, 0);
    set.push(demforge::Vec3::new(0.9, 0.0, 0.0), z, z, 0.5, 1.0, 0);
    set.push(demforge::Vec3::new(2.0, 0.0, 0.0), z, z, 0.5, 1.0, 0);
    set.push(demforge::Vec3::new(1.0, 0.0, 0.0), z, z, 0.5, 1.0, 0);
    assert_eq!(oracle::contact_pairs(&set), vec![(0, 1), (1, 3)]);
}
