use crate::physics::Vec3;

/// Structure-of-arrays particle state. `ids` carries each particle's stable
/// id across reorders; every other array is indexed by the current slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleSet {
    pub ids: Vec<u32>,
    pub position: Vec<Vec3>,
    pub velocity: Vec<Vec3>,
    pub angular_velocity: Vec<Vec3>,
    pub radius: Vec<f64>,
    pub mass: Vec<f64>,
    pub material: Vec<u16>,
}

impl ParticleSet {
    pub fn with_capacity(n: usize) -> Self {
        ParticleSet {
            ids: Vec::with_capacity(n),
            position: Vec::with_capacity(n),
            velocity: Vec::with_capacity(n),
            angular_velocity: Vec::with_capacity(n),
            radius: Vec::with_capacity(n),
            mass: Vec::with_capacity(n),
            material: Vec::with_capacity(n),
        }
    }

    pub fn push(
        &mut self,
        position: Vec3,
        velocity: Vec3,
        angular_velocity: Vec3,
        radius: f64,
        mass: f64,
        material: u16,
    ) {
        assert!(
            radius > 0.0 && mass > 0.0,
            "radius and mass must be positive"
        );
        self.ids.push(self.ids.len() as u32);
        self.position.push(position);
        self.velocity.push(velocity);
        self.angular_velocity.push(angular_velocity);
        self.radius.push(radius);
        self.mass.push(mass);
        self.material.push(material);
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn max_radius(&self) -> f64 {
        self.radius.iter().copied().fold(0.0, f64::max)
    }

    /// Gathers every array through `permutation[new] = old`.
    pub fn permuted(&self, permutation: &[u32]) -> ParticleSet {
        fn gather<T: Copy>(src: &[T], permutation: &[u32]) -> Vec<T> {
            permutation.iter().map(|&old| src[old as usize]).collect()
        }
        ParticleSet {
            ids: gather(&self.ids, permutation),
            position: gather(&self.position, permutation),
            velocity: gather(&self.velocity, permutation),
            angular_velocity: gather(&self.angular_velocity, permutation),
            radius: gather(&self.radius, permutation),
            mass: gather(&self.mass, permutation),
            material: gather(&self.material, permutation),
        }
    }

    /// Moment of inertia of a solid sphere, (2/5) m r².
    pub fn inertia(&self, i: usize) -> f64 {
        0.4 * self.mass[i] * self.radius[i] * self.radius[i]
    }

    pub fn linear_momentum(&self) -> Vec3 {
        self.velocity
            .iter()
            .zip(&self.mass)
            .fold(Vec3::zeros(), |acc, (v, &m)| acc + m * v)
    }

    /// Translational plus rotational kinetic energy.
    pub fn kinetic_energy(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                0.5 * self.mass[i] * self.velocity[i].norm_squared()
                    + 0.5 * self.inertia(i) * self.angular_velocity[i].norm_squared()
            })
            .sum()
    }

    /// Bit-level equality of all arrays.
    pub fn bitwise_eq(&self, other: &ParticleSet) -> bool {
        self.ids == other.ids
            && self.material == other.material
            && vec_bits_eq(&self.position, &other.position)
            && vec_bits_eq(&self.velocity, &other.velocity)
            && vec_bits_eq(&self.angular_velocity, &other.angular_velocity)
            && scalar_bits_eq(&self.radius, &other.radius)
            && scalar_bits_eq(&self.mass, &other.mass)
    }
}

/// Per-particle force and torque accumulators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForceAccumulator {
    pub force: Vec<Vec3>,
    pub torque: Vec<Vec3>,
}

impl ForceAccumulator {
    pub fn zeros(n: usize) -> Self {
        ForceAccumulator {
            force: vec![Vec3::zeros(); n],
            torque: vec![Vec3::zeros(); n],
        }
    }

    pub fn clear(&mut self) {
        self.force.iter_mut().for_each(|f| *f = Vec3::zeros());
        self.torque.iter_mut().for_each(|t| *t = Vec3::zeros());
    }

    pub fn bitwise_eq(&self, other: &ForceAccumulator) -> bool {
        vec_bits_eq(&self.force, &other.force) && vec_bits_eq(&self.torque, &other.torque)
    }
}

pub(crate) fn vec_bits_eq(a: &[Vec3], b: &[Vec3]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.x.to_bits() == y.x.to_bits()
                && x.y.to_bits() == y.y.to_bits()
                && x.z.to_bits() == y.z.to_bits()
        })
}

fn scalar_bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
