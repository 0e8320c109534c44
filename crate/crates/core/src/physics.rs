//! Contact mechanics for sphere–sphere and sphere–wall contacts.
//!
//! Normal force is Hertzian (`k_n δ_n^{3/2}`) with a velocity dashpot, the
//! tangential force is a spring on the accumulated slip `δ_t` plus a dashpot,
//! and the tangential part is capped by Coulomb sliding friction. All
//! functions here are pure.
//!
//! Sign conventions: `n` points from the center of body 1 toward body 2, the
//! relative velocity is that of body 1 with respect to body 2 at the contact
//! point, and every returned force/torque acts on body 1.

use std::f64::consts::PI;

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Centers closer than this have no usable contact normal.
pub const DEGENERATE_DISTANCE: f64 = 1e-12;

/// Below this magnitude the tangential force has no usable direction.
pub const DEGENERATE_TANGENTIAL: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialParams {
    pub poisson_ratio: f64,
    /// Shear (transverse elastic) modulus, Pa.
    pub shear_modulus: f64,
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    pub restitution: f64,
    pub sliding_friction: f64,
}

impl MaterialParams {
    /// Checks the parameter ranges. Returns the offending field name and a
    /// description when a value is out of range.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let check = |ok: bool, field: &'static str, msg: &str, value: f64| {
            if ok {
                Ok(())
            } else {
                Err((field, format!("{msg}, got {value}")))
            }
        };
        check(
            (0.0..0.5).contains(&self.poisson_ratio),
            "poisson",
            "must satisfy 0 <= poisson < 0.5",
            self.poisson_ratio,
        )?;
        check(
            self.shear_modulus > 0.0 && self.shear_modulus.is_finite(),
            "shear_modulus",
            "must be positive",
            self.shear_modulus,
        )?;
        check(
            self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite(),
            "youngs_modulus",
            "must be positive",
            self.youngs_modulus,
        )?;
        check(
            self.restitution > 0.0 && self.restitution <= 1.0,
            "restitution",
            "must satisfy 0 < restitution <= 1",
            self.restitution,
        )?;
        check(
            self.sliding_friction >= 0.0 && self.sliding_friction.is_finite(),
            "mu_d",
            "must be non-negative",
            self.sliding_friction,
        )
    }
}

/// Materials by id plus the symmetric per-pair restitution and sliding
/// friction tables. Pair entries default to the geometric mean of the two
/// materials' values.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialTable {
    params: Vec<MaterialParams>,
    restitution: Vec<f64>,
    friction: Vec<f64>,
}

impl MaterialTable {
    pub fn new(params: Vec<MaterialParams>) -> Self {
        let n = params.len();
        let mut restitution = vec![0.0; n * n];
        let mut friction = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                restitution[a * n + b] = (params[a].restitution * params[b].restitution).sqrt();
                friction[a * n + b] =
                    (params[a].sliding_friction * params[b].sliding_friction).sqrt();
            }
        }
        MaterialTable {
            params,
            restitution,
            friction,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: usize) -> &MaterialParams {
        &self.params[id]
    }

    pub fn set_pair_restitution(&mut self, a: usize, b: usize, value: f64) {
        let n = self.len();
        self.restitution[a * n + b] = value;
        self.restitution[b * n + a] = value;
    }

    pub fn set_pair_friction(&mut self, a: usize, b: usize, value: f64) {
        let n = self.len();
        self.friction[a * n + b] = value;
        self.friction[b * n + a] = value;
    }

    #[inline]
    pub fn pair_restitution(&self, a: usize, b: usize) -> f64 {
        self.restitution[a * self.len() + b]
    }

    #[inline]
    pub fn pair_friction(&self, a: usize, b: usize) -> f64 {
        self.friction[a * self.len() + b]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartnerKind {
    Particle,
    Rectangle,
    Line,
}

/// The other body of a contact. Walls are static and carry infinite radius
/// and mass; the coefficient formulas take the analytic limits for them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPartner {
    pub kind: PartnerKind,
    pub radius: f64,
    pub mass: f64,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
    pub material: usize,
}

impl ContactPartner {
    pub fn particle(
        radius: f64,
        mass: f64,
        velocity: Vec3,
        angular_velocity: Vec3,
        material: usize,
    ) -> Self {
        ContactPartner {
            kind: PartnerKind::Particle,
            radius,
            mass,
            velocity,
            angular_velocity,
            material,
        }
    }

    pub fn wall(kind: PartnerKind, material: usize) -> Self {
        debug_assert!(kind != PartnerKind::Particle);
        ContactPartner {
            kind,
            radius: f64::INFINITY,
            mass: f64::INFINITY,
            velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            material,
        }
    }

    pub fn is_wall(&self) -> bool {
        self.kind != PartnerKind::Particle
    }
}

/// Centers coincide; the contact normal is undefined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DegenerateContact;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactGeometry {
    pub normal: Vec3,
    pub overlap: f64,
    pub contact_point: Vec3,
    pub relative_velocity: Vec3,
    pub tangential_velocity: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactCoefficients {
    pub k_t: f64,
    pub k_n: f64,
    pub eta_n: f64,
    pub eta_t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactForce {
    pub force: Vec3,
    pub torque: Vec3,
    pub tangential_displacement: Vec3,
    pub normal_force: Vec3,
    pub tangential_force: Vec3,
    pub capped: bool,
}

/// Separation test shared by every contact check. Returns the center
/// distance when the spheres overlap, `None` otherwise.
#[inline]
pub fn overlap_distance(
    pos1: &Vec3,
    r1: f64,
    pos2: &Vec3,
    r2: f64,
) -> Result<Option<f64>, DegenerateContact> {
    let d = (pos2 - pos1).norm();
    if d < DEGENERATE_DISTANCE {
        return Err(DegenerateContact);
    }
    Ok((d < r1 + r2).then_some(d))
}

/// Tangential relative velocity at the contact point:
/// `v − (v·n)n + (r1 ω1 + r2 ω2) × n`.
#[inline]
pub fn tangential_velocity(relative_velocity: &Vec3, normal: &Vec3, spin: &Vec3) -> Vec3 {
    relative_velocity - relative_velocity.dot(normal) * normal + spin.cross(normal)
}

#[allow(clippy::too_many_arguments)]
pub fn contact_geometry(
    pos1: &Vec3,
    r1: f64,
    pos2: &Vec3,
    r2: f64,
    v1: &Vec3,
    v2: &Vec3,
    w1: &Vec3,
    w2: &Vec3,
) -> Result<Option<ContactGeometry>, DegenerateContact> {
    let Some(d) = overlap_distance(pos1, r1, pos2, r2)? else {
        return Ok(None);
    };
    let normal = (pos2 - pos1) / d;
    let overlap = r1 + r2 - d;
    let relative_velocity = v1 - v2;
    let spin = r1 * w1 + r2 * w2;
    Ok(Some(ContactGeometry {
        normal,
        overlap,
        contact_point: pos1 + (r1 - 0.5 * overlap) * normal,
        relative_velocity,
        tangential_velocity: tangential_velocity(&relative_velocity, &normal, &spin),
    }))
}

/// Geometry against a static wall whose closest point to the particle
/// center is `closest`. Contact requires `distance < r`.
pub fn wall_contact_geometry(
    pos: &Vec3,
    r: f64,
    v: &Vec3,
    w: &Vec3,
    closest: &Vec3,
) -> Result<Option<ContactGeometry>, DegenerateContact> {
    let offset = closest - pos;
    let d = offset.norm();
    if d < DEGENERATE_DISTANCE {
        return Err(DegenerateContact);
    }
    if d >= r {
        return Ok(None);
    }
    let normal = offset / d;
    let spin = r * w;
    Ok(Some(ContactGeometry {
        normal,
        overlap: r - d,
        contact_point: *closest,
        relative_velocity: *v,
        tangential_velocity: tangential_velocity(v, &normal, &spin),
    }))
}

/// Damping factor α(ε) = −2 ln ε / sqrt(π² + ln² ε); zero for ε = 1.
pub fn restitution_alpha(restitution: f64) -> f64 {
    if restitution >= 1.0 {
        return 0.0;
    }
    let ln_e = restitution.ln();
    -2.0 * ln_e / (PI * PI + ln_e * ln_e).sqrt()
}

/// Reduced quantity `a b / (a + b)`, taking the limit `a` when `b` is infinite.
#[inline]
fn reduced(a: f64, b: f64) -> f64 {
    if b.is_infinite() {
        a
    } else if a.is_infinite() {
        b
    } else {
        a * b / (a + b)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn contact_coefficients(
    overlap: f64,
    mat1: &MaterialParams,
    mat2: &MaterialParams,
    restitution: f64,
    r1: f64,
    r2: f64,
    m1: f64,
    m2: f64,
) -> ContactCoefficients {
    let r_eff = reduced(r1, r2);
    let m_eff = reduced(m1, m2);
    let shear_sum = (2.0 - mat1.poisson_ratio) / mat1.shear_modulus
        + (2.0 - mat2.poisson_ratio) / mat2.shear_modulus;
    let young_sum = (2.0 - mat1.poisson_ratio * mat1.poisson_ratio) / mat1.youngs_modulus
        + (2.0 - mat2.poisson_ratio * mat2.poisson_ratio) / mat2.youngs_modulus;
    let k_t = 8.0 * (r_eff * overlap).sqrt() / shear_sum;
    let k_n = 4.0 / 3.0 * r_eff.sqrt() / young_sum;
    let eta = restitution_alpha(restitution) * (m_eff * k_n * overlap.sqrt()).sqrt();
    ContactCoefficients {
        k_t,
        k_n,
        eta_n: eta,
        eta_t: eta,
    }
}

/// Integrates the tangential slip: the old displacement is rotated into the
/// current tangent plane by dropping its normal component, then advanced by
/// `v_t Δt`.
#[inline]
pub fn update_tangential_displacement(old: &Vec3, normal: &Vec3, v_t: &Vec3, dt: f64) -> Vec3 {
    old - old.dot(normal) * normal + v_t * dt
}

/// Coulomb cap on a tangential force. Returns the (possibly rescaled)
/// force and, when the cap engaged, the tangential displacement consistent
/// with it (`δ_t = −F_t / k_t`). A tangential force too small to have a
/// direction is zeroed together with its displacement.
#[inline]
pub fn cap_tangential(f_t: &Vec3, limit: f64, k_t: f64) -> (Vec3, Option<Vec3>) {
    let magnitude = f_t.norm();
    if magnitude <= limit {
        return (*f_t, None);
    }
    if magnitude < DEGENERATE_TANGENTIAL {
        return (Vec3::zeros(), Some(Vec3::zeros()));
    }
    let capped = f_t * (limit / magnitude);
    (capped, Some(-capped / k_t))
}

pub fn contact_force(
    geom: &ContactGeometry,
    coeffs: &ContactCoefficients,
    tangential_displacement: &Vec3,
    sliding_friction: f64,
    r1: f64,
) -> ContactForce {
    let n = &geom.normal;
    let v_n = geom.relative_velocity.dot(n) * n;
    let elastic_normal = coeffs.k_n * geom.overlap * geom.overlap.sqrt();
    let force = -coeffs.k_t * tangential_displacement
        - coeffs.eta_t * geom.tangential_velocity
        - elastic_normal * n
        - coeffs.eta_n * v_n;

    let normal_force = force.dot(n) * n;
    let tangential = force - normal_force;
    let limit = sliding_friction * normal_force.norm();
    let (tangential_force, recomputed) = cap_tangential(&tangential, limit, coeffs.k_t);
    let force = normal_force + tangential_force;
    ContactForce {
        force,
        torque: r1 * n.cross(&force),
        tangential_displacement: recomputed.unwrap_or(*tangential_displacement),
        normal_force,
        tangential_force,
        capped: recomputed.is_some(),
    }
}

/// Wall primitive: a rectangle spanned by two orthogonal edges from a corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rectangle {
    pub corner: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
}

/// Wall primitive: a line segment between two endpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vec3,
    pub b: Vec3,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WallError {
    #[error("rectangle edge has zero length")]
    ZeroEdge,
    #[error("rectangle edges are not orthogonal")]
    NotOrthogonal,
    #[error("segment has zero length")]
    ZeroSegment,
}

impl Rectangle {
    pub fn new(corner: Vec3, edge_u: Vec3, edge_v: Vec3) -> Result<Self, WallError> {
        let (lu, lv) = (edge_u.norm(), edge_v.norm());
        if !(lu > 0.0 && lv > 0.0) {
            return Err(WallError::ZeroEdge);
        }
        if edge_u.dot(&edge_v).abs() > 1e-9 * lu * lv {
            return Err(WallError::NotOrthogonal);
        }
        Ok(Rectangle {
            corner,
            edge_u,
            edge_v,
        })
    }

    pub fn closest_point(&self, pos: &Vec3) -> (Vec3, f64) {
        let d = pos - self.corner;
        let s = (d.dot(&self.edge_u) / self.edge_u.norm_squared()).clamp(0.0, 1.0);
        let t = (d.dot(&self.edge_v) / self.edge_v.norm_squared()).clamp(0.0, 1.0);
        let point = self.corner + s * self.edge_u + t * self.edge_v;
        (point, (point - pos).norm())
    }
}

impl Segment {
    pub fn new(a: Vec3, b: Vec3) -> Result<Self, WallError> {
        if (b - a).norm() > 0.0 {
            Ok(Segment { a, b })
        } else {
            Err(WallError::ZeroSegment)
        }
    }

    pub fn closest_point(&self, pos: &Vec3) -> (Vec3, f64) {
        let ab = self.b - self.a;
        let s = ((pos - self.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let point = self.a + s * ab;
        (point, (point - pos).norm())
    }
}
