//! Run configuration: a flat `key = value` text format.
//!
//! Lines starting with `#` and blank lines are ignored. Vector values are
//! three numbers separated by commas or whitespace. Material, pair and
//! wall blocks are keyed by name or index:
//!
//! ```text
//! dt = 1e-4
//! domain.min.x = 0
//! material.glass.youngs_modulus = 1e7
//! wall.rect.0.corner = 0, 0, 0
//! pair.glass.steel.restitution = 0.8
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::grid::{GridError, UniformGrid};
use crate::physics::{MaterialParams, MaterialTable, Rectangle, Segment, Vec3};
use crate::pipeline::{CollideVariant, Environment, LineWall, RectangleWall, SimOptions};
use crate::simt::WarpCostParams;

/// Largest per-particle contact capacity the Collide kernels support.
pub const MAX_CONTACT_CAPACITY: usize = 64;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { key: String, line: usize },
    #[error("missing required key '{key}'")]
    MissingKey { key: String },
    #[error("invalid value for '{key}': {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    /// The key the error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. }
            | ConfigError::MissingKey { key }
            | ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }

    fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitKind {
    /// Uniform lattice filling the domain from its minimum corner, x fastest.
    #[default]
    Lattice,
    /// Positions given per particle as `particle.<i>.position`.
    Explicit,
}

impl InitKind {
    fn name(self) -> &'static str {
        match self {
            InitKind::Lattice => "lattice",
            InitKind::Explicit => "explicit",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleBlock {
    pub count: usize,
    pub radius: f64,
    pub mass: f64,
    /// Material name; may be omitted when exactly one material is defined.
    pub material: Option<String>,
    pub init: InitKind,
    /// Half-width of the uniform position jitter. Defaults to a tenth of
    /// the lattice gap `spacing − 2r`.
    pub jitter: Option<f64>,
    /// Lattice pitch. Defaults to `2.2 r`.
    pub lattice_spacing: Option<f64>,
    pub velocity: Vec3,
    /// Half-width of the uniform velocity jitter.
    pub velocity_jitter: f64,
}

impl ParticleBlock {
    pub fn spacing(&self) -> f64 {
        self.lattice_spacing.unwrap_or(2.2 * self.radius)
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
            .unwrap_or(0.1 * (self.spacing() - 2.0 * self.radius))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExplicitParticle {
    pub position: Vec3,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairSpec {
    pub restitution: Option<f64>,
    pub mu_d: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RectSpec {
    pub corner: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    pub material: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSpec {
    pub a: Vec3,
    pub b: Vec3,
    pub material: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSection {
    pub steps: u64,
    pub warmup_steps: u64,
    /// Snapshot period in measured steps; 0 writes only the first and last.
    pub snapshot_every: u64,
    pub collide_variant: CollideVariant,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            steps: 100,
            warmup_steps: 0,
            snapshot_every: 0,
            collide_variant: CollideVariant::TwoPhase,
        }
    }
}

pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub gravity: Vec3,
    pub domain_min: Vec3,
    pub domain_max: Vec3,
    pub cell_size: Option<f64>,
    pub particles: ParticleBlock,
    pub explicit: BTreeMap<usize, ExplicitParticle>,
    /// Materials by name; material ids follow name order.
    pub materials: BTreeMap<String, MaterialParams>,
    /// Pair overrides keyed by the name pair in ascending order.
    pub pairs: BTreeMap<(String, String), PairSpec>,
    pub rects: BTreeMap<usize, RectSpec>,
    pub lines: BTreeMap<usize, LineSpec>,
    pub contact_capacity: usize,
    pub simt: WarpCostParams,
    pub run: RunSection,
    pub seed: u64,
}

const AXES: [&str; 3] = ["x", "y", "z"];
const MATERIAL_FIELDS: [&str; 5] = [
    "poisson",
    "shear_modulus",
    "youngs_modulus",
    "restitution",
    "mu_d",
];
const PAIR_FIELDS: [&str; 2] = ["restitution", "mu_d"];
const RECT_FIELDS: [&str; 4] = ["corner", "edge_u", "edge_v", "material"];
const LINE_FIELDS: [&str; 3] = ["a", "b", "material"];
const PARTICLE_FIELDS: [&str; 3] = ["position", "velocity", "angular_velocity"];

struct Entry {
    value: String,
    line: usize,
}

/// Key/value pairs still to be consumed.
struct Fields {
    entries: BTreeMap<String, Entry>,
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("cannot parse '{value}'")))
}

fn parse_vec3(key: &str, value: &str) -> Result<Vec3, ConfigError> {
    let parts: Vec<&str> = value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if parts.len() != 3 {
        return Err(ConfigError::invalid(
            key,
            format!("expected three numbers, got '{value}'"),
        ));
    }
    let mut v = Vec3::zeros();
    for (i, p) in parts.iter().enumerate() {
        v[i] = parse_scalar(key, p)?;
    }
    Ok(v)
}

impl Fields {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("expected 'key = value', got '{content}'"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("malformed key '{key}'"),
                });
            }
            if value.is_empty() {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("empty value for '{key}'"),
                });
            }
            let prev = entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
            if prev.is_some() {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Fields { entries })
    }

    fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|e| e.value)
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        self.take_raw(key)
            .map(|v| parse_scalar(key, &v))
            .transpose()
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError> {
        self.opt(key)?.ok_or_else(|| ConfigError::MissingKey {
            key: key.to_string(),
        })
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn opt_vec(&mut self, key: &str) -> Result<Option<Vec3>, ConfigError> {
        self.take_raw(key).map(|v| parse_vec3(key, &v)).transpose()
    }

    fn req_vec(&mut self, key: &str) -> Result<Vec3, ConfigError> {
        self.opt_vec(key)?.ok_or_else(|| ConfigError::MissingKey {
            key: key.to_string(),
        })
    }

    /// Reads `prefix.x`, `prefix.y`, `prefix.z`.
    fn axes(&mut self, prefix: &str, default: Option<Vec3>) -> Result<Vec3, ConfigError> {
        let mut v = Vec3::zeros();
        for (i, axis) in AXES.iter().enumerate() {
            let key = format!("{prefix}.{axis}");
            v[i] = match default {
                Some(d) => self.or(&key, d[i])?,
                None => self.req(&key)?,
            };
        }
        Ok(v)
    }

    /// Distinct names `N` among keys `prefix.N.<field>` with a known field.
    fn names(&self, prefix: &str, fields: &[&str]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for key in self.entries.keys() {
            let Some(rest) = key.strip_prefix(prefix) else {
                continue;
            };
            let Some((name, field)) = rest.rsplit_once('.') else {
                continue;
            };
            if !name.is_empty() && fields.contains(&field) && !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
        out
    }

    fn indices(&self, prefix: &str, fields: &[&str]) -> Result<Vec<usize>, ConfigError> {
        let mut out = Vec::new();
        for name in self.names(prefix, fields) {
            match name.parse::<usize>() {
                Ok(i) => out.push(i),
                // leave the key for the unknown-key report
                Err(_) => continue,
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(ConfigError::UnknownKey { key, line: e.line }),
            None => Ok(()),
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl SimConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        text.parse()
    }

    fn from_fields(mut f: Fields) -> Result<Self, ConfigError> {
        let dt = f.req("dt")?;
        let gravity = f.axes("gravity", Some(Vec3::from(DEFAULT_GRAVITY)))?;
        let domain_min = f.axes("domain.min", None)?;
        let domain_max = f.axes("domain.max", None)?;
        let cell_size = f.opt("grid.cell_size")?;

        let init = match f.take_raw("particles.init").as_deref() {
            None | Some("lattice") => InitKind::Lattice,
            Some("explicit") => InitKind::Explicit,
            Some(other) => {
                return Err(ConfigError::invalid(
                    "particles.init",
                    format!("expected lattice or explicit, got '{other}'"),
                ))
            }
        };
        let particles = ParticleBlock {
            count: f.req("particles.count")?,
            radius: f.req("particles.radius")?,
            mass: f.req("particles.mass")?,
            material: f.take_raw("particles.material"),
            init,
            jitter: f.opt("particles.jitter")?,
            lattice_spacing: f.opt("particles.lattice_spacing")?,
            velocity: f.opt_vec("particles.velocity")?.unwrap_or_else(Vec3::zeros),
            velocity_jitter: f.or("particles.velocity_jitter", 0.0)?,
        };

        let mut explicit = BTreeMap::new();
        for i in f.indices("particle.", &PARTICLE_FIELDS)? {
            let p = ExplicitParticle {
                position: f.req_vec(&format!("particle.{i}.position"))?,
                velocity: f
                    .opt_vec(&format!("particle.{i}.velocity"))?
                    .unwrap_or_else(Vec3::zeros),
                angular_velocity: f
                    .opt_vec(&format!("particle.{i}.angular_velocity"))?
                    .unwrap_or_else(Vec3::zeros),
            };
            explicit.insert(i, p);
        }

        let mut materials = BTreeMap::new();
        for name in f.names("material.", &MATERIAL_FIELDS) {
            if !valid_name(&name) {
                continue;
            }
            let key = |field: &str| format!("material.{name}.{field}");
            let params = MaterialParams {
                poisson_ratio: f.req(&key("poisson"))?,
                shear_modulus: f.req(&key("shear_modulus"))?,
                youngs_modulus: f.req(&key("youngs_modulus"))?,
                restitution: f.req(&key("restitution"))?,
                sliding_friction: f.req(&key("mu_d"))?,
            };
            materials.insert(name, params);
        }

        let mut pairs: BTreeMap<(String, String), PairSpec> = BTreeMap::new();
        for name in f.names("pair.", &PAIR_FIELDS) {
            let Some((a, b)) = name.split_once('.') else {
                continue;
            };
            if !valid_name(a) || !valid_name(b) {
                continue;
            }
            let spec = PairSpec {
                restitution: f.opt(&format!("pair.{name}.restitution"))?,
                mu_d: f.opt(&format!("pair.{name}.mu_d"))?,
            };
            let key = if a <= b {
                (a.to_string(), b.to_string())
            } else {
                (b.to_string(), a.to_string())
            };
            let entry = pairs.entry(key).or_default();
            if (spec.restitution.is_some() && entry.restitution.is_some())
                || (spec.mu_d.is_some() && entry.mu_d.is_some())
            {
                return Err(ConfigError::invalid(
                    format!("pair.{name}"),
                    "pair given in both orders",
                ));
            }
            entry.restitution = entry.restitution.or(spec.restitution);
            entry.mu_d = entry.mu_d.or(spec.mu_d);
        }

        let mut rects = BTreeMap::new();
        for i in f.indices("wall.rect.", &RECT_FIELDS)? {
            let key = |field: &str| format!("wall.rect.{i}.{field}");
            let spec = RectSpec {
                corner: f.req_vec(&key("corner"))?,
                edge_u: f.req_vec(&key("edge_u"))?,
                edge_v: f.req_vec(&key("edge_v"))?,
                material: f.req(&key("material"))?,
            };
            rects.insert(i, spec);
        }
        let mut lines = BTreeMap::new();
        for i in f.indices("wall.line.", &LINE_FIELDS)? {
            let key = |field: &str| format!("wall.line.{i}.{field}");
            let spec = LineSpec {
                a: f.req_vec(&key("a"))?,
                b: f.req_vec(&key("b"))?,
                material: f.req(&key("material"))?,
            };
            lines.insert(i, spec);
        }

        let contact_capacity = f.or("contacts.capacity", crate::contacts::DEFAULT_CAPACITY)?;
        let d = WarpCostParams::default();
        let simt = WarpCostParams {
            warp_size: f.or("simt.warp_size", d.warp_size)?,
            c_check: f.or("simt.c_check", d.c_check)?,
            c_force: f.or("simt.c_force", d.c_force)?,
            c_store: f.or("simt.c_store", d.c_store)?,
            c_load: f.or("simt.c_load", d.c_load)?,
        };
        let r = RunSection::default();
        let collide_variant = match f.take_raw("run.collide_variant") {
            None => r.collide_variant,
            Some(v) => CollideVariant::parse(&v).ok_or_else(|| {
                ConfigError::invalid(
                    "run.collide_variant",
                    format!("expected baseline or two_phase, got '{v}'"),
                )
            })?,
        };
        let run = RunSection {
            steps: f.or("run.steps", r.steps)?,
            warmup_steps: f.or("run.warmup_steps", r.warmup_steps)?,
            snapshot_every: f.or("run.snapshot_every", r.snapshot_every)?,
            collide_variant,
        };
        let seed = f.or("seed", 0)?;
        f.finish()?;

        let config = SimConfig {
            dt,
            gravity,
            domain_min,
            domain_max,
            cell_size,
            particles,
            explicit,
            materials,
            pairs,
            rects,
            lines,
            contact_capacity,
            simt,
            run,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every value range and cross-reference.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(
                    key,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        let finite = |key: String, v: &Vec3| {
            if v.iter().all(|c| c.is_finite()) {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, "components must be finite"))
            }
        };
        positive("dt", self.dt)?;
        finite("gravity".into(), &self.gravity)?;
        for (i, axis) in AXES.iter().enumerate() {
            finite(format!("domain.min.{axis}"), &self.domain_min)?;
            if !(self.domain_max[i] > self.domain_min[i] && self.domain_max[i].is_finite()) {
                return Err(ConfigError::invalid(
                    format!("domain.max.{axis}"),
                    "must be finite and greater than domain.min",
                ));
            }
        }
        if let Some(h) = self.cell_size {
            positive("grid.cell_size", h)?;
        }

        let p = &self.particles;
        if p.count == 0 {
            return Err(ConfigError::invalid(
                "particles.count",
                "must be at least 1",
            ));
        }
        positive("particles.radius", p.radius)?;
        positive("particles.mass", p.mass)?;
        if let Some(s) = p.lattice_spacing {
            positive("particles.lattice_spacing", s)?;
            if s < 2.0 * p.radius {
                return Err(ConfigError::invalid(
                    "particles.lattice_spacing",
                    "must be at least twice the radius",
                ));
            }
        }
        if let Some(j) = p.jitter {
            if !(j >= 0.0 && j.is_finite()) {
                return Err(ConfigError::invalid(
                    "particles.jitter",
                    "must be non-negative",
                ));
            }
        }
        if !(p.velocity_jitter >= 0.0 && p.velocity_jitter.is_finite()) {
            return Err(ConfigError::invalid(
                "particles.velocity_jitter",
                "must be non-negative",
            ));
        }
        finite("particles.velocity".into(), &p.velocity)?;
        match p.init {
            InitKind::Lattice => {
                if let Some(&i) = self.explicit.keys().next() {
                    return Err(ConfigError::invalid(
                        format!("particle.{i}.position"),
                        "per-particle entries require particles.init = explicit",
                    ));
                }
                let capacity = self.lattice_dims().iter().product::<usize>();
                if p.count > capacity {
                    return Err(ConfigError::invalid(
                        "particles.count",
                        format!("lattice holds only {capacity} particles in the domain"),
                    ));
                }
            }
            InitKind::Explicit => {
                for i in 0..p.count {
                    if !self.explicit.contains_key(&i) {
                        return Err(ConfigError::MissingKey {
                            key: format!("particle.{i}.position"),
                        });
                    }
                }
                if let Some(&i) = self.explicit.keys().find(|&&i| i >= p.count) {
                    return Err(ConfigError::invalid(
                        format!("particle.{i}.position"),
                        "index beyond particles.count",
                    ));
                }
                for (i, e) in &self.explicit {
                    finite(format!("particle.{i}.position"), &e.position)?;
                    finite(format!("particle.{i}.velocity"), &e.velocity)?;
                    finite(
                        format!("particle.{i}.angular_velocity"),
                        &e.angular_velocity,
                    )?;
                }
            }
        }

        if self.materials.is_empty() {
            return Err(ConfigError::MissingKey {
                key: "material.<name>.youngs_modulus".into(),
            });
        }
        for (name, m) in &self.materials {
            m.validate().map_err(|(field, msg)| {
                ConfigError::invalid(format!("material.{name}.{field}"), msg)
            })?;
        }
        self.particle_material()?;
        for ((a, b), spec) in &self.pairs {
            for name in [a, b] {
                if !self.materials.contains_key(name) {
                    return Err(ConfigError::invalid(
                        format!("pair.{a}.{b}"),
                        format!("unknown material '{name}'"),
                    ));
                }
            }
            if let Some(e) = spec.restitution {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(ConfigError::invalid(
                        format!("pair.{a}.{b}.restitution"),
                        format!("must satisfy 0 < restitution <= 1, got {e}"),
                    ));
                }
            }
            if let Some(mu) = spec.mu_d {
                if !(mu >= 0.0 && mu.is_finite()) {
                    return Err(ConfigError::invalid(
                        format!("pair.{a}.{b}.mu_d"),
                        "must be non-negative",
                    ));
                }
            }
        }

        for (i, w) in &self.rects {
            self.material_id(&w.material, &format!("wall.rect.{i}.material"))?;
            finite(format!("wall.rect.{i}.corner"), &w.corner)?;
            Rectangle::new(w.corner, w.edge_u, w.edge_v).map_err(|e| {
                ConfigError::invalid(format!("wall.rect.{i}.edge_u"), e.to_string())
            })?;
        }
        for (i, w) in &self.lines {
            self.material_id(&w.material, &format!("wall.line.{i}.material"))?;
            finite(format!("wall.line.{i}.a"), &w.a)?;
            Segment::new(w.a, w.b)
                .map_err(|e| ConfigError::invalid(format!("wall.line.{i}.b"), e.to_string()))?;
        }

        if self.contact_capacity == 0 || self.contact_capacity > MAX_CONTACT_CAPACITY {
            return Err(ConfigError::invalid(
                "contacts.capacity",
                format!("must be between 1 and {MAX_CONTACT_CAPACITY}"),
            ));
        }
        self.simt
            .validate()
            .map_err(|(field, msg)| ConfigError::invalid(format!("simt.{field}"), msg))?;
        self.grid()?;
        Ok(())
    }

    fn material_id(&self, name: &str, key: &str) -> Result<u16, ConfigError> {
        self.materials
            .keys()
            .position(|m| m == name)
            .map(|i| i as u16)
            .ok_or_else(|| ConfigError::invalid(key, format!("unknown material '{name}'")))
    }

    /// Material id of the particles.
    pub fn particle_material(&self) -> Result<u16, ConfigError> {
        match &self.particles.material {
            Some(name) => self.material_id(name, "particles.material"),
            None if self.materials.len() == 1 => Ok(0),
            None => Err(ConfigError::MissingKey {
                key: "particles.material".into(),
            }),
        }
    }

    /// Lattice sites per axis.
    pub fn lattice_dims(&self) -> [usize; 3] {
        let spacing = self.particles.spacing();
        let extent = self.domain_max - self.domain_min;
        [0, 1, 2].map(|i| (extent[i] / spacing).floor().max(0.0) as usize)
    }

    pub fn effective_cell_size(&self) -> f64 {
        self.cell_size
            .unwrap_or_else(|| UniformGrid::default_cell_size(self.particles.radius))
    }

    pub fn grid(&self) -> Result<UniformGrid, ConfigError> {
        UniformGrid::new(self.domain_min, self.domain_max, self.effective_cell_size()).map_err(
            |e| match e {
                GridError::Domain(axis) => {
                    ConfigError::invalid(format!("domain.max.{}", AXES[axis]), e.to_string())
                }
                _ => ConfigError::invalid("grid.cell_size", e.to_string()),
            },
        )
    }

    pub fn material_table(&self) -> MaterialTable {
        let mut table = MaterialTable::new(self.materials.values().copied().collect());
        let id = |name: &str| {
            self.materials
                .keys()
                .position(|m| m == name)
                .expect("validated material")
        };
        for ((a, b), spec) in &self.pairs {
            if let Some(e) = spec.restitution {
                table.set_pair_restitution(id(a), id(b), e);
            }
            if let Some(mu) = spec.mu_d {
                table.set_pair_friction(id(a), id(b), mu);
            }
        }
        table
    }

    pub fn environment(&self) -> Environment {
        let id = |name: &str| self.material_id(name, "").expect("validated material");
        Environment {
            dt: self.dt,
            gravity: self.gravity,
            materials: self.material_table(),
            rectangles: self
                .rects
                .values()
                .map(|w| RectangleWall {
                    shape: Rectangle::new(w.corner, w.edge_u, w.edge_v)
                        .expect("validated rectangle"),
                    material: id(&w.material),
                })
                .collect(),
            lines: self
                .lines
                .values()
                .map(|w| LineWall {
                    shape: Segment::new(w.a, w.b).expect("validated segment"),
                    material: id(&w.material),
                })
                .collect(),
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            variant: self.run.collide_variant,
            contact_capacity: self.contact_capacity,
            warp: self.simt,
            allow_undersized_cells: false,
        }
    }

    /// Writes every recognized key, defaults included, in a stable order.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        let vec = |v: &Vec3| format!("{:?}, {:?}, {:?}", v.x, v.y, v.z);
        kv("dt", format!("{:?}", self.dt));
        for (i, axis) in AXES.iter().enumerate() {
            kv(&format!("gravity.{axis}"), format!("{:?}", self.gravity[i]));
        }
        for (i, axis) in AXES.iter().enumerate() {
            kv(
                &format!("domain.min.{axis}"),
                format!("{:?}", self.domain_min[i]),
            );
        }
        for (i, axis) in AXES.iter().enumerate() {
            kv(
                &format!("domain.max.{axis}"),
                format!("{:?}", self.domain_max[i]),
            );
        }
        if let Some(h) = self.cell_size {
            kv("grid.cell_size", format!("{h:?}"));
        }
        let p = &self.particles;
        kv("particles.count", p.count.to_string());
        kv("particles.radius", format!("{:?}", p.radius));
        kv("particles.mass", format!("{:?}", p.mass));
        if let Some(m) = &p.material {
            kv("particles.material", m.clone());
        }
        kv("particles.init", p.init.name().to_string());
        if let Some(j) = p.jitter {
            kv("particles.jitter", format!("{j:?}"));
        }
        if let Some(s) = p.lattice_spacing {
            kv("particles.lattice_spacing", format!("{s:?}"));
        }
        kv("particles.velocity", vec(&p.velocity));
        kv(
            "particles.velocity_jitter",
            format!("{:?}", p.velocity_jitter),
        );
        for (i, e) in &self.explicit {
            kv(&format!("particle.{i}.position"), vec(&e.position));
            kv(&format!("particle.{i}.velocity"), vec(&e.velocity));
            kv(
                &format!("particle.{i}.angular_velocity"),
                vec(&e.angular_velocity),
            );
        }
        for (name, m) in &self.materials {
            kv(
                &format!("material.{name}.poisson"),
                format!("{:?}", m.poisson_ratio),
            );
            kv(
                &format!("material.{name}.shear_modulus"),
                format!("{:?}", m.shear_modulus),
            );
            kv(
                &format!("material.{name}.youngs_modulus"),
                format!("{:?}", m.youngs_modulus),
            );
            kv(
                &format!("material.{name}.restitution"),
                format!("{:?}", m.restitution),
            );
            kv(
                &format!("material.{name}.mu_d"),
                format!("{:?}", m.sliding_friction),
            );
        }
        for ((a, b), spec) in &self.pairs {
            if let Some(e) = spec.restitution {
                kv(&format!("pair.{a}.{b}.restitution"), format!("{e:?}"));
            }
            if let Some(mu) = spec.mu_d {
                kv(&format!("pair.{a}.{b}.mu_d"), format!("{mu:?}"));
            }
        }
        for (i, w) in &self.rects {
            kv(&format!("wall.rect.{i}.corner"), vec(&w.corner));
            kv(&format!("wall.rect.{i}.edge_u"), vec(&w.edge_u));
            kv(&format!("wall.rect.{i}.edge_v"), vec(&w.edge_v));
            kv(&format!("wall.rect.{i}.material"), w.material.clone());
        }
        for (i, w) in &self.lines {
            kv(&format!("wall.line.{i}.a"), vec(&w.a));
            kv(&format!("wall.line.{i}.b"), vec(&w.b));
            kv(&format!("wall.line.{i}.material"), w.material.clone());
        }
        kv("contacts.capacity", self.contact_capacity.to_string());
        kv("simt.warp_size", self.simt.warp_size.to_string());
        kv("simt.c_check", format!("{:?}", self.simt.c_check));
        kv("simt.c_force", format!("{:?}", self.simt.c_force));
        kv("simt.c_store", format!("{:?}", self.simt.c_store));
        kv("simt.c_load", format!("{:?}", self.simt.c_load));
        kv("run.steps", self.run.steps.to_string());
        kv("run.warmup_steps", self.run.warmup_steps.to_string());
        kv("run.snapshot_every", self.run.snapshot_every.to_string());
        kv(
            "run.collide_variant",
            self.run.collide_variant.name().to_string(),
        );
        kv("seed", self.seed.to_string());
        out
    }
}

impl FromStr for SimConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        SimConfig::from_fields(Fields::parse(text)?)
    }
}
