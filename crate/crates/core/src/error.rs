use std::fmt;

use thiserror::Error;

use crate::config::ConfigError;
use crate::contacts::Partner;

/// The nine kernels of one simulation step, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kernel {
    Integrate,
    CalcHash,
    BitonicSort,
    FindCellBoundsAndReorder,
    ForceGravity,
    InitializeContactIds,
    Collide,
    CollideRectangle,
    CollideLine,
}

impl Kernel {
    pub const ALL: [Kernel; 9] = [
        Kernel::Integrate,
        Kernel::CalcHash,
        Kernel::BitonicSort,
        Kernel::FindCellBoundsAndReorder,
        Kernel::ForceGravity,
        Kernel::InitializeContactIds,
        Kernel::Collide,
        Kernel::CollideRectangle,
        Kernel::CollideLine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Integrate => "Integrate",
            Kernel::CalcHash => "CalcHash",
            Kernel::BitonicSort => "BitonicSort",
            Kernel::FindCellBoundsAndReorder => "FindCellBoundsAndReorder",
            Kernel::ForceGravity => "ForceGravity",
            Kernel::InitializeContactIds => "InitializeContactIDs",
            Kernel::Collide => "Collide",
            Kernel::CollideRectangle => "CollideRectangle",
            Kernel::CollideLine => "CollideLine",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Two centers (or a center and a wall point) closer than 1e-12: the
    /// contact normal is undefined.
    #[error("degenerate contact between particle {particle} and {partner}: coincident centers")]
    DegenerateContact { particle: usize, partner: Partner },

    #[error("particle {particle} exceeds its contact capacity of {capacity} slots")]
    CapacityExceeded { particle: usize, capacity: usize },

    #[error("non-finite force or torque on particle {particle}")]
    NonFiniteForce { particle: usize },

    #[error("initial particles {first} and {second} are in contact")]
    InitialContact { first: usize, second: usize },

    #[error("initial particle {particle} touches wall {wall}")]
    InitialWallContact { particle: usize, wall: Partner },

    #[error("cell size {cell_size} is smaller than twice the largest radius {max_radius}")]
    CellTooSmall { cell_size: f64, max_radius: f64 },

    #[error("collide variants disagree at step {step}: {what}")]
    VariantMismatch { step: u64, what: String },

    #[error("step {step}, kernel {kernel}: {source}")]
    Kernel {
        step: u64,
        kernel: Kernel,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn in_kernel(self, step: u64, kernel: Kernel) -> Error {
        Error::Kernel {
            step,
            kernel,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InitialContact { .. }
                | Error::InitialWallContact { .. }
                | Error::CellTooSmall { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
