use alloc::string::String;

use crate::ClassId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input contains no points")]
    EmptyInput,
    #[error("invalid point #{index}: {reason}")]
    InvalidPoint { index: usize, reason: &'static str },
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("degenerate octree cube: every edge must be finite and > 0")]
    DegenerateCube,
    #[error("octree level {level} out of range [1, {max}]")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("degenerate polygon (fewer than 3 vertices or zero area)")]
    DegeneratePolygon,
    #[error("attribute `{0}` is not present in the store schema")]
    MissingAttribute(&'static str),
    #[error("occupancy count at level {level} is zero")]
    EmptyLevel { level: usize },
    #[error("empty dimensionality profile")]
    EmptyProfile,
    #[error("all profile samples share the same abscissa")]
    IdenticalAbscissa,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("dimensionality undefined: all points coincide")]
    CoincidentPoints,
    #[error("need at least {needed} classes, got {got}")]
    TooFewClasses { needed: usize, got: usize },
    #[error("class {class} has support {support}, fewer than {folds} folds")]
    InsufficientSupport { class: ClassId, support: usize, folds: usize },
    #[error("class {0} has no support")]
    EmptyClass(ClassId),
    #[error("feature schema mismatch: expected {expected} columns, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("matrix must be square with at least {min} rows")]
    BadMatrix { min: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
