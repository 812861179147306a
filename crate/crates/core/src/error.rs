use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate polygon")]
    Degenerate,
    #[error("vertex sequence length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("rasterizer temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("no point falls inside the projection bounds")]
    NoPointsInBounds,
    #[error("projection bounds must have positive extent")]
    InvalidBounds,
    #[error("scene has {rooms} polygons but only {capacity} polygon slots")]
    TooManyPolygons { rooms: usize, capacity: usize },
    #[error("polygon {index} has {vertices} vertices but only {capacity} vertex slots")]
    TooManyVertices {
        index: usize,
        vertices: usize,
        capacity: usize,
    },
    #[error("room {index}: {source}")]
    InvalidRoom {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("could not place a valid layout after {attempts} attempts")]
    Unsatisfiable { attempts: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("cost matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
