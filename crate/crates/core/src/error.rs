use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("could not generate a solvable layout after {attempts} attempts")]
    Unsolvable { attempts: usize },

    #[error("empty blob: raster has zero total intensity")]
    EmptyBlob,

    #[error("orientation undefined for an isotropic blob")]
    OrientationUndefined,

    #[error("parse error at byte {offset} (field `{field}`): {message}")]
    Parse {
        offset: usize,
        field: String,
        message: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("empty tag text at index {0}")]
    EmptyTag(usize),

    #[error("row count mismatch: file has {file_rows} rows but corpus has {expected} tags")]
    CountMismatch { file_rows: usize, expected: usize },

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("zero vector")]
    ZeroVector,

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("need more than {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },

    #[error("curve fit did not converge (residual {residual})")]
    CurveFit { residual: f64 },

    #[error("non-finite layout coordinates at epoch {epoch}")]
    NonFiniteLayout { epoch: usize },

    #[error("silhouette undefined: fewer than 2 clusters")]
    SilhouetteUndefined,

    #[error("cluster {0} has a zero centroid")]
    ZeroCentroid(usize),

    #[error("empty cluster")]
    EmptyCluster,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("no episodes to evaluate")]
    NoEpisodes,

    #[error("latent series is empty")]
    EmptySeries,

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
