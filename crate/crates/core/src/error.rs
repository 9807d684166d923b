use thiserror::Error;

/// Errors raised by the lattice, solver and analysis layers.
#[derive(Debug, Error)]
pub enum GlError {
    #[error("dimension mismatch: expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("gauge transformation winds around a plaquette and would change the flux sector")]
    FluxSector,

    #[error("iteration limit {iterations} reached (residual {residual:.3e})")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("singular Jacobian on the gauge slice (near-kernel dimension {near_kernel_dim})")]
    SingularJacobian { near_kernel_dim: usize },

    #[error("fixed-point map is not a contraction at t = {t} (ratio {ratio:.3}); try a smaller t")]
    NotContraction { t: f64, ratio: f64 },

    #[error("configuration is a vortex; no instability certificate exists")]
    VortexDetected,

    #[error("no energy-decreasing direction found in the near-kernel")]
    CertificationFailed,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GlError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GlError::Dimension { expected, got })
    }
}
