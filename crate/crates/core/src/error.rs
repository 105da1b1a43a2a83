use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed case file: {0}")]
    Structure(String),

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("{context} references unknown bus {bus}")]
    UnknownBus { bus: u32, context: String },

    #[error("branch {0} has zero series impedance")]
    SingularElement(String),

    #[error("power flow did not converge in {iterations} iterations (max mismatch {max_mismatch:.3e} pu)")]
    NonConvergence {
        iterations: usize,
        max_mismatch: f64,
        /// Max mismatch recorded at each iteration.
        trace: Vec<f64>,
    },

    #[error("singular power-flow Jacobian at iteration {0}")]
    SingularJacobian(usize),

    #[error("singular pivot while eliminating node {node}")]
    SingularPivot { node: usize },

    #[error("machine at bus {bus} is islanded in the post-fault network")]
    MachineIslanded { bus: u32 },

    #[error("numerical blowup at t = {t:.4} s")]
    NumericalBlowup { t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown element {0}")]
    UnknownElement(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
