use thiserror::Error;

/// Invalid parameters or malformed configuration input.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("n_mit must be 1, 2 or 4 (got {0})")]
    BadNMit(u32),
    #[error("n_bo must be at least 1")]
    ZeroBackOff,
    #[error("blast radius must be at least 1")]
    ZeroBlastRadius,
    #[error("timing constraint violated: {0}")]
    Timing(&'static str),
    #[error("policy constraint violated: {0}")]
    Policy(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for key `{key}`")]
    BadValue { key: String, value: String },
}

/// Controller-contract violations and malformed simulator input.
///
/// These indicate a broken driver, never an attack outcome.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("step {step}: bank {bank} out of range")]
    BankOutOfRange { step: usize, bank: usize },
    #[error("step {step}: row {row} out of range in bank {bank}")]
    RowOutOfRange { step: usize, bank: usize, row: u32 },
    #[error("activation would exceed the {abo_act}-ACT window after an Alert")]
    AboWindowExceeded { abo_act: u32 },
    #[error("counter overflow on bank {bank} row {row} ({bits}-bit counters)")]
    CounterOverflow { bank: usize, row: u32, bits: u32 },
    #[error("refresh window of {t_refw} ns exceeded at step {step}")]
    WindowExceeded { step: usize, t_refw: u64 },
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
}

/// Failures of the analytical model.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("pool recursion stalls at {pool} rows (r1 = {r1})")]
    Divergence { r1: u64, pool: u64 },
    #[error("r1 must be at least 1")]
    EmptyPool,
    #[error("n_bo = {0} is not supported by the bandwidth model (use 16, 32, 64 or 128)")]
    UnsupportedBackOff(u32),
}

/// Failures while setting up or driving an attack.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("unsupported attack input: {0}")]
    Unsupported(String),
}
