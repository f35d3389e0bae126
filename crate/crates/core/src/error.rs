use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in `{field}` at flat index {index}")]
    NonFinite { field: &'static str, index: usize },

    #[error("shape mismatch for `{field}`: expected {expected} elements, found {found}")]
    ShapeMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("label {label} of sample {index} is out of range [0, {n_classes})")]
    LabelOutOfRange {
        index: usize,
        label: i64,
        n_classes: usize,
    },

    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },

    #[error("unknown split `{0}` (expected train, val or test)")]
    UnknownSplit(String),

    #[error("cannot aggregate zero inference passes")]
    NoPasses,

    #[error("a binary decision threshold requires 2 classes, found {n_classes}")]
    ThresholdRequiresBinary { n_classes: usize },

    #[error("sum of squared probabilities is zero")]
    ZeroCollisionProbability,

    #[error("`{operation}` requires embeddings but the artifact has none")]
    MissingEmbeddings { operation: &'static str },

    #[error("class {class} has no training points")]
    EmptyClass { class: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("metric needs both classes: {positives} positives, {negatives} negatives")]
    DegenerateClasses { positives: usize, negatives: usize },

    #[error("score `{score}` is not probability-valued: value {value} at sample {index}")]
    ConfidenceOutOfRange {
        score: String,
        index: usize,
        value: f64,
    },

    #[error("score `{0}` is not probability-valued and has no calibration error")]
    NotProbabilityScore(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Kronecker factor {factor} is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPositiveSemidefinite {
        factor: &'static str,
        min_eigenvalue: f64,
    },

    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },

    #[error("unknown score identifier `{0}`")]
    UnknownScore(String),

    #[error("score `{method}` requires {needs}")]
    UnmetRequirement { method: &'static str, needs: String },

    #[error("empty input")]
    EmptyInput,
}
