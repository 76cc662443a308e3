use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no interactions in input")]
    EmptyInput,
    #[error("filter eliminated all data")]
    FilterEliminatedAll,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient absent pairs: requested {requested}, available {available}")]
    InsufficientAbsentPairs { requested: usize, available: usize },
    #[error("user {0} has no interacted items")]
    EmptyUserItems(u32),
    #[error("user {0} has interacted with every item")]
    NoNegativeAvailable(u32),
    #[error("propagated embeddings are stale; call propagate() after updating parameters")]
    StaleCache,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite loss at epoch {epoch} (user {user}, item {item})")]
    NonFiniteLoss { epoch: usize, user: u32, item: u32 },
    #[error("empty input: {0}")]
    Empty(&'static str),
}
