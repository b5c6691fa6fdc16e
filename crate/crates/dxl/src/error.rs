use thiserror::Error;

/// Errors raised while parsing or building a single frame.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("checksum mismatch: frame carries {received:#06x}, computed {computed:#06x}")]
    Checksum { received: u16, computed: u16 },
    #[error("length field {0} is out of range")]
    BadLength(u16),
    #[error("frame truncated by a following header")]
    Truncated,
    #[error("escape byte missing after header pattern in body")]
    BadStuffing,
    #[error("unknown instruction code {0:#04x}")]
    UnknownInstruction(u8),
    #[error("invalid id {0}")]
    InvalidId(u8),
    #[error("packet body of {0} bytes does not fit a frame")]
    TooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsageError {
    #[error("duplicate id {0} in group transaction")]
    DuplicateId(u8),
    #[error("id {id} carries {got} data bytes, expected {expected}")]
    DataWidth { id: u8, got: usize, expected: usize },
    #[error("empty id list")]
    NoIds,
    #[error("register {0} is not in the control table")]
    MissingRegister(String),
    #[error("operating mode {0} is not in the control table")]
    MissingMode(String),
    #[error("registers {0} and {1} overlap")]
    Overlap(String, String),
    #[error("baud rate {0} outside 9600..=4500000")]
    BaudRate(u32),
    #[error("invalid control table profile: {0}")]
    Profile(String),
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("no response after {retries} retries")]
    Timeout { retries: u32 },
    #[error("device {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bus i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bus disconnected")]
    Disconnected,
}

/// Top-level error for bus transactions.
#[derive(Debug, Error)]
pub enum BusError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("servo {id} reported error byte {code:#04x}")]
    Servo { id: u8, code: u8 },
    #[error("unexpected reply from id {0}")]
    UnexpectedReply(u8),
}
