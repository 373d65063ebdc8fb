//! Error classification for exit-code discipline: 0 success, 2 usage
//! (clap), 3 data errors, 4 crypto errors, 5 other I/O.

use enn_core::data::DataError;
use enn_core::encfile::EncfileError;
use enn_core::encinfer::InferError;
use enn_core::eval::EvalError;
use enn_core::fixedpoint::CodecError;
use enn_core::keyfile::KeyfileError;
use enn_core::modelfile::ModelfileError;
use enn_core::network::NetworkError;
use enn_core::paillier::PaillierError;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Data(String),
    Crypto(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 3,
            CliError::Crypto(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(msg) => write!(f, "{msg}"),
            CliError::Crypto(msg) => write!(f, "{msg}"),
            CliError::Io(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelfileError> for CliError {
    fn from(e: ModelfileError) -> Self {
        match e {
            ModelfileError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EncfileError> for CliError {
    fn from(e: EncfileError) -> Self {
        match e {
            EncfileError::Io(io) => CliError::Io(io.to_string()),
            EncfileError::Infer(inner) => CliError::from(inner),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<KeyfileError> for CliError {
    fn from(e: KeyfileError) -> Self {
        match e {
            KeyfileError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Crypto(other.to_string()),
        }
    }
}

impl From<PaillierError> for CliError {
    fn from(e: PaillierError) -> Self {
        CliError::Crypto(e.to_string())
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        CliError::Crypto(e.to_string())
    }
}

impl From<InferError> for CliError {
    fn from(e: InferError) -> Self {
        CliError::Crypto(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
