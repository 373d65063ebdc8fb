//! Training of a feed-forward classifier on plaintext feature vectors and
//! inference over Paillier-encrypted samples.
//!
//! The pipeline splits into an offline part (channel selection, normalization,
//! training, fixed-point quantization of the model) and an online part
//! (encrypt features under the public key, evaluate the quantized network
//! homomorphically, decrypt logits with the private key). Everything the
//! online evaluator touches type-checks against [`paillier::PublicKey`] only.

pub mod data;
pub mod encfile;
pub mod encinfer;
pub mod eval;
pub mod fixedpoint;
pub mod keyfile;
pub mod modelfile;
pub mod network;
pub mod paillier;
