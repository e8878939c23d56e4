//! GCoT decoding: prompt-free multi-path chain-of-thought decoding.
//!
//! The crate is organised bottom-up:
//!
//! - [`lm`]: backend contract, scripted toy model, remote HTTP backend
//! - [`explore`]: Fibonacci-seeded branching and confidence backtracking
//! - [`scoring`]: reasoning/answer split and path confidence
//! - [`aggregate`]: greedy semantic clustering and answer selection
//! - [`baselines`]: greedy, sampling, beam, self-consistency, CoT-decoding
//! - [`gcot`]: the end-to-end decoder combining the layers above
//! - [`harness`]: datasets, extraction, metrics and benchmark runs
//! - [`oracle`]: brute-force reference implementations for verification

pub mod aggregate;
pub mod baselines;
pub mod cache;
pub mod error;
pub mod explore;
pub mod extract;
pub mod gcot;
pub mod harness;
pub mod lm;
pub mod oracle;
pub mod remote;
pub mod scoring;

pub use error::{Error, Result};
pub use lm::{DecodedPath, LmBackend, StepDistribution, Token};
