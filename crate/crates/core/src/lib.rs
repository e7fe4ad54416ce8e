//! Relative entropy coding with space partitioning.
//!
//! A sender holding a target `Q` and a receiver sharing a prior `P` agree on
//! a grid partition of `P`'s support into `J` equal-mass bins. The sender
//! picks a sample approximately (ORC) or exactly (PFR) distributed as `Q` and
//! transmits it as a bin index plus a local index within that bin's shared
//! random stream. The receiver regenerates the sample from the code alone.

pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod index_codec;
pub mod partition;
pub mod rec;
pub mod streams;

pub use distributions::{Dim1Law, Extended, FactorizedDistribution, RecTask};
pub use error::{Error, Result};
pub use partition::{allocate_intervals, build_partition, BinIndex, GridPartition};
pub use rec::{
    decode, encode_orc, encode_pfr, encode_sp_orc, encode_sp_pfr, heuristic_kl_bits, CodePoint, EncodeReport, PiChoice,
    Seeds,
};
