//! Log-domain BCJR detection under exact or mismatched channel laws.
//!
//! The trellis starts in the all-zero-digit state with symbols before time 0
//! treated as zeros. Forney laws terminate with `nu` tail observations driven
//! by zero symbols.

mod brute;
mod law;
mod trellis;

pub use brute::{brute_force_map, sequence_log_metric, BruteForce, MAX_SEQUENCES};
pub use law::{Alphabet, DetectionLaw, ForneyLaw, FrontEnd, MismatchedLaw};
pub use trellis::{bcjr, log_likelihoods, map_decide, BcjrOptions, Posteriors, MAX_STATES};
