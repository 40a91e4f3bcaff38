//! Active automata learning of simulated Bluetooth Low Energy peripherals.
//!
//! A Mealy machine model of a peripheral's connection or pairing procedure is
//! learned with L* over a mapper that translates abstract symbols to
//! concrete packets. Queries go through a robust interface that survives
//! packet loss, late packets and crashes. Learned models can be compared and
//! fingerprinted.

pub mod conformance;
pub mod dot;
pub mod error;
pub mod experiment;
pub mod fingerprint;
pub mod keys;
pub mod lstar;
pub mod mapper;
pub mod mealy;
pub mod packet;
pub mod robust;
pub mod sim;
pub mod sul;

pub use conformance::{generate_suite, ConformanceStats, OracleConfig, StatePrefixOracle};
pub use dot::{from_dot, to_dot};
pub use error::{CatalogError, DotError, LearnError, MapperError, MealyError};
pub use experiment::{run_learning, RunConfig, RunOutcome, Stats};
pub use fingerprint::{
    apply_fingerprint, classify, derive_fingerprint, FingerprintError, FingerprintReport,
};
pub use lstar::{
    learn, CexProcessing, Hypothesis, Learner, LearnerConfig, MachineTeacher, Teacher,
};
pub use mapper::{AbstractAlphabet, Mapper, Procedure};
pub use mealy::{MealyBuilder, MealyMachine, Symbol, Trace, Verdict};
pub use robust::{RobustConfig, RobustTeacher};
pub use sim::{manifest, reference_machine, BleSul, CatalogEntry, Peripheral, Quirk, SocId};
pub use sul::{NoiseConfig, NoisySul, Sul, SulSession};
