//! Cycle-level simulation of interrupt-counting attacks on an enclave with
//! an AEX mitigation, plus the signature-to-key pipeline they feed.

pub mod attack;
pub mod cycles;
pub mod ecdsa;
pub mod enclave;
pub mod error;
pub mod experiments;
pub mod fingerprint;
pub mod interrupt;
pub mod profile;
pub mod rng;
pub mod victims;

pub use cycles::Cycles;
pub use enclave::{
    AexCause, AexEvent, EnclaveParams, EnclaveState, InstructionSpec, Machine, MitigationModel, Opcode,
    PreparedVictim, VictimProgram,
};
pub use error::{Error, Result};
pub use fingerprint::trace::{CounterTrace, InterruptClass};
pub use interrupt::{ArrivalDistribution, IpiPlan};
pub use profile::Profile;
