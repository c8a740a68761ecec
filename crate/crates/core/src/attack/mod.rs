pub mod lbms;
pub mod memcmp;
pub mod pss;
pub mod stepping;

use crate::enclave::Machine;
use crate::error::Result;
use crate::fingerprint::trace::TraceShape;
use crate::interrupt::ArrivalDistribution;
use crate::profile::Profile;
use crate::enclave::MitigationModel;

/// Everything an attack loop needs besides the victim and the IPI plan.
#[derive(Clone, Debug)]
pub struct AttackEnv {
    pub machine: Machine,
    pub arrival: ArrivalDistribution,
    pub shape: TraceShape,
    pub cache_enabled: bool,
    pub cap: u64,
}

impl AttackEnv {
    pub fn from_profile(p: &Profile) -> Result<Self> {
        p.validate()?;
        Ok(AttackEnv {
            machine: Machine::new(p.enclave.clone(), p.mitigation.clone())?,
            arrival: p.arrival.clone(),
            shape: p.trace.clone(),
            cache_enabled: p.enclave.cache_enabled,
            cap: p.attack.max_interrupts_per_trace,
        })
    }

    pub fn mitigation(&self) -> &MitigationModel {
        &self.machine.mitigation
    }
}
