pub mod corpus;
pub mod forest;
pub mod metrics;
pub mod trace;

use crate::enclave::{AexEvent, MitigationModel};
use crate::interrupt::IpiPlan;
use forest::ClassifierModel;
use rand::Rng;
use std::sync::Arc;
use trace::{synthesize_trace, InterruptClass, TraceMeta, TraceShape};

/// The attacker's view of an interrupt.
#[derive(Clone, Debug)]
pub enum Classifier {
    Forest(Arc<ClassifierModel>),
    /// Ground-truth labels; only for debugging and the noiseless profile.
    Oracle,
}

impl Classifier {
    /// Synthesizes the counter trace for `event` and labels it. The forest
    /// path never reads `event.landing`.
    pub fn classify<R: Rng + ?Sized>(
        &self,
        event: &AexEvent,
        m: &MitigationModel,
        shape: &TraceShape,
        plan: &IpiPlan,
        rng: &mut R,
    ) -> InterruptClass {
        match self {
            Classifier::Oracle => InterruptClass::from_landing(event.landing),
            Classifier::Forest(model) => {
                let meta = TraceMeta {
                    fire_delay: plan.fire_delay,
                    seed: 0,
                };
                let t = synthesize_trace(event, m, shape, meta, rng);
                model.predict(&t.features())
            }
        }
    }
}
