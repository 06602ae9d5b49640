//! Trojan insertion and labeled corpus synthesis.
//!
//! A trojan is a trigger (a counter of watched opcodes that raises
//! `Trojan_Trigger_Out` once it passes a threshold) plus a payload that acts
//! when the trigger is set. [`inject_trigger`] and [`inject_payload`] rewrite
//! one module of an [`Ast`](crate::verilog::Ast); [`generate_corpus`] applies
//! seeded variants to a set of clean designs and self-checks every output.

mod corpus;
mod template;

use thiserror::Error;

pub use corpus::{generate_corpus, CleanDesign, Corpus, DatasetManifest, ManifestEntry, ManifestFailure};
pub use template::{
    inject, inject_payload, inject_trigger, payload_targets, InjectionRecord, NamePatterns, PayloadParams,
    TemplateKind, TriggerInfo, TriggerParams, TrojanTemplate, EBREAK, TROJAN_COUNTER, TROJAN_ORIG,
    TROJAN_PAYLOAD, TROJAN_STALL, TROJAN_TRIGGER_OUT,
};

use crate::dfg::DfgError;
use crate::verilog::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InjectError {
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("no clock input found in module `{0}`")]
    NoClockFound(String),
    #[error("no reset input found in module `{0}`")]
    NoResetFound(String),
    #[error("no input to watch in module `{0}`")]
    NoWatchSignal(String),
    #[error("cannot find a free name for `{0}`")]
    SignalCollision(String),
    #[error("target signal `{0}` not found")]
    TargetNotFound(String),
    #[error("module `{0}` has no trojan trigger")]
    MissingTrigger(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Dfg(#[from] DfgError),
}
