//! Generative sequence models for event-log process data: adversarial
//! Transformer generators with auxiliary losses, autoregressive and
//! non-autoregressive baselines, quality measures for synthetic traces and
//! consensus workflow discovery.

pub mod autodiff;
pub mod evaluation;
pub mod event_log;
pub mod nn;
pub mod toyproc;
pub mod training;
pub mod workflow;

pub use event_log::{Trace, Vocabulary};
pub use training::{Checkpoint, ModelKind};
