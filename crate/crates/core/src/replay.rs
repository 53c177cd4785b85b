//! Deterministic replay of an input trace through a fresh session.

use crate::effect::EffectRecord;
use crate::metrics::MetricsReport;
use crate::session::{Session, SessionConfig, SessionError, SessionState};
use crate::trace::{InputTrace, TraceError};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub state: SessionState,
    pub effects: Vec<EffectRecord>,
    pub report: MetricsReport,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Options that override the trace header.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReplayOptions {
    pub silence_gap_ms: Option<u64>,
}

pub fn session_config_for(trace: &InputTrace, options: ReplayOptions) -> SessionConfig {
    SessionConfig {
        silence_gap_ms: options
            .silence_gap_ms
            .unwrap_or(trace.header.silence_gap_ms),
        ..SessionConfig::default()
    }
}

pub fn replay(trace: &InputTrace) -> Result<ReplayOutcome, ReplayError> {
    replay_with(trace, ReplayOptions::default())
}

/// Feeds every event in order. Pending deadlines (silence gap, boost
/// expiry) fire at their exact time before the first event at or after
/// them, so the outcome does not depend on tick spacing.
pub fn replay_with(trace: &InputTrace, options: ReplayOptions) -> Result<ReplayOutcome, ReplayError> {
    trace.check_order()?;
    let mut session = Session::with_contacts(
        session_config_for(trace, options),
        trace.header.contacts.iter().cloned(),
    );
    let mut effects = Vec::new();
    for event in &trace.events {
        effects.extend(session.advance_to(event.t_ms)?);
        for effect in session.handle_event(&event.event, event.t_ms)? {
            effects.push(EffectRecord {
                t: event.t_ms,
                effect,
            });
        }
    }
    let report = MetricsReport::from_log(&effects, &trace.header.reference);
    Ok(ReplayOutcome {
        state: session.into_state(),
        effects,
        report,
    })
}
