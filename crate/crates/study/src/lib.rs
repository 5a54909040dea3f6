//! Study server for running explanation studies with human participants.
//!
//! Participants are assigned one explanation kind, read consent and
//! instructions, pass a comprehension check, practise on training items with
//! feedback and then answer the test items without it. Each study keeps an
//! append-only record log that is replayed on start, and exports answers as
//! CSV.
//!
//! [`Study`] holds the state machine and can be driven directly; [`router`]
//! wraps any number of studies in an HTTP and JSON interface.

pub mod clock;
pub mod config;
pub mod error;
pub mod export;
pub mod http;
pub mod log;
pub mod study;

pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{Content, StudyConfig};
pub use error::{Result, StudyError};
pub use export::{accuracy_by_kind, export_csv};
pub use http::{router, AppState};
pub use study::{Event, Phase, PhasePayload, Session, Study};
