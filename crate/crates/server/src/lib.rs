//! Webhook service wiring the mediator to GitHub.

pub mod app;
pub mod live;

pub use app::{router, AppState, HeaderNames, DRAIN_TIMEOUT};
pub use live::GitHubForge;
