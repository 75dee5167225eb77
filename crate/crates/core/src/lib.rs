//! Pull-request bot comment mediation.
//!
//! Bots that report on pull requests through comments are intercepted and
//! folded into one managed comment per pull request. Each bot gets a single
//! collapsible group holding its latest message, ordered by a per-repository
//! category ranking.
//!
//! The crate is organised bottom-up:
//!
//! * [`config`] parses the repository policy file (`.github/funnelbot.yml`).
//! * [`aggregator`] is the pure fold from a pull-request timeline to an
//!   [`aggregator::AggregatedDocument`] and its markdown rendering.
//! * [`forge`] decodes and authenticates webhooks and abstracts the comment
//!   API behind [`forge::ForgeActions`], with an in-memory [`forge::FakeForge`].
//! * [`mediator`] wires the three together into the per-event pipeline.
//! * [`replay`] drives recorded timelines through the pipeline for evaluation.

pub mod aggregator;
pub mod config;
pub mod forge;
pub mod mediator;
pub mod replay;

pub use aggregator::{
    apply_event, build_document, detect_bot, find_managed_comment, render_document, AggregateError,
    AggregatedDocument, AuthorKind, BotGroup, CommentId, CommentSnapshot, EventKind, ManagedLookup,
    RenderLimits, TimelineEvent, MARKER,
};
pub use config::{parse_config, BotPolicy, ConfigError, Mode, RepoConfig, Suppression};
pub use forge::{ForgeActions, ForgeError, ForgeEventEnvelope, RepoRef};
pub use mediator::{Mediator, MediatorSettings, Outcome};
