//! Pure aggregation of a pull-request timeline into the managed comment.
//!
//! [`build_document`] folds a whole timeline at once and [`apply_event`]
//! folds one event into an existing document; both produce identical
//! documents for the same input. [`render_document`] turns a document into
//! the markdown body of the managed comment.

mod build;
mod fold;
mod managed;
mod render;

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RepoConfig;

pub use build::build_document;
pub use fold::apply_event;
pub use managed::{find_managed_comment, is_managed_body, ManagedLookup, ManagedState};
pub use render::{
    collapsible_blocks, parse_group_blocks, render_document, RenderLimits, RenderedGroup,
};

/// First line of every managed comment.
pub const MARKER: &str = "<!-- funnelbot:v1 -->";

/// Number of delivery ids a document remembers for idempotent re-delivery.
pub const DELIVERY_WINDOW: usize = 256;

pub type CommentId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorKind {
    Human,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentSnapshot {
    pub comment_id: CommentId,
    pub author_login: String,
    pub author_kind: AuthorKind,
    pub body: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_at: Option<DateTime<Utc>>,
    /// Hidden on the forge (still listed).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub minimized: bool,
}

impl CommentSnapshot {
    /// Time of the latest change to this comment.
    pub fn last_changed(&self) -> DateTime<Utc> {
        self.edited_at.unwrap_or(self.created_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PrOpened,
    CommentCreated,
    CommentEdited,
}

impl EventKind {
    pub fn is_comment(self) -> bool {
        matches!(self, EventKind::CommentCreated | EventKind::CommentEdited)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub seq: u64,
    pub delivery_id: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<CommentSnapshot>,
}

impl TimelineEvent {
    pub fn pr_opened(seq: u64, delivery_id: impl Into<String>) -> Self {
        Self {
            seq,
            delivery_id: delivery_id.into(),
            kind: EventKind::PrOpened,
            comment: None,
        }
    }

    pub fn comment(
        seq: u64,
        delivery_id: impl Into<String>,
        kind: EventKind,
        comment: CommentSnapshot,
    ) -> Self {
        Self {
            seq,
            delivery_id: delivery_id.into(),
            kind,
            comment: Some(comment),
        }
    }

    /// Checks the single-event invariants.
    pub fn validate(&self) -> Result<(), AggregateError> {
        let invalid = |reason: &str| AggregateError::InvalidEvent {
            seq: self.seq,
            reason: reason.to_string(),
        };
        if self.delivery_id.is_empty() {
            return Err(invalid("empty delivery_id"));
        }
        match (&self.comment, self.kind.is_comment()) {
            (None, true) => Err(invalid("comment event without comment")),
            (Some(c), _) => {
                if c.author_login.is_empty() {
                    return Err(invalid("empty author_login"));
                }
                if c.edited_at.is_some_and(|e| e < c.created_at) {
                    return Err(invalid("edited_at precedes created_at"));
                }
                Ok(())
            }
            (None, false) => Ok(()),
        }
    }

    /// When the event happened: the edit time for edits, else creation.
    pub fn occurred_at(&self) -> Option<DateTime<Utc>> {
        let c = self.comment.as_ref()?;
        Some(match self.kind {
            EventKind::CommentEdited => c.last_changed(),
            _ => c.created_at,
        })
    }
}

/// Checks ordering and uniqueness across a whole timeline.
pub fn validate_timeline(events: &[TimelineEvent]) -> Result<(), AggregateError> {
    let mut deliveries = std::collections::HashSet::new();
    let mut prev: Option<u64> = None;
    for event in events {
        event.validate()?;
        if let Some(p) = prev {
            if event.seq <= p {
                return Err(AggregateError::Unsorted {
                    seq: event.seq,
                    previous: p,
                });
            }
        }
        if !deliveries.insert(event.delivery_id.as_str()) {
            return Err(AggregateError::InvalidEvent {
                seq: event.seq,
                reason: format!("duplicate delivery_id `{}`", event.delivery_id),
            });
        }
        prev = Some(event.seq);
    }
    Ok(())
}

/// One bot's slot in the managed comment. The body shown is the newest by
/// event time; equal times go to the later event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BotGroup {
    pub bot_login: String,
    pub category: String,
    pub latest_body: String,
    pub update_count: u32,
    pub latest_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatedDocument {
    pub intro: String,
    pub groups: Vec<BotGroup>,
    pub suppressed_bot_comment_count: u64,
    /// Sorted, de-duplicated logins of bots the policy excludes.
    pub filtered_bots: Vec<String>,
    pub last_applied_seq: Option<u64>,
    /// Most recent [`DELIVERY_WINDOW`] delivery ids folded in, oldest first.
    pub recent_deliveries: VecDeque<String>,
}

impl AggregatedDocument {
    pub fn empty(config: &RepoConfig) -> Self {
        Self {
            intro: intro_text(config, 0, 0),
            groups: Vec::new(),
            suppressed_bot_comment_count: 0,
            filtered_bots: Vec::new(),
            last_applied_seq: None,
            recent_deliveries: VecDeque::new(),
        }
    }

    pub fn group(&self, login: &str) -> Option<&BotGroup> {
        self.groups.iter().find(|g| g.bot_login == login)
    }

    pub(crate) fn sort_groups(&mut self, config: &RepoConfig) {
        self.groups
            .sort_by_cached_key(|g| group_order_key(&g.category, &g.bot_login, config));
    }

    pub(crate) fn refresh_intro(&mut self, config: &RepoConfig) {
        self.intro = intro_text(config, self.groups.len(), self.suppressed_bot_comment_count);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("out-of-order event: seq {seq} is not after last applied seq {last}")]
    OutOfOrder { seq: u64, last: u64 },
    #[error("timeline not sorted by seq: {seq} follows {previous}")]
    Unsorted { seq: u64, previous: u64 },
    #[error("invalid event {seq}: {reason}")]
    InvalidEvent { seq: u64, reason: String },
}

/// True iff the author is treated as a bot: flagged by the forge, named with
/// the `[bot]` suffix, or listed in the repository policy.
pub fn detect_bot(author_login: &str, author_kind: AuthorKind, config: &RepoConfig) -> bool {
    author_kind == AuthorKind::Bot
        || author_login.ends_with("[bot]")
        || config.policy(author_login).is_some()
}

/// Whether an event's comment is aggregated at all (bots only, never the
/// managed comment itself).
pub(crate) fn aggregated_comment<'a>(
    event: &'a TimelineEvent,
    config: &RepoConfig,
) -> Option<&'a CommentSnapshot> {
    if !event.kind.is_comment() {
        return None;
    }
    let c = event.comment.as_ref()?;
    if is_managed_body(&c.body) || !detect_bot(&c.author_login, c.author_kind, config) {
        return None;
    }
    Some(c)
}

pub(crate) fn group_order_key(
    category: &str,
    login: &str,
    config: &RepoConfig,
) -> (usize, String, String) {
    (
        config.category_rank(category),
        login.to_lowercase(),
        login.to_string(),
    )
}

pub const DEFAULT_INTRO_TEMPLATE: &str =
    "FunnelBot collected {messages} from {bots} on this pull request. \
Each group below holds the latest message of one bot; expand a group to read it.";

pub const EMPTY_INTRO: &str = "FunnelBot has seen no bot activity yet on this pull request.";

/// Intro paragraph. `{bots}` and `{messages}` in the template expand to
/// pluralized counts.
pub fn intro_text(config: &RepoConfig, bots: usize, messages: u64) -> String {
    if bots == 0 {
        return EMPTY_INTRO.to_string();
    }
    let template = config
        .intro_template
        .as_deref()
        .unwrap_or(DEFAULT_INTRO_TEMPLATE);
    template
        .replace("{bots}", &plural(bots as u64, "bot"))
        .replace("{messages}", &plural(messages, "message"))
}

pub(crate) fn plural(n: u64, noun: &str) -> String {
    if n == 1 {
        format!("{n} {noun}")
    } else {
        format!("{n} {noun}s")
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BotPolicy;

    #[test]
    fn detect_bot_rules() {
        let empty = RepoConfig::default();
        assert!(detect_bot("codecov[bot]", AuthorKind::Human, &empty));
        assert!(!detect_bot("octocat", AuthorKind::Human, &empty));
        assert!(detect_bot("octocat", AuthorKind::Bot, &empty));

        let listing = RepoConfig {
            bots: vec![BotPolicy {
                login: "dependabot".into(),
                allowed: true,
                category: None,
            }],
            ..RepoConfig::default()
        };
        assert!(detect_bot("dependabot", AuthorKind::Human, &listing));
    }

    #[test]
    fn timeline_validation() {
        use testutil::*;
        let ok = vec![created(1, 1, "a[bot]", "x"), created(2, 2, "b[bot]", "y")];
        assert!(validate_timeline(&ok).is_ok());

        let unsorted = vec![created(2, 1, "a[bot]", "x"), created(1, 2, "b[bot]", "y")];
        assert!(matches!(
            validate_timeline(&unsorted),
            Err(AggregateError::Unsorted {
                seq: 1,
                previous: 2
            })
        ));

        let mut missing = created(1, 1, "a[bot]", "x");
        missing.comment = None;
        assert!(missing.validate().is_err());

        let mut dup = ok.clone();
        dup[1].delivery_id = dup[0].delivery_id.clone();
        assert!(validate_timeline(&dup).is_err());
    }

    #[test]
    fn intro_pluralizes() {
        let c = RepoConfig::default();
        assert_eq!(intro_text(&c, 0, 0), EMPTY_INTRO);
        assert!(intro_text(&c, 1, 1).contains("1 message from 1 bot "));
        assert!(intro_text(&c, 5, 7).contains("7 messages from 5 bots"));
        let custom = RepoConfig {
            intro_template: Some("{bots} / {messages}".into()),
            ..RepoConfig::default()
        };
        assert_eq!(intro_text(&custom, 2, 3), "2 bots / 3 messages");
    }
}
