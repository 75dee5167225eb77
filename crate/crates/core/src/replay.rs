//! Replays a recorded pull-request timeline through the full pipeline
//! against a fresh [`FakeForge`] and reports how much bot noise remains.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregator::{
    detect_bot, is_managed_body, validate_timeline, AggregateError, CommentId, EventKind,
    ManagedState, TimelineEvent,
};
use crate::config::{is_allowed, parse_config, Mode, RepoConfig, CONFIG_PATH};
use crate::forge::{encode_event, FakeForge, RepoRef};
use crate::mediator::{Mediator, MediatorSettings, Outcome};

pub const TIMELINE_SCHEMA: u32 = 1;

const REPLAY_SECRET: &[u8] = b"funnelbot-replay";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequestInfo {
    pub number: u64,
    pub title: String,
    pub author: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineFile {
    pub schema: u32,
    pub pull_request: PullRequestInfo,
    pub events: Vec<TimelineEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("timeline is not valid JSON: {0}")]
    Json(String),
    #[error("unsupported timeline schema {0} (expected {TIMELINE_SCHEMA})")]
    Schema(u32),
    #[error("timeline event {seq}: {reason}")]
    Event { seq: u64, reason: String },
}

impl TimelineFile {
    pub fn from_json(text: &str) -> Result<Self, ReplayError> {
        let file: TimelineFile =
            serde_json::from_str(text).map_err(|e| ReplayError::Json(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), ReplayError> {
        if self.schema != TIMELINE_SCHEMA {
            return Err(ReplayError::Schema(self.schema));
        }
        validate_timeline(&self.events).map_err(|e| match e {
            AggregateError::Unsorted { seq, previous } => ReplayError::Event {
                seq,
                reason: format!("seq does not increase after {previous}"),
            },
            AggregateError::InvalidEvent { seq, reason } => ReplayError::Event { seq, reason },
            AggregateError::OutOfOrder { seq, last } => ReplayError::Event {
                seq,
                reason: format!("out of order after {last}"),
            },
        })?;
        let mut created = std::collections::HashSet::new();
        for e in &self.events {
            let Some(c) = &e.comment else { continue };
            match e.kind {
                EventKind::CommentCreated if !created.insert(c.comment_id) => {
                    return Err(ReplayError::Event {
                        seq: e.seq,
                        reason: format!("comment {} created twice", c.comment_id),
                    })
                }
                EventKind::CommentEdited if !created.contains(&c.comment_id) => {
                    return Err(ReplayError::Event {
                        seq: e.seq,
                        reason: format!("edit of unknown comment {}", c.comment_id),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub bot_comments_in: usize,
    pub human_comments_in: usize,
    /// Visible comments from the mediator and allowed bots at the end.
    pub visible_bot_comments_out: usize,
    pub groups: usize,
    /// `bot_comments_in:visible_bot_comments_out`.
    pub reduction_ratio: String,
    pub rendered: Option<String>,
}

impl ReplayReport {
    pub fn to_text(&self) -> String {
        format!(
            "bot_comments_in: {}\nhuman_comments_in: {}\nvisible_bot_comments_out: {}\ngroups: {}\nreduction_ratio: {}\n",
            self.bot_comments_in,
            self.human_comments_in,
            self.visible_bot_comments_out,
            self.groups,
            self.reduction_ratio
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Contents of `.github/funnelbot.yml`; absent means no file.
    pub config_text: Option<String>,
    /// Replaces the file's mode when the file parses.
    pub mode: Option<Mode>,
    /// Drop all service state after handling the event at this index.
    pub restart_after: Option<usize>,
}

pub struct ReplayRun {
    pub report: ReplayReport,
    pub forge: Arc<FakeForge>,
    pub repo: RepoRef,
    pub pr_number: u64,
    pub outcomes: Vec<Outcome>,
}

pub fn replay_repo() -> RepoRef {
    RepoRef::new("replay", "sandbox")
}

/// Replays `timeline` with `config` installed as the repository policy.
pub fn replay(timeline: &TimelineFile, config: &RepoConfig) -> Result<ReplayReport, ReplayError> {
    let options = ReplayOptions {
        config_text: Some(config.to_canonical_yaml()),
        ..ReplayOptions::default()
    };
    replay_with(timeline, &options).map(|run| run.report)
}

pub fn replay_with(
    timeline: &TimelineFile,
    options: &ReplayOptions,
) -> Result<ReplayRun, ReplayError> {
    timeline.validate()?;

    let repo = replay_repo();
    let pr = timeline.pull_request.number;
    let forge = Arc::new(FakeForge::new());

    let config_text = match (&options.config_text, options.mode) {
        (text, None) => text.clone(),
        (None, Some(mode)) => Some(
            RepoConfig {
                mode,
                ..RepoConfig::default()
            }
            .to_canonical_yaml(),
        ),
        (Some(text), Some(mode)) => Some(match parse_config(text) {
            Ok(c) => RepoConfig { mode, ..c }.to_canonical_yaml(),
            // left as is so the pipeline sees the broken policy
            Err(_) => text.clone(),
        }),
    };
    let counting_config = config_text
        .as_deref()
        .and_then(|t| parse_config(t).ok())
        .unwrap_or_default();
    if let Some(text) = &config_text {
        forge.put_repo_file(&repo, CONFIG_PATH, text.as_bytes());
    }

    let new_mediator = || Mediator::new(MediatorSettings::new(REPLAY_SECRET), forge.clone());
    let mut mediator = new_mediator();
    let mut ids: HashMap<CommentId, CommentId> = HashMap::new();
    let mut outcomes = Vec::with_capacity(timeline.events.len());
    let (mut bots_in, mut humans_in) = (0, 0);

    for (idx, event) in timeline.events.iter().enumerate() {
        let mut delivered = event.clone();
        if let Some(c) = &event.comment {
            let fake_id = match event.kind {
                EventKind::CommentCreated => {
                    if detect_bot(&c.author_login, c.author_kind, &counting_config) {
                        bots_in += 1;
                    } else {
                        humans_in += 1;
                    }
                    let id = forge.post_comment(
                        &repo,
                        pr,
                        &c.author_login,
                        c.author_kind,
                        &c.body,
                        c.created_at,
                    );
                    ids.insert(c.comment_id, id);
                    id
                }
                _ => {
                    let id = ids[&c.comment_id];
                    // the original may already be deleted by the mediator
                    let _ = forge.edit_comment(id, &c.body, c.last_changed());
                    id
                }
            };
            let snapshot = delivered.comment.as_mut().unwrap();
            snapshot.comment_id = fake_id;
            snapshot.minimized = false;
        }
        let envelope = encode_event(&repo, pr, &delivered, REPLAY_SECRET);
        outcomes.push(mediator.handle_envelope(&envelope));
        if options.restart_after == Some(idx) {
            mediator = new_mediator();
        }
    }

    let comments = forge.comments(&repo, pr);
    let managed = comments
        .iter()
        .filter(|c| is_managed_body(&c.body) && !c.minimized)
        .min_by_key(|c| (c.created_at, c.comment_id));
    let visible = comments
        .iter()
        .filter(|c| !c.minimized)
        .filter(|c| {
            is_managed_body(&c.body)
                || (detect_bot(&c.author_login, c.author_kind, &counting_config)
                    && is_allowed(&c.author_login, &counting_config))
        })
        .count();

    let report = ReplayReport {
        bot_comments_in: bots_in,
        human_comments_in: humans_in,
        visible_bot_comments_out: visible,
        groups: managed
            .and_then(|m| ManagedState::parse(&m.body))
            .map_or(0, |s| s.counts.len()),
        reduction_ratio: format!("{bots_in}:{visible}"),
        rendered: managed.map(|m| m.body.clone()),
    };
    Ok(ReplayRun {
        report,
        forge,
        repo,
        pr_number: pr,
        outcomes,
    })
}
