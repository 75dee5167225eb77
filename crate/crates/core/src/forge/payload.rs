//! Webhook payload mapping.
//!
//! Only two forge events matter: `pull_request` with action `opened`, and
//! `issue_comment` created/edited on a pull request. Everything else decodes
//! to [`Decoded::Ignored`].
//!
//! Payloads produced by [`encode_event`] carry an extra top-level `sequence`
//! field holding the event's seq. Live payloads lack it; the seq then falls
//! back to the event timestamp in Unix seconds.

use chrono::{DateTime, Utc};
use serde_json::{json, Value};
use thiserror::Error;

use super::{sign, ForgeEventEnvelope, RepoRef};
use crate::aggregator::{AuthorKind, CommentSnapshot, EventKind, TimelineEvent};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrEvent {
    pub repo: RepoRef,
    pub pr_number: u64,
    pub event: TimelineEvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Event(PrEvent),
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed JSON payload: {0}")]
    Json(String),
    #[error("{0} missing")]
    MissingField(&'static str),
    #[error("{field} invalid: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

/// Maps a webhook delivery to a pull-request timeline event.
pub fn decode_event(envelope: &ForgeEventEnvelope) -> Result<Decoded, DecodeError> {
    match envelope.event_name.as_str() {
        "pull_request" | "issue_comment" => {}
        _ => return Ok(Decoded::Ignored),
    }
    let payload: Value =
        serde_json::from_slice(&envelope.raw_body).map_err(|e| DecodeError::Json(e.to_string()))?;
    let action = str_field(&payload, "action")?;

    if envelope.event_name == "pull_request" {
        if action != "opened" {
            return Ok(Decoded::Ignored);
        }
        let repo = repo_of(&payload)?;
        let pr_number = u64_field(&payload, "number")?;
        let seq = match payload.get("sequence").and_then(Value::as_u64) {
            Some(s) => s,
            None => unix_seconds(time_field(&payload, "pull_request.created_at")?),
        };
        return Ok(Decoded::Event(PrEvent {
            repo,
            pr_number,
            event: TimelineEvent::pr_opened(seq, envelope.delivery_id.clone()),
        }));
    }

    let kind = match action {
        "created" => EventKind::CommentCreated,
        "edited" => EventKind::CommentEdited,
        _ => return Ok(Decoded::Ignored),
    };
    // issue_comment fires for plain issues too
    if lookup(&payload, "issue.pull_request").map_or(true, Value::is_null) {
        return Ok(Decoded::Ignored);
    }
    let repo = repo_of(&payload)?;
    let pr_number = u64_field(&payload, "issue.number")?;
    let comment_id = u64_field(&payload, "comment.id")?;
    let body = str_field(&payload, "comment.body")?.to_string();
    let login = str_field(&payload, "comment.user.login")?.to_string();
    let account_type = lookup(&payload, "comment.user.type").and_then(Value::as_str);
    let author_kind = if account_type == Some("Bot") || login.ends_with("[bot]") {
        AuthorKind::Bot
    } else {
        AuthorKind::Human
    };
    let created_at = time_field(&payload, "comment.created_at")?;
    let updated_at = match lookup(&payload, "comment.updated_at") {
        None | Some(Value::Null) => None,
        Some(_) => Some(time_field(&payload, "comment.updated_at")?),
    };
    let edited_at = match kind {
        EventKind::CommentEdited => Some(updated_at.unwrap_or(created_at)),
        _ => updated_at.filter(|u| *u != created_at),
    };
    if edited_at.is_some_and(|e| e < created_at) {
        return Err(DecodeError::InvalidField {
            field: "comment.updated_at",
            reason: "precedes created_at".into(),
        });
    }

    let snapshot = CommentSnapshot {
        comment_id,
        author_login: login,
        author_kind,
        body,
        created_at,
        edited_at,
        minimized: false,
    };
    let seq = match payload.get("sequence").and_then(Value::as_u64) {
        Some(s) => s,
        None => unix_seconds(snapshot.last_changed()),
    };
    Ok(Decoded::Event(PrEvent {
        repo,
        pr_number,
        event: TimelineEvent::comment(seq, envelope.delivery_id.clone(), kind, snapshot),
    }))
}

/// Builds the signed webhook delivery a forge would send for `event`.
pub fn encode_event(
    repo: &RepoRef,
    pr_number: u64,
    event: &TimelineEvent,
    secret: &[u8],
) -> ForgeEventEnvelope {
    let repository = json!({
        "name": repo.name,
        "full_name": repo.to_string(),
        "owner": { "login": repo.owner },
    });
    let (event_name, payload) = match (&event.kind, &event.comment) {
        (EventKind::PrOpened, _) | (_, None) => {
            let created = event
                .comment
                .as_ref()
                .map(|c| c.created_at)
                .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
            (
                "pull_request",
                json!({
                    "action": "opened",
                    "number": pr_number,
                    "pull_request": { "number": pr_number, "created_at": rfc3339(created) },
                    "repository": repository,
                    "sequence": event.seq,
                }),
            )
        }
        (kind, Some(c)) => (
            "issue_comment",
            json!({
                "action": if *kind == EventKind::CommentEdited { "edited" } else { "created" },
                "issue": {
                    "number": pr_number,
                    "pull_request": { "url": format!("https://forge.invalid/{repo}/pulls/{pr_number}") },
                },
                "comment": {
                    "id": c.comment_id,
                    "body": c.body,
                    "user": {
                        "login": c.author_login,
                        "type": if c.author_kind == AuthorKind::Bot { "Bot" } else { "User" },
                    },
                    "created_at": rfc3339(c.created_at),
                    "updated_at": rfc3339(c.last_changed()),
                },
                "repository": repository,
                "sequence": event.seq,
            }),
        ),
    };
    let raw_body = serde_json::to_vec(&payload).expect("payload serializes");
    ForgeEventEnvelope {
        delivery_id: event.delivery_id.clone(),
        event_name: event_name.to_string(),
        signature_header: Some(sign(secret, &raw_body)),
        raw_body,
    }
}

fn rfc3339(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn unix_seconds(t: DateTime<Utc>) -> u64 {
    t.timestamp().max(0) as u64
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, key| cur.get(key))
}

fn present<'a>(v: &'a Value, path: &'static str) -> Result<&'a Value, DecodeError> {
    match lookup(v, path) {
        None | Some(Value::Null) => Err(DecodeError::MissingField(path)),
        Some(x) => Ok(x),
    }
}

fn str_field<'a>(v: &'a Value, path: &'static str) -> Result<&'a str, DecodeError> {
    present(v, path)?.as_str().ok_or(DecodeError::InvalidField {
        field: path,
        reason: "expected a string".into(),
    })
}

fn u64_field(v: &Value, path: &'static str) -> Result<u64, DecodeError> {
    present(v, path)?.as_u64().ok_or(DecodeError::InvalidField {
        field: path,
        reason: "expected a non-negative integer".into(),
    })
}

fn time_field(v: &Value, path: &'static str) -> Result<DateTime<Utc>, DecodeError> {
    let s = str_field(v, path)?;
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| DecodeError::InvalidField {
            field: path,
            reason: e.to_string(),
        })
}

fn repo_of(v: &Value) -> Result<RepoRef, DecodeError> {
    Ok(RepoRef::new(
        str_field(v, "repository.owner.login")?,
        str_field(v, "repository.name")?,
    ))
}
