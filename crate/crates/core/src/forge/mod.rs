//! Code-hosting forge abstraction.
//!
//! Webhook intake ([`verify_signature`], [`decode_event`]) and the small set
//! of comment and file operations the mediator performs ([`ForgeActions`]).
//! [`FakeForge`] is a deterministic in-memory implementation used by tests
//! and the replay harness.

mod fake;
mod payload;
mod retry;
mod signature;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregator::{CommentId, CommentSnapshot};

pub use fake::{FakeForge, FakeSnapshot, ForgeCall, Mutation, StoredComment, DEFAULT_APP_LOGIN};
pub use payload::{decode_event, encode_event, DecodeError, Decoded, PrEvent};
pub use retry::RetryPolicy;
pub use signature::{sign, verify_signature};

pub const SIGNATURE_HEADER: &str = "X-Hub-Signature-256";
pub const DELIVERY_HEADER: &str = "X-GitHub-Delivery";
pub const EVENT_HEADER: &str = "X-GitHub-Event";

/// Most comments read from one pull request.
pub const MAX_LISTED_COMMENTS: usize = 250;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepoRef {
    pub owner: String,
    pub name: String,
}

impl RepoRef {
    pub fn new(owner: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            owner: owner.into(),
            name: name.into(),
        }
    }
}

impl fmt::Display for RepoRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.owner, self.name)
    }
}

impl FromStr for RepoRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((o, n)) if !o.is_empty() && !n.is_empty() && !n.contains('/') => {
                Ok(RepoRef::new(o, n))
            }
            _ => Err(format!("expected owner/name, got `{s}`")),
        }
    }
}

/// One webhook delivery as received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgeEventEnvelope {
    pub delivery_id: String,
    pub event_name: String,
    pub signature_header: Option<String>,
    /// Exact request body; the signature covers these bytes.
    pub raw_body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForgeError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("rate limited, retry after {retry_after:?}")]
    RateLimited { retry_after: Duration },
    #[error("transient forge failure: {0}")]
    Transient(String),
    #[error("forge error: {0}")]
    Other(String),
}

impl ForgeError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ForgeError::RateLimited { .. } | ForgeError::Transient(_)
        )
    }
}

/// The forge operations the mediator needs.
pub trait ForgeActions: Send + Sync {
    /// Issue-style comments on a pull request in creation order.
    fn list_pr_comments(
        &self,
        repo: &RepoRef,
        pr_number: u64,
    ) -> Result<Vec<CommentSnapshot>, ForgeError>;
    fn create_comment(
        &self,
        repo: &RepoRef,
        pr_number: u64,
        body: &str,
    ) -> Result<CommentId, ForgeError>;
    fn update_comment(
        &self,
        repo: &RepoRef,
        comment_id: CommentId,
        body: &str,
    ) -> Result<(), ForgeError>;
    fn minimize_comment(&self, repo: &RepoRef, comment_id: CommentId) -> Result<(), ForgeError>;
    fn delete_comment(&self, repo: &RepoRef, comment_id: CommentId) -> Result<(), ForgeError>;
    /// File contents on the default branch, `None` if absent.
    fn read_repo_file(&self, repo: &RepoRef, path: &str) -> Result<Option<Vec<u8>>, ForgeError>;
}

impl<T: ForgeActions + ?Sized> ForgeActions for Arc<T> {
    fn list_pr_comments(
        &self,
        repo: &RepoRef,
        pr_number: u64,
    ) -> Result<Vec<CommentSnapshot>, ForgeError> {
        (**self).list_pr_comments(repo, pr_number)
    }
    fn create_comment(
        &self,
        repo: &RepoRef,
        pr_number: u64,
        body: &str,
    ) -> Result<CommentId, ForgeError> {
        (**self).create_comment(repo, pr_number, body)
    }
    fn update_comment(
        &self,
        repo: &RepoRef,
        comment_id: CommentId,
        body: &str,
    ) -> Result<(), ForgeError> {
        (**self).update_comment(repo, comment_id, body)
    }
    fn minimize_comment(&self, repo: &RepoRef, comment_id: CommentId) -> Result<(), ForgeError> {
        (**self).minimize_comment(repo, comment_id)
    }
    fn delete_comment(&self, repo: &RepoRef, comment_id: CommentId) -> Result<(), ForgeError> {
        (**self).delete_comment(repo, comment_id)
    }
    fn read_repo_file(&self, repo: &RepoRef, path: &str) -> Result<Option<Vec<u8>>, ForgeError> {
        (**self).read_repo_file(repo, path)
    }
}
