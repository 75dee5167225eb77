use std::collections::BTreeMap;
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::{ForgeActions, ForgeError, RepoRef, MAX_LISTED_COMMENTS};
use crate::aggregator::{AuthorKind, CommentId, CommentSnapshot};

pub const DEFAULT_APP_LOGIN: &str = "funnelbot[bot]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoredComment {
    pub repo: RepoRef,
    pub pr_number: u64,
    pub snapshot: CommentSnapshot,
}

/// A [`ForgeActions`] invocation, recorded whether or not it succeeded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum ForgeCall {
    ListComments {
        repo: RepoRef,
        pr_number: u64,
    },
    CreateComment {
        repo: RepoRef,
        pr_number: u64,
    },
    UpdateComment {
        repo: RepoRef,
        comment_id: CommentId,
    },
    MinimizeComment {
        repo: RepoRef,
        comment_id: CommentId,
    },
    DeleteComment {
        repo: RepoRef,
        comment_id: CommentId,
    },
    ReadRepoFile {
        repo: RepoRef,
        path: String,
    },
}

impl ForgeCall {
    pub fn is_read(&self) -> bool {
        matches!(
            self,
            ForgeCall::ListComments { .. } | ForgeCall::ReadRepoFile { .. }
        )
    }

    pub fn is_suppression(&self) -> bool {
        matches!(
            self,
            ForgeCall::MinimizeComment { .. } | ForgeCall::DeleteComment { .. }
        )
    }

    fn same_operation(&self, other: &ForgeCall) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

/// A change to the fake's store. Replaying the log onto an empty fake
/// reproduces the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    PutFile {
        repo: RepoRef,
        path: String,
        contents: Vec<u8>,
    },
    PostComment {
        repo: RepoRef,
        pr_number: u64,
        author_login: String,
        author_kind: AuthorKind,
        body: String,
        at: DateTime<Utc>,
    },
    EditComment {
        comment_id: CommentId,
        body: String,
        at: DateTime<Utc>,
    },
    Minimize {
        comment_id: CommentId,
    },
    Delete {
        comment_id: CommentId,
    },
}

/// Comparable view of the fake's store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FakeSnapshot {
    pub comments: Vec<StoredComment>,
    pub files: BTreeMap<(RepoRef, String), Vec<u8>>,
}

struct Store {
    app_login: String,
    next_id: CommentId,
    clock: DateTime<Utc>,
    comments: BTreeMap<CommentId, StoredComment>,
    files: BTreeMap<(RepoRef, String), Vec<u8>>,
    calls: Vec<ForgeCall>,
    mutations: Vec<Mutation>,
    faults: Vec<(ForgeCall, ForgeError)>,
}

impl Store {
    fn apply(&mut self, m: Mutation) -> Result<CommentId, ForgeError> {
        let id = match &m {
            Mutation::PutFile {
                repo,
                path,
                contents,
            } => {
                self.files
                    .insert((repo.clone(), path.clone()), contents.clone());
                0
            }
            Mutation::PostComment {
                repo,
                pr_number,
                author_login,
                author_kind,
                body,
                at,
            } => {
                let id = self.next_id;
                self.next_id += 1;
                self.clock = self.clock.max(*at);
                self.comments.insert(
                    id,
                    StoredComment {
                        repo: repo.clone(),
                        pr_number: *pr_number,
                        snapshot: CommentSnapshot {
                            comment_id: id,
                            author_login: author_login.clone(),
                            author_kind: *author_kind,
                            body: body.clone(),
                            created_at: *at,
                            edited_at: None,
                            minimized: false,
                        },
                    },
                );
                id
            }
            Mutation::EditComment {
                comment_id,
                body,
                at,
            } => {
                let c = self.existing(*comment_id)?;
                c.snapshot.body = body.clone();
                c.snapshot.edited_at = Some((*at).max(c.snapshot.created_at));
                self.clock = self.clock.max(*at);
                *comment_id
            }
            Mutation::Minimize { comment_id } => {
                self.existing(*comment_id)?.snapshot.minimized = true;
                *comment_id
            }
            Mutation::Delete { comment_id } => {
                self.comments
                    .remove(comment_id)
                    .ok_or_else(|| not_found(*comment_id))?;
                *comment_id
            }
        };
        self.mutations.push(m);
        Ok(id)
    }

    fn existing(&mut self, id: CommentId) -> Result<&mut StoredComment, ForgeError> {
        self.comments.get_mut(&id).ok_or_else(|| not_found(id))
    }

    fn in_repo(&self, repo: &RepoRef, id: CommentId) -> Result<&StoredComment, ForgeError> {
        self.comments
            .get(&id)
            .filter(|c| c.repo == *repo)
            .ok_or_else(|| not_found(id))
    }

    /// Logs `call` and pops a matching injected fault.
    fn enter(&mut self, call: ForgeCall) -> Result<(), ForgeError> {
        let fault = self
            .faults
            .iter()
            .position(|(f, _)| f.same_operation(&call));
        self.calls.push(call);
        match fault {
            Some(i) => Err(self.faults.remove(i).1),
            None => Ok(()),
        }
    }
}

fn not_found(id: CommentId) -> ForgeError {
    ForgeError::NotFound(format!("comment {id}"))
}

/// Deterministic in-memory forge.
///
/// Comment ids start at 1 and increase strictly. Comments posted through
/// [`ForgeActions`] are authored by the app login and stamped with the fake's
/// clock, which only moves forward to the latest timestamp it has seen.
pub struct FakeForge {
    store: Mutex<Store>,
}

impl Default for FakeForge {
    fn default() -> Self {
        Self::new()
    }
}

impl FakeForge {
    pub fn new() -> Self {
        Self::with_app_login(DEFAULT_APP_LOGIN)
    }

    pub fn with_app_login(login: impl Into<String>) -> Self {
        Self {
            store: Mutex::new(Store {
                app_login: login.into(),
                next_id: 1,
                clock: DateTime::<Utc>::UNIX_EPOCH,
                comments: BTreeMap::new(),
                files: BTreeMap::new(),
                calls: Vec::new(),
                mutations: Vec::new(),
                faults: Vec::new(),
            }),
        }
    }

    /// Rebuilds a fake by replaying a mutation log.
    pub fn from_mutations<'a>(
        log: impl IntoIterator<Item = &'a Mutation>,
    ) -> Result<Self, ForgeError> {
        let fake = Self::new();
        {
            let mut store = fake.lock();
            for m in log {
                store.apply(m.clone())?;
            }
        }
        Ok(fake)
    }

    fn lock(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn app_login(&self) -> String {
        self.lock().app_login.clone()
    }

    pub fn put_repo_file(&self, repo: &RepoRef, path: &str, contents: impl Into<Vec<u8>>) {
        self.lock()
            .apply(Mutation::PutFile {
                repo: repo.clone(),
                path: path.to_string(),
                contents: contents.into(),
            })
            .expect("file writes cannot fail");
    }

    /// A third party (human or bot) comments on a pull request.
    pub fn post_comment(
        &self,
        repo: &RepoRef,
        pr_number: u64,
        author_login: &str,
        author_kind: AuthorKind,
        body: &str,
        at: DateTime<Utc>,
    ) -> CommentId {
        self.lock()
            .apply(Mutation::PostComment {
                repo: repo.clone(),
                pr_number,
                author_login: author_login.to_string(),
                author_kind,
                body: body.to_string(),
                at,
            })
            .expect("posting cannot fail")
    }

    /// A third party edits its own comment.
    pub fn edit_comment(
        &self,
        comment_id: CommentId,
        body: &str,
        at: DateTime<Utc>,
    ) -> Result<(), ForgeError> {
        self.lock()
            .apply(Mutation::EditComment {
                comment_id,
                body: body.to_string(),
                at,
            })
            .map(drop)
    }

    /// Makes the next call of the same operation as `call` fail with `error`.
    /// Only the variant of `call` matters, not its arguments.
    pub fn fail_next(&self, call: ForgeCall, error: ForgeError) {
        self.lock().faults.push((call, error));
    }

    /// Current comments on a pull request, without logging a call.
    pub fn comments(&self, repo: &RepoRef, pr_number: u64) -> Vec<CommentSnapshot> {
        self.lock()
            .comments
            .values()
            .filter(|c| c.repo == *repo && c.pr_number == pr_number)
            .map(|c| c.snapshot.clone())
            .collect()
    }

    pub fn comment(&self, id: CommentId) -> Option<CommentSnapshot> {
        self.lock().comments.get(&id).map(|c| c.snapshot.clone())
    }

    pub fn calls(&self) -> Vec<ForgeCall> {
        self.lock().calls.clone()
    }

    pub fn mutations(&self) -> Vec<Mutation> {
        self.lock().mutations.clone()
    }

    pub fn snapshot(&self) -> FakeSnapshot {
        let store = self.lock();
        FakeSnapshot {
            comments: store.comments.values().cloned().collect(),
            files: store.files.clone(),
        }
    }
}

impl ForgeActions for FakeForge {
    fn list_pr_comments(
        &self,
        repo: &RepoRef,
        pr_number: u64,
    ) -> Result<Vec<CommentSnapshot>, ForgeError> {
        let mut store = self.lock();
        store.enter(ForgeCall::ListComments {
            repo: repo.clone(),
            pr_number,
        })?;
        Ok(store
            .comments
            .values()
            .filter(|c| c.repo == *repo && c.pr_number == pr_number)
            .take(MAX_LISTED_COMMENTS)
            .map(|c| c.snapshot.clone())
            .collect())
    }

    fn create_comment(
        &self,
        repo: &RepoRef,
        pr_number: u64,
        body: &str,
    ) -> Result<CommentId, ForgeError> {
        let mut store = self.lock();
        store.enter(ForgeCall::CreateComment {
            repo: repo.clone(),
            pr_number,
        })?;
        let m = Mutation::PostComment {
            repo: repo.clone(),
            pr_number,
            author_login: store.app_login.clone(),
            author_kind: AuthorKind::Bot,
            body: body.to_string(),
            at: store.clock,
        };
        store.apply(m)
    }

    fn update_comment(
        &self,
        repo: &RepoRef,
        comment_id: CommentId,
        body: &str,
    ) -> Result<(), ForgeError> {
        let mut store = self.lock();
        store.enter(ForgeCall::UpdateComment {
            repo: repo.clone(),
            comment_id,
        })?;
        let author = store
            .in_repo(repo, comment_id)?
            .snapshot
            .author_login
            .clone();
        if author != store.app_login {
            return Err(ForgeError::PermissionDenied(format!(
                "comment {comment_id} belongs to {author}"
            )));
        }
        let m = Mutation::EditComment {
            comment_id,
            body: body.to_string(),
            at: store.clock,
        };
        store.apply(m).map(drop)
    }

    fn minimize_comment(&self, repo: &RepoRef, comment_id: CommentId) -> Result<(), ForgeError> {
        let mut store = self.lock();
        store.enter(ForgeCall::MinimizeComment {
            repo: repo.clone(),
            comment_id,
        })?;
        store.in_repo(repo, comment_id)?;
        store.apply(Mutation::Minimize { comment_id }).map(drop)
    }

    fn delete_comment(&self, repo: &RepoRef, comment_id: CommentId) -> Result<(), ForgeError> {
        let mut store = self.lock();
        store.enter(ForgeCall::DeleteComment {
            repo: repo.clone(),
            comment_id,
        })?;
        store.in_repo(repo, comment_id)?;
        store.apply(Mutation::Delete { comment_id }).map(drop)
    }

    fn read_repo_file(&self, repo: &RepoRef, path: &str) -> Result<Option<Vec<u8>>, ForgeError> {
        let mut store = self.lock();
        store.enter(ForgeCall::ReadRepoFile {
            repo: repo.clone(),
            path: path.to_string(),
        })?;
        Ok(store.files.get(&(repo.clone(), path.to_string())).cloned())
    }
}
