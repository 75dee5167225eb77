//! [`ForgeActions`] over the GitHub REST and GraphQL APIs.

use std::time::Duration;

use chrono::{DateTime, Utc};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::header::{HeaderMap, ACCEPT};
use reqwest::{Method, StatusCode};
use serde::Deserialize;
use serde_json::json;

use funnelbot_core::forge::{RetryPolicy, MAX_LISTED_COMMENTS};
use funnelbot_core::{AuthorKind, CommentId, CommentSnapshot, ForgeActions, ForgeError, RepoRef};

const PER_PAGE: usize = 100;
const USER_AGENT: &str = concat!("funnelbot/", env!("CARGO_PKG_VERSION"));

pub struct GitHubForge {
    client: Client,
    api_url: String,
    token: String,
    retry: RetryPolicy,
}

#[derive(Debug, Deserialize)]
struct ApiUser {
    login: String,
    #[serde(rename = "type", default)]
    kind: String,
}

#[derive(Debug, Deserialize)]
struct ApiComment {
    id: CommentId,
    #[serde(default)]
    node_id: String,
    user: Option<ApiUser>,
    #[serde(default)]
    body: Option<String>,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
}

impl ApiComment {
    fn into_snapshot(self) -> CommentSnapshot {
        let (login, kind) = match self.user {
            Some(u) => (u.login, u.kind),
            None => ("ghost".to_string(), String::new()),
        };
        let author_kind = if kind == "Bot" || login.ends_with("[bot]") {
            AuthorKind::Bot
        } else {
            AuthorKind::Human
        };
        CommentSnapshot {
            comment_id: self.id,
            author_login: login,
            author_kind,
            body: self.body.unwrap_or_default(),
            created_at: self.created_at,
            edited_at: (self.updated_at != self.created_at).then_some(self.updated_at),
            // the REST listing does not report minimization
            minimized: false,
        }
    }
}

impl GitHubForge {
    pub fn new(api_url: impl Into<String>, token: impl Into<String>) -> Result<Self, ForgeError> {
        let client = Client::builder()
            .user_agent(USER_AGENT)
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ForgeError::Other(e.to_string()))?;
        Ok(Self {
            client,
            api_url: api_url.into().trim_end_matches('/').to_string(),
            token: token.into(),
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// GraphQL endpoint next to the REST root; Enterprise servers serve REST
    /// under `/api/v3` and GraphQL under `/api/graphql`.
    fn graphql_url(&self) -> String {
        match self.api_url.strip_suffix("/v3") {
            Some(root) => format!("{root}/graphql"),
            None => format!("{}/graphql", self.api_url),
        }
    }

    fn repo_url(&self, repo: &RepoRef, rest: &str) -> String {
        format!("{}/repos/{}/{}/{rest}", self.api_url, repo.owner, repo.name)
    }

    fn send(&self, build: impl Fn(&Client) -> RequestBuilder) -> Result<Response, ForgeError> {
        self.retry.run(std::thread::sleep, || {
            let request = build(&self.client)
                .bearer_auth(&self.token)
                .header("X-GitHub-Api-Version", "2022-11-28");
            let response = request
                .send()
                .map_err(|e| ForgeError::Transient(e.to_string()))?;
            if response.status().is_success() {
                Ok(response)
            } else {
                let status = response.status();
                let headers = response.headers().clone();
                let text = response.text().unwrap_or_default();
                Err(classify(status, &headers, &text, Utc::now()))
            }
        })
    }

    fn json_request(
        &self,
        method: Method,
        url: &str,
        body: serde_json::Value,
    ) -> Result<Response, ForgeError> {
        self.send(|c| {
            c.request(method.clone(), url)
                .header(ACCEPT, "application/vnd.github+json")
                .json(&body)
        })
    }

    fn get_comment(&self, repo: &RepoRef, id: CommentId) -> Result<ApiComment, ForgeError> {
        let url = self.repo_url(repo, &format!("issues/comments/{id}"));
        self.send(|c| c.get(&url).header(ACCEPT, "application/vnd.github+json"))?
            .json()
            .map_err(|e| ForgeError::Other(e.to_string()))
    }
}

/// Maps a failed response onto the forge error taxonomy.
pub fn classify(
    status: StatusCode,
    headers: &HeaderMap,
    body: &str,
    now: DateTime<Utc>,
) -> ForgeError {
    let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok());
    let retry_after = header("retry-after")
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_secs)
        .or_else(|| {
            let reset = header("x-ratelimit-reset")?.trim().parse::<i64>().ok()?;
            Some(Duration::from_secs((reset - now.timestamp()).max(0) as u64))
        });
    let exhausted = header("x-ratelimit-remaining") == Some("0");
    let message = format!("{status}: {}", body.chars().take(200).collect::<String>());
    match status.as_u16() {
        429 => ForgeError::RateLimited {
            retry_after: retry_after.unwrap_or(Duration::from_secs(60)),
        },
        403 if exhausted || header("retry-after").is_some() => ForgeError::RateLimited {
            retry_after: retry_after.unwrap_or(Duration::from_secs(60)),
        },
        401 | 403 => ForgeError::PermissionDenied(message),
        404 | 410 => ForgeError::NotFound(message),
        500..=599 => ForgeError::Transient(message),
        _ => ForgeError::Other(message),
    }
}

impl ForgeActions for GitHubForge {
    fn list_pr_comments(
        &self,
        repo: &RepoRef,
        pr_number: u64,
    ) -> Result<Vec<CommentSnapshot>, ForgeError> {
        let mut out = Vec::new();
        for page in 1.. {
            let url = self.repo_url(
                repo,
                &format!("issues/{pr_number}/comments?per_page={PER_PAGE}&page={page}"),
            );
            let batch: Vec<ApiComment> = self
                .send(|c| c.get(&url).header(ACCEPT, "application/vnd.github+json"))?
                .json()
                .map_err(|e| ForgeError::Other(e.to_string()))?;
            let last = batch.len() < PER_PAGE;
            out.extend(batch.into_iter().map(ApiComment::into_snapshot));
            if last || out.len() >= MAX_LISTED_COMMENTS {
                break;
            }
        }
        out.truncate(MAX_LISTED_COMMENTS);
        Ok(out)
    }

    fn create_comment(
        &self,
        repo: &RepoRef,
        pr_number: u64,
        body: &str,
    ) -> Result<CommentId, ForgeError> {
        let url = self.repo_url(repo, &format!("issues/{pr_number}/comments"));
        let created: ApiComment = self
            .json_request(Method::POST, &url, json!({ "body": body }))?
            .json()
            .map_err(|e| ForgeError::Other(e.to_string()))?;
        Ok(created.id)
    }

    fn update_comment(
        &self,
        repo: &RepoRef,
        comment_id: CommentId,
        body: &str,
    ) -> Result<(), ForgeError> {
        let url = self.repo_url(repo, &format!("issues/comments/{comment_id}"));
        self.json_request(Method::PATCH, &url, json!({ "body": body }))?;
        Ok(())
    }

    fn minimize_comment(&self, repo: &RepoRef, comment_id: CommentId) -> Result<(), ForgeError> {
        let node_id = self.get_comment(repo, comment_id)?.node_id;
        if node_id.is_empty() {
            return Err(ForgeError::Other(format!(
                "comment {comment_id} has no node id"
            )));
        }
        let query = json!({
            "query": "mutation($id: ID!) { minimizeComment(input: {subjectId: $id, classifier: OUTDATED}) { minimizedComment { isMinimized } } }",
            "variables": { "id": node_id },
        });
        let reply: serde_json::Value = self
            .json_request(Method::POST, &self.graphql_url(), query)?
            .json()
            .map_err(|e| ForgeError::Other(e.to_string()))?;
        match reply.get("errors") {
            Some(errors) => Err(ForgeError::Other(format!("minimizeComment: {errors}"))),
            None => Ok(()),
        }
    }

    fn delete_comment(&self, repo: &RepoRef, comment_id: CommentId) -> Result<(), ForgeError> {
        let url = self.repo_url(repo, &format!("issues/comments/{comment_id}"));
        self.send(|c| c.delete(&url))?;
        Ok(())
    }

    fn read_repo_file(&self, repo: &RepoRef, path: &str) -> Result<Option<Vec<u8>>, ForgeError> {
        let url = self.repo_url(repo, &format!("contents/{path}"));
        match self.send(|c| {
            c.get(&url)
                .header(ACCEPT, "application/vnd.github.raw+json")
        }) {
            Ok(response) => response
                .bytes()
                .map(|b| Some(b.to_vec()))
                .map_err(|e| ForgeError::Transient(e.to_string())),
            Err(ForgeError::NotFound(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
