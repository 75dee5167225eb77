//! The GitHub adapter against a local stand-in for the REST and GraphQL API.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use funnelbot_core::forge::RetryPolicy;
use funnelbot_core::{AuthorKind, ForgeActions, ForgeError, RepoRef};
use funnelbot_server::GitHubForge;

#[derive(Default)]
struct Api {
    comments: Vec<Value>,
    minimized: Vec<String>,
    flaky_lists: u32,
    auth: Vec<String>,
}

type Shared = Arc<Mutex<Api>>;

fn comment(id: u64, login: &str, kind: &str, body: &str) -> Value {
    json!({
        "id": id, "node_id": format!("IC_{id}"), "user": {"login": login, "type": kind},
        "body": body, "created_at": "2021-06-01T12:00:00Z", "updated_at": "2021-06-01T12:00:00Z"
    })
}

async fn list(
    State(api): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> impl IntoResponse {
    let mut api = api.lock().unwrap();
    if let Some(v) = headers.get("authorization") {
        api.auth.push(v.to_str().unwrap().to_string());
    }
    if api.flaky_lists > 0 {
        api.flaky_lists -= 1;
        return (
            StatusCode::BAD_GATEWAY,
            Json(json!({"message": "try again"})),
        );
    }
    let per_page: usize = q["per_page"].parse().unwrap();
    let page: usize = q["page"].parse().unwrap();
    let items: Vec<Value> = api
        .comments
        .iter()
        .skip((page - 1) * per_page)
        .take(per_page)
        .cloned()
        .collect();
    (StatusCode::OK, Json(Value::Array(items)))
}

async fn create(State(api): State<Shared>, Json(body): Json<Value>) -> impl IntoResponse {
    let mut api = api.lock().unwrap();
    let id = 9000 + api.comments.len() as u64;
    let c = comment(id, "funnelbot[bot]", "Bot", body["body"].as_str().unwrap());
    api.comments.push(c.clone());
    (StatusCode::CREATED, Json(c))
}

async fn single(
    State(api): State<Shared>,
    Path((_, _, id)): Path<(String, String, u64)>,
) -> impl IntoResponse {
    let api = api.lock().unwrap();
    match api.comments.iter().find(|c| c["id"] == id) {
        Some(c) => (StatusCode::OK, Json(c.clone())),
        None => (StatusCode::NOT_FOUND, Json(json!({"message": "Not Found"}))),
    }
}

async fn edit(
    State(api): State<Shared>,
    Path((_, _, id)): Path<(String, String, u64)>,
    Json(body): Json<Value>,
) -> impl IntoResponse {
    let mut api = api.lock().unwrap();
    match api.comments.iter_mut().find(|c| c["id"] == id) {
        Some(c) => {
            c["body"] = body["body"].clone();
            c["updated_at"] = json!("2021-06-01T12:30:00Z");
            (StatusCode::OK, Json(c.clone()))
        }
        None => (StatusCode::NOT_FOUND, Json(json!({"message": "Not Found"}))),
    }
}

async fn remove(
    State(api): State<Shared>,
    Path((_, _, id)): Path<(String, String, u64)>,
) -> StatusCode {
    let mut api = api.lock().unwrap();
    let before = api.comments.len();
    api.comments.retain(|c| c["id"] != id);
    if api.comments.len() < before {
        StatusCode::NO_CONTENT
    } else {
        StatusCode::NOT_FOUND
    }
}

async fn graphql(State(api): State<Shared>, Json(body): Json<Value>) -> Json<Value> {
    let id = body["variables"]["id"].as_str().unwrap().to_string();
    api.lock().unwrap().minimized.push(id);
    Json(json!({"data": {"minimizeComment": {"minimizedComment": {"isMinimized": true}}}}))
}

async fn contents(
    Path((_, _, path)): Path<(String, String, String)>,
    headers: HeaderMap,
) -> impl IntoResponse {
    assert_eq!(headers["accept"], "application/vnd.github.raw+json");
    if path == ".github/funnelbot.yml" {
        (StatusCode::OK, "version: 1\n".to_string())
    } else {
        (
            StatusCode::NOT_FOUND,
            "{\"message\":\"Not Found\"}".to_string(),
        )
    }
}

async fn limited() -> impl IntoResponse {
    (
        StatusCode::TOO_MANY_REQUESTS,
        [("retry-after", "1")],
        "slow down",
    )
}

fn serve(api: Shared) -> String {
    let app = Router::new()
        .route("/repos/{o}/{n}/issues/796/comments", get(list).post(create))
        .route(
            "/repos/{o}/{n}/issues/comments/{id}",
            patch(edit).get(single).delete(remove),
        )
        .route("/repos/{o}/{n}/contents/{*path}", get(contents))
        .route("/repos/{o}/{n}/issues/797/comments", get(limited))
        .route("/graphql", post(graphql))
        .with_state(api);
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn setup(comments: usize) -> (Shared, GitHubForge, RepoRef) {
    let api: Shared = Arc::default();
    {
        let mut a = api.lock().unwrap();
        for i in 0..comments {
            let (login, kind) = if i % 2 == 0 {
                ("codecov[bot]", "Bot")
            } else {
                ("newcomer", "User")
            };
            a.comments
                .push(comment(i as u64 + 1, login, kind, &format!("comment {i}")));
        }
    }
    let url = serve(api.clone());
    let forge = GitHubForge::new(url, "test-token")
        .unwrap()
        .with_retry(RetryPolicy {
            backoff: vec![Duration::from_millis(1); 3],
        });
    (api, forge, RepoRef::new("ariakit", "ariakit"))
}

#[test]
fn lists_every_page_up_to_the_cap() {
    let (api, forge, repo) = setup(130);
    let listed = forge.list_pr_comments(&repo, 796).unwrap();
    assert_eq!(listed.len(), 130);
    assert_eq!(listed[0].author_kind, AuthorKind::Bot);
    assert_eq!(listed[1].author_kind, AuthorKind::Human);
    assert_eq!(listed[129].body, "comment 129");
    assert!(api
        .lock()
        .unwrap()
        .auth
        .iter()
        .all(|a| a == "Bearer test-token"));

    let (_, forge, repo) = setup(300);
    assert_eq!(forge.list_pr_comments(&repo, 796).unwrap().len(), 250);
}

#[test]
fn comment_lifecycle() {
    let (api, forge, repo) = setup(1);
    let id = forge
        .create_comment(&repo, 796, "<!-- funnelbot:v1 -->\nhello")
        .unwrap();
    forge
        .update_comment(&repo, id, "<!-- funnelbot:v1 -->\nupdated")
        .unwrap();
    let listed = forge.list_pr_comments(&repo, 796).unwrap();
    let managed = listed.iter().find(|c| c.comment_id == id).unwrap();
    assert!(managed.body.ends_with("updated"));
    assert!(managed.edited_at.is_some());

    forge.minimize_comment(&repo, 1).unwrap();
    assert_eq!(api.lock().unwrap().minimized, ["IC_1"]);
    forge.delete_comment(&repo, 1).unwrap();
    assert!(matches!(
        forge.delete_comment(&repo, 1),
        Err(ForgeError::NotFound(_))
    ));
    assert!(matches!(
        forge.update_comment(&repo, 1, "x"),
        Err(ForgeError::NotFound(_))
    ));
}

#[test]
fn repo_files() {
    let (_, forge, repo) = setup(0);
    assert_eq!(
        forge
            .read_repo_file(&repo, ".github/funnelbot.yml")
            .unwrap()
            .as_deref(),
        Some(&b"version: 1\n"[..])
    );
    assert_eq!(forge.read_repo_file(&repo, "missing.yml").unwrap(), None);
}

#[test]
fn retries_transient_failures() {
    let (api, forge, repo) = setup(2);
    api.lock().unwrap().flaky_lists = 2;
    assert_eq!(forge.list_pr_comments(&repo, 796).unwrap().len(), 2);

    api.lock().unwrap().flaky_lists = 10;
    assert!(matches!(
        forge.list_pr_comments(&repo, 796),
        Err(ForgeError::Transient(_))
    ));
    // one attempt plus three retries
    assert_eq!(api.lock().unwrap().flaky_lists, 6);
}

#[test]
fn rate_limit_surfaces_after_retries() {
    let (_, forge, repo) = setup(0);
    let forge = forge.with_retry(RetryPolicy::none());
    assert_eq!(
        forge.list_pr_comments(&repo, 797),
        Err(ForgeError::RateLimited {
            retry_after: Duration::from_secs(1)
        })
    );
}
