//! Random pull-request timelines shared by the integration tests.
#![allow(dead_code)]

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;

use funnelbot_core::config::{BotPolicy, RepoConfig, Suppression};
use funnelbot_core::replay::{PullRequestInfo, TimelineFile};
use funnelbot_core::{AuthorKind, CommentSnapshot, EventKind, TimelineEvent};

pub const ALLOWED_BOTS: [&str; 5] = [
    "codesandbox[bot]",
    "compressed-size-action[bot]",
    "codecov[bot]",
    "request-info[bot]",
    "todo[bot]",
];
pub const DENIED_BOT: &str = "stale[bot]";
pub const HUMANS: [&str; 3] = ["newcomer", "maintainer", "reviewer"];

pub fn policy(suppression: Suppression) -> RepoConfig {
    RepoConfig {
        suppression,
        category_order: ["critical", "deploy", "coverage", "tasks"]
            .map(String::from)
            .to_vec(),
        bots: vec![
            BotPolicy::allow("codesandbox[bot]", "deploy"),
            BotPolicy::allow("compressed-size-action[bot]", "critical"),
            BotPolicy::allow("codecov[bot]", "coverage"),
            BotPolicy::allow("request-info[bot]", "tasks"),
            // todo[bot] falls into the default category
            BotPolicy::deny(DENIED_BOT),
        ],
        ..RepoConfig::default()
    }
}

fn start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 6, 1, 12, 0, 0).unwrap()
}

fn body(rng: &mut impl Rng, login: &str, n: usize) -> String {
    match rng.random_range(0..4) {
        0 => format!(
            "{login} report #{n}\n\n| metric | value |\n|---|---|\n| x | {} |",
            rng.random_range(0..1000)
        ),
        1 => {
            format!("<details><summary>inner {n}</summary>\n\nnested\n\n</details>\n\nfrom {login}")
        }
        2 => format!("Update {n} from {login}: **{}**", rng.random_range(0..100)),
        _ => format!("{n}"),
    }
}

/// A timeline of up to `max_events` events that opens the pull request and
/// then mixes bot and human comments and edits.
pub fn random_timeline(rng: &mut impl Rng, max_events: usize) -> TimelineFile {
    let len = rng.random_range(1..=max_events);
    let mut events = vec![TimelineEvent::pr_opened(1, "open")];
    let mut comments: Vec<CommentSnapshot> = Vec::new();
    let mut next_id = 1000;
    for i in 1..len {
        let seq = i as u64 + 1;
        let now = start() + Duration::minutes(i as i64);
        let delivery = format!("d-{seq}");
        if !comments.is_empty() && rng.random_bool(0.25) {
            let idx = rng.random_range(0..comments.len());
            let c = &mut comments[idx];
            c.body = body(rng, &c.author_login.clone(), i);
            c.edited_at = Some(now);
            events.push(TimelineEvent::comment(
                seq,
                delivery,
                EventKind::CommentEdited,
                c.clone(),
            ));
            continue;
        }
        let (login, kind) = match rng.random_range(0..10) {
            0..=5 => (ALLOWED_BOTS[rng.random_range(0..5)], AuthorKind::Bot),
            6 => (DENIED_BOT, AuthorKind::Bot),
            _ => (HUMANS[rng.random_range(0..3)], AuthorKind::Human),
        };
        next_id += 1;
        let c = CommentSnapshot {
            comment_id: next_id,
            author_login: login.to_string(),
            author_kind: kind,
            body: body(rng, login, i),
            created_at: now,
            edited_at: None,
            minimized: false,
        };
        comments.push(c.clone());
        events.push(TimelineEvent::comment(
            seq,
            delivery,
            EventKind::CommentCreated,
            c,
        ));
    }
    TimelineFile {
        schema: 1,
        pull_request: PullRequestInfo {
            number: 796,
            title: "Random timeline".into(),
            author: "newcomer".into(),
        },
        events,
    }
}
