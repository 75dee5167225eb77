//! The per-event mediation pipeline.
//!
//! [`Mediator::handle_envelope`] runs one webhook delivery through
//! verification, de-duplication, decoding, policy lookup and aggregation,
//! then upserts the managed comment and suppresses the bot's original.
//!
//! Work on one pull request is serialized through a FIFO lane; different
//! pull requests proceed in parallel. The aggregated document of each lane
//! is cached in memory, and rebuilt from the forge ([`reconstruct_document`]
//! plus the state line of the managed comment) whenever the cache is empty,
//! e.g. after a restart.

use std::collections::{BTreeSet, HashMap};
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use lru::LruCache;
use serde::Serialize;
use thiserror::Error;

use crate::aggregator::{
    apply_event, build_document, detect_bot, find_managed_comment, is_managed_body,
    parse_group_blocks, render_document, AggregateError, AggregatedDocument, BotGroup, CommentId,
    CommentSnapshot, EventKind, ManagedState, RenderLimits, TimelineEvent,
};
use crate::config::{
    category_of, is_allowed, parse_config, ConfigError, Mode, RepoConfig, Suppression, CONFIG_PATH,
};
use crate::forge::{
    decode_event, verify_signature, DecodeError, Decoded, ForgeActions, ForgeError,
    ForgeEventEnvelope, PrEvent, RepoRef,
};

pub const DEDUP_CAPACITY: usize = 10_000;
pub const CONFIG_TTL: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct MediatorSettings {
    pub secret: Vec<u8>,
    /// Login the mediator posts as; its own comments are never aggregated.
    pub app_login: String,
    pub config_path: String,
    pub config_ttl: Duration,
    pub dedup_capacity: usize,
}

impl MediatorSettings {
    pub fn new(secret: impl Into<Vec<u8>>) -> Self {
        Self {
            secret: secret.into(),
            app_login: crate::forge::DEFAULT_APP_LOGIN.to_string(),
            config_path: CONFIG_PATH.to_string(),
            config_ttl: CONFIG_TTL,
            dedup_capacity: DEDUP_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Not a pull-request event the mediator handles.
    Ignored,
    Human,
    OwnComment,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MediatorError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Signature verification failed.
    Rejected,
    SkippedDuplicate,
    Skipped(SkipReason),
    /// Processed; the managed comment already showed the result.
    Unchanged,
    Upserted(CommentId),
    Failed(MediatorError),
}

#[derive(Debug, Default)]
pub struct Metrics {
    events_in: AtomicU64,
    events_ignored: AtomicU64,
    comments_suppressed: AtomicU64,
    upserts: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MetricsSnapshot {
    pub events_in: u64,
    pub events_ignored: u64,
    pub comments_suppressed: u64,
    pub upserts: u64,
}

impl MetricsSnapshot {
    /// One `name value` pair per line.
    pub fn to_text(&self) -> String {
        format!(
            "events_in {}\nevents_ignored {}\ncomments_suppressed {}\nupserts {}\n",
            self.events_in, self.events_ignored, self.comments_suppressed, self.upserts
        )
    }
}

fn bump(counter: &AtomicU64) {
    counter.fetch_add(1, Ordering::Relaxed);
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LaneKey {
    pub repo: RepoRef,
    pub pr_number: u64,
}

#[derive(Debug, Clone)]
struct LaneCache {
    doc: AggregatedDocument,
    managed_id: Option<CommentId>,
    rendered: Option<String>,
    /// Newest version of each comment the document reflects.
    reflected: HashMap<CommentId, (DateTime<Utc>, String)>,
}

impl LaneCache {
    /// Whether `event` carries a comment version the document already has
    /// or has superseded, e.g. a delivery delayed past a rebuild.
    fn reflects(&self, event: &TimelineEvent) -> bool {
        let (Some(c), Some(at)) = (&event.comment, event.occurred_at()) else {
            return false;
        };
        match self.reflected.get(&c.comment_id) {
            Some((seen_at, body)) => at < *seen_at || (at == *seen_at && *body == c.body),
            None => false,
        }
    }

    fn record(&mut self, event: &TimelineEvent) {
        if let (Some(c), Some(at)) = (&event.comment, event.occurred_at()) {
            let entry = self
                .reflected
                .entry(c.comment_id)
                .or_insert_with(|| (at, c.body.clone()));
            if at >= entry.0 {
                *entry = (at, c.body.clone());
            }
        }
    }
}

#[derive(Default)]
struct Turns {
    next_ticket: u64,
    serving: u64,
}

/// FIFO mutual exclusion for one pull request.
#[derive(Default)]
struct Lane {
    turns: Mutex<Turns>,
    ready: Condvar,
    cache: Mutex<Option<LaneCache>>,
}

struct LaneTurn<'a>(&'a Lane);

impl Lane {
    fn enter(&self) -> LaneTurn<'_> {
        let mut turns = lock(&self.turns);
        let ticket = turns.next_ticket;
        turns.next_ticket += 1;
        while turns.serving != ticket {
            turns = self.ready.wait(turns).unwrap_or_else(|e| e.into_inner());
        }
        LaneTurn(self)
    }
}

impl Drop for LaneTurn<'_> {
    fn drop(&mut self) {
        lock(&self.0.turns).serving += 1;
        self.0.ready.notify_all();
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

struct CachedConfig {
    fetched: Instant,
    result: Result<RepoConfig, ConfigError>,
}

/// Everything the mediator keeps in memory. Dropping it loses nothing that
/// cannot be rebuilt from the forge.
pub struct ServiceState {
    lanes: Mutex<HashMap<LaneKey, Arc<Lane>>>,
    dedup: Mutex<LruCache<String, ()>>,
    configs: Mutex<HashMap<RepoRef, CachedConfig>>,
    metrics: Metrics,
}

impl ServiceState {
    pub fn new(dedup_capacity: usize) -> Self {
        let cap = NonZeroUsize::new(dedup_capacity).unwrap_or(NonZeroUsize::MIN);
        Self {
            lanes: Mutex::new(HashMap::new()),
            dedup: Mutex::new(LruCache::new(cap)),
            configs: Mutex::new(HashMap::new()),
            metrics: Metrics::default(),
        }
    }

    /// Records a delivery id; false if it was already present.
    fn remember_delivery(&self, id: &str) -> bool {
        let mut dedup = lock(&self.dedup);
        if dedup.get(id).is_some() {
            return false;
        }
        dedup.put(id.to_string(), ());
        true
    }

    fn forget_delivery(&self, id: &str) {
        lock(&self.dedup).pop(id);
    }

    fn lane(&self, key: LaneKey) -> Arc<Lane> {
        lock(&self.lanes).entry(key).or_default().clone()
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        let m = &self.metrics;
        MetricsSnapshot {
            events_in: m.events_in.load(Ordering::Relaxed),
            events_ignored: m.events_ignored.load(Ordering::Relaxed),
            comments_suppressed: m.comments_suppressed.load(Ordering::Relaxed),
            upserts: m.upserts.load(Ordering::Relaxed),
        }
    }
}

pub struct Mediator {
    settings: MediatorSettings,
    forge: Arc<dyn ForgeActions>,
    state: ServiceState,
}

impl Mediator {
    pub fn new(settings: MediatorSettings, forge: Arc<dyn ForgeActions>) -> Self {
        let state = ServiceState::new(settings.dedup_capacity);
        Self {
            settings,
            forge,
            state,
        }
    }

    pub fn settings(&self) -> &MediatorSettings {
        &self.settings
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        self.state.metrics()
    }

    /// Lane an envelope will be processed in, if it decodes to a
    /// pull-request event.
    pub fn lane_key(envelope: &ForgeEventEnvelope) -> Option<LaneKey> {
        match decode_event(envelope) {
            Ok(Decoded::Event(pr)) => Some(LaneKey {
                repo: pr.repo,
                pr_number: pr.pr_number,
            }),
            _ => None,
        }
    }

    pub fn handle_envelope(&self, envelope: &ForgeEventEnvelope) -> Outcome {
        if !verify_signature(&self.settings.secret, envelope) {
            return Outcome::Rejected;
        }
        let metrics = &self.state.metrics;
        bump(&metrics.events_in);
        if !self.state.remember_delivery(&envelope.delivery_id) {
            bump(&metrics.events_ignored);
            return Outcome::SkippedDuplicate;
        }

        let outcome = match self.process(envelope) {
            Ok(o) => o,
            Err(e) => Outcome::Failed(e),
        };
        match &outcome {
            Outcome::Skipped(_) => bump(&metrics.events_ignored),
            // let the forge's redelivery retry it
            Outcome::Failed(e) => {
                tracing::warn!(delivery = %envelope.delivery_id, error = %e, "event failed");
                self.state.forget_delivery(&envelope.delivery_id);
            }
            _ => {}
        }
        outcome
    }

    fn process(&self, envelope: &ForgeEventEnvelope) -> Result<Outcome, MediatorError> {
        let pr = match decode_event(envelope)? {
            Decoded::Event(pr) => pr,
            Decoded::Ignored => return Ok(Outcome::Skipped(SkipReason::Ignored)),
        };
        if let Some(c) = &pr.event.comment {
            if c.author_login
                .eq_ignore_ascii_case(&self.settings.app_login)
                || is_managed_body(&c.body)
            {
                return Ok(Outcome::Skipped(SkipReason::OwnComment));
            }
        }

        let lane = self.state.lane(LaneKey {
            repo: pr.repo.clone(),
            pr_number: pr.pr_number,
        });
        let _turn = lane.enter();

        let config = self.load_config(&pr.repo)?;
        if let Some(c) = &pr.event.comment {
            let policy = config.as_ref().ok().cloned().unwrap_or_default();
            if !detect_bot(&c.author_login, c.author_kind, &policy) {
                return Ok(Outcome::Skipped(SkipReason::Human));
            }
        }
        // never suppress anything without a valid policy
        let config = config?;
        if config.mode == Mode::Passthrough {
            return Ok(Outcome::Skipped(SkipReason::Passthrough));
        }

        let mut slot = lock(&lane.cache);
        let (base, first) = match slot.as_ref() {
            Some(cache) => (cache.clone(), FirstContact::default()),
            None => self.first_contact(&pr, &config)?,
        };

        let mut doc = base.doc.clone();
        if pr.event.kind.is_comment() && !base.reflects(&pr.event) {
            let mut event = pr.event.clone();
            event.seq = doc.last_applied_seq.map_or(1, |s| s + 1);
            doc = apply_event(&doc, &event, &config)?;
        }
        let rendered = render_document(
            &doc,
            RenderLimits {
                max_chars: config.max_chars,
            },
        );

        let mut upserted = None;
        let managed_id = match base.managed_id {
            Some(id) if base.rendered.as_deref() == Some(rendered.as_str()) => id,
            Some(id) => {
                let id = match self.forge.update_comment(&pr.repo, id, &rendered) {
                    Ok(()) => id,
                    Err(ForgeError::NotFound(_)) => {
                        self.forge
                            .create_comment(&pr.repo, pr.pr_number, &rendered)?
                    }
                    Err(e) => return Err(e.into()),
                };
                upserted = Some(id);
                id
            }
            None => {
                let id = self
                    .forge
                    .create_comment(&pr.repo, pr.pr_number, &rendered)?;
                upserted = Some(id);
                id
            }
        };
        if upserted.is_some() {
            bump(&self.state.metrics.upserts);
        }
        let mut cache = LaneCache {
            doc,
            managed_id: Some(managed_id),
            rendered: Some(rendered),
            reflected: base.reflected,
        };
        cache.record(&pr.event);
        *slot = Some(cache);
        drop(slot);

        // originals are hidden only after their content is in the managed comment
        let mut targets = first.catch_up;
        if let (EventKind::CommentCreated, Some(c)) = (pr.event.kind, &pr.event.comment) {
            if is_allowed(&c.author_login, &config) {
                targets.push(c.comment_id);
            }
        }
        let mut failure = None;
        for id in targets {
            let result = match config.suppression {
                Suppression::Minimize => self.forge.minimize_comment(&pr.repo, id),
                Suppression::Delete => self.forge.delete_comment(&pr.repo, id),
                Suppression::None => continue,
            };
            match result {
                Ok(()) => bump(&self.state.metrics.comments_suppressed),
                // already gone
                Err(ForgeError::NotFound(_)) => {}
                Err(e) => failure = Some(e),
            }
        }
        for id in first.duplicates {
            if let Err(e) = self.forge.minimize_comment(&pr.repo, id) {
                failure = Some(e);
            }
        }
        if let Some(e) = failure {
            return Err(e.into());
        }

        Ok(match upserted {
            Some(id) => Outcome::Upserted(id),
            None => Outcome::Unchanged,
        })
    }

    /// Rebuilds the lane cache from the forge.
    fn first_contact(
        &self,
        pr: &PrEvent,
        config: &RepoConfig,
    ) -> Result<(LaneCache, FirstContact), MediatorError> {
        let comments = self.forge.list_pr_comments(&pr.repo, pr.pr_number)?;
        let lookup = find_managed_comment(&comments);
        let managed = lookup
            .managed
            .and_then(|id| comments.iter().find(|c| c.comment_id == id));

        // The triggering event is folded separately, so strip its effect.
        let current = pr.event.comment.as_ref().map(|c| c.comment_id);
        let others: Vec<CommentSnapshot> = comments
            .iter()
            .filter(|c| !is_managed_body(&c.body))
            .filter_map(|c| {
                if Some(c.comment_id) != current {
                    return Some(c.clone());
                }
                match pr.event.kind {
                    EventKind::CommentEdited => Some(CommentSnapshot {
                        edited_at: None,
                        ..c.clone()
                    }),
                    _ => None,
                }
            })
            .collect();

        let mut doc = reconstruct_document(&others, config);
        if let Some(m) = managed {
            doc = merge_managed_state(doc, &m.body, m.last_changed(), config);
        }

        let catch_up = others
            .iter()
            .filter(|c| {
                Some(c.comment_id) != current
                    && !c.minimized
                    && !c
                        .author_login
                        .eq_ignore_ascii_case(&self.settings.app_login)
                    && detect_bot(&c.author_login, c.author_kind, config)
                    && is_allowed(&c.author_login, config)
            })
            .map(|c| c.comment_id)
            .collect();
        let duplicates = lookup
            .duplicates
            .iter()
            .copied()
            .filter(|id| comments.iter().any(|c| c.comment_id == *id && !c.minimized))
            .collect();

        Ok((
            LaneCache {
                doc,
                managed_id: managed.map(|m| m.comment_id),
                rendered: managed.map(|m| m.body.clone()),
                reflected: others
                    .iter()
                    .map(|c| (c.comment_id, (c.last_changed(), c.body.clone())))
                    .collect(),
            },
            FirstContact {
                catch_up,
                duplicates,
            },
        ))
    }

    fn load_config(&self, repo: &RepoRef) -> Result<Result<RepoConfig, ConfigError>, ForgeError> {
        if let Some(cached) = lock(&self.state.configs).get(repo) {
            if cached.fetched.elapsed() < self.settings.config_ttl {
                return Ok(cached.result.clone());
            }
        }
        let result = match self
            .forge
            .read_repo_file(repo, &self.settings.config_path)?
        {
            None => Ok(RepoConfig::default()),
            Some(bytes) => match String::from_utf8(bytes) {
                Ok(text) => parse_config(&text),
                Err(_) => Err(ConfigError::Parse {
                    line: None,
                    message: "config file is not valid UTF-8".into(),
                }),
            },
        };
        lock(&self.state.configs).insert(
            repo.clone(),
            CachedConfig {
                fetched: Instant::now(),
                result: result.clone(),
            },
        );
        Ok(result)
    }
}

#[derive(Default)]
struct FirstContact {
    catch_up: Vec<CommentId>,
    duplicates: Vec<CommentId>,
}

/// Rebuilds a document from a pull request's comments.
///
/// Each comment contributes a creation event at `created_at` and, if edited,
/// an edit event at `edited_at`; events are ordered by time, then by list
/// position. Marker-bearing comments are skipped. Minimized comments count
/// like any other: the originals remain the source of truth.
pub fn reconstruct_document(
    comments: &[CommentSnapshot],
    config: &RepoConfig,
) -> AggregatedDocument {
    let mut seen = BTreeSet::new();
    let mut points: Vec<(DateTime<Utc>, usize, u8, EventKind, &CommentSnapshot)> = Vec::new();
    for (idx, c) in comments.iter().enumerate() {
        if is_managed_body(&c.body) || !seen.insert(c.comment_id) {
            continue;
        }
        points.push((c.created_at, idx, 0, EventKind::CommentCreated, c));
        if let Some(edited) = c.edited_at {
            points.push((
                edited.max(c.created_at),
                idx,
                1,
                EventKind::CommentEdited,
                c,
            ));
        }
    }
    points.sort_by_key(|(at, idx, order, _, _)| (*at, *idx, *order));

    let events: Vec<TimelineEvent> = points
        .into_iter()
        .zip(1u64..)
        .map(|((_, _, _, kind, c), seq)| {
            let tag = if kind == EventKind::CommentEdited {
                "edited"
            } else {
                "created"
            };
            TimelineEvent::comment(
                seq,
                format!("reconstructed:{}:{tag}", c.comment_id),
                kind,
                c.clone(),
            )
        })
        .collect();
    build_document(&events, config).expect("synthetic timeline is sorted and unique")
}

/// Folds the bookkeeping of an existing managed comment into a
/// reconstructed document: update counts the forge cannot show, filtered
/// bots, and groups whose originals were deleted.
pub fn merge_managed_state(
    mut doc: AggregatedDocument,
    managed_body: &str,
    managed_at: DateTime<Utc>,
    config: &RepoConfig,
) -> AggregatedDocument {
    let Some(state) = ManagedState::parse(managed_body) else {
        return doc;
    };
    let rendered = parse_group_blocks(managed_body);
    for (login, count) in &state.counts {
        if !is_allowed(login, config) {
            continue;
        }
        if let Some(group) = doc.groups.iter_mut().find(|g| g.bot_login == *login) {
            group.update_count = group.update_count.max(*count);
        } else if let Some(r) = rendered.iter().find(|r| r.bot_login == *login) {
            doc.groups.push(BotGroup {
                bot_login: login.clone(),
                category: category_of(login, config).to_string(),
                latest_body: r.body.clone(),
                update_count: *count,
                latest_at: managed_at,
            });
        }
    }
    for login in state.filtered {
        if !is_allowed(&login, config) {
            if let Err(pos) = doc.filtered_bots.binary_search(&login) {
                doc.filtered_bots.insert(pos, login);
            }
        }
    }
    doc.suppressed_bot_comment_count = doc.groups.iter().map(|g| u64::from(g.update_count)).sum();
    doc.sort_groups(config);
    doc.refresh_intro(config);
    doc
}
