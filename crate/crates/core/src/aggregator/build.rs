use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{
    aggregated_comment, validate_timeline, AggregateError, AggregatedDocument, BotGroup,
    TimelineEvent, DELIVERY_WINDOW,
};
use crate::config::{category_of, is_allowed, RepoConfig};

/// Aggregates a whole timeline. `events` must be sorted by strictly
/// increasing seq with unique delivery ids.
pub fn build_document(
    events: &[TimelineEvent],
    config: &RepoConfig,
) -> Result<AggregatedDocument, AggregateError> {
    validate_timeline(events)?;

    let relevant: Vec<_> = events
        .iter()
        .filter_map(|e| aggregated_comment(e, config).map(|c| (e, c)))
        .collect();

    let mut per_bot: BTreeMap<&str, Vec<&TimelineEvent>> = BTreeMap::new();
    let mut filtered = BTreeSet::new();
    for (event, comment) in &relevant {
        let login = comment.author_login.as_str();
        if is_allowed(login, config) {
            per_bot.entry(login).or_default().push(event);
        } else {
            filtered.insert(login.to_string());
        }
    }

    let groups: Vec<BotGroup> = per_bot
        .into_iter()
        .map(|(login, bot_events)| {
            let last = bot_events
                .iter()
                .max_by_key(|e| (e.occurred_at(), e.seq))
                .expect("group has at least one event");
            BotGroup {
                bot_login: login.to_string(),
                category: category_of(login, config).to_string(),
                latest_body: last.comment.as_ref().unwrap().body.clone(),
                update_count: bot_events.len() as u32,
                latest_at: last.occurred_at().unwrap(),
            }
        })
        .collect();

    let skip = relevant.len().saturating_sub(DELIVERY_WINDOW);
    let mut doc = AggregatedDocument {
        intro: String::new(),
        suppressed_bot_comment_count: groups.iter().map(|g| u64::from(g.update_count)).sum(),
        groups,
        filtered_bots: filtered.into_iter().collect(),
        last_applied_seq: relevant.last().map(|(e, _)| e.seq),
        recent_deliveries: relevant[skip..]
            .iter()
            .map(|(e, _)| e.delivery_id.clone())
            .collect::<VecDeque<_>>(),
    };
    doc.sort_groups(config);
    doc.refresh_intro(config);
    Ok(doc)
}
