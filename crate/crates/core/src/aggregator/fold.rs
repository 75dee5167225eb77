use super::{
    aggregated_comment, AggregateError, AggregatedDocument, BotGroup, TimelineEvent,
    DELIVERY_WINDOW,
};
use crate::config::{category_of, is_allowed, RepoConfig};

/// Folds one event into `doc`.
///
/// Events that never affect the document (pull request opened, human
/// comments, the managed comment itself) return it unchanged whatever their
/// seq. A delivery id already in the document's window is a no-op. Any other
/// event must carry a seq above the last one applied.
pub fn apply_event(
    doc: &AggregatedDocument,
    event: &TimelineEvent,
    config: &RepoConfig,
) -> Result<AggregatedDocument, AggregateError> {
    event.validate()?;
    let Some(comment) = aggregated_comment(event, config) else {
        return Ok(doc.clone());
    };
    if doc
        .recent_deliveries
        .iter()
        .any(|d| *d == event.delivery_id)
    {
        return Ok(doc.clone());
    }
    if let Some(last) = doc.last_applied_seq {
        if event.seq <= last {
            return Err(AggregateError::OutOfOrder {
                seq: event.seq,
                last,
            });
        }
    }

    let mut next = doc.clone();
    next.last_applied_seq = Some(event.seq);
    next.recent_deliveries.push_back(event.delivery_id.clone());
    while next.recent_deliveries.len() > DELIVERY_WINDOW {
        next.recent_deliveries.pop_front();
    }

    let login = &comment.author_login;
    if !is_allowed(login, config) {
        if let Err(pos) = next.filtered_bots.binary_search(login) {
            next.filtered_bots.insert(pos, login.clone());
        }
        return Ok(next);
    }

    let at = event
        .occurred_at()
        .expect("comment events carry a timestamp");
    let category = category_of(login, config).to_string();
    match next.groups.iter_mut().find(|g| g.bot_login == *login) {
        Some(group) => {
            group.update_count += 1;
            // a late delivery of an older message still counts but does not
            // replace a newer body
            if at >= group.latest_at {
                group.latest_body = comment.body.clone();
                group.latest_at = at;
            }
            group.category = category;
        }
        None => next.groups.push(BotGroup {
            bot_login: login.clone(),
            category,
            latest_body: comment.body.clone(),
            update_count: 1,
            latest_at: at,
        }),
    }
    next.suppressed_bot_comment_count += 1;
    next.sort_groups(config);
    next.refresh_intro(config);
    Ok(next)
}
