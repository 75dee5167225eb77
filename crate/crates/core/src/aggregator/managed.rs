use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AggregatedDocument, CommentId, CommentSnapshot, MARKER};

const STATE_PREFIX: &str = "<!-- funnelbot:state ";
const STATE_SUFFIX: &str = " -->";

/// True iff the first line of `body` is exactly [`MARKER`].
pub fn is_managed_body(body: &str) -> bool {
    body.lines().next() == Some(MARKER)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ManagedLookup {
    /// Earliest marker-bearing comment.
    pub managed: Option<CommentId>,
    /// Later marker-bearing comments, to be cleaned up.
    pub duplicates: Vec<CommentId>,
}

/// Locates the managed comment among a pull request's comments.
pub fn find_managed_comment(comments: &[CommentSnapshot]) -> ManagedLookup {
    let mut marked: Vec<&CommentSnapshot> = comments
        .iter()
        .filter(|c| is_managed_body(&c.body))
        .collect();
    marked.sort_by_key(|c| (c.created_at, c.comment_id));
    let mut ids = marked.into_iter().map(|c| c.comment_id);
    ManagedLookup {
        managed: ids.next(),
        duplicates: ids.collect(),
    }
}

/// Bookkeeping embedded in the managed comment (second line, hidden) so that
/// a restarted service can recover update counts the forge does not keep.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ManagedState {
    pub counts: BTreeMap<String, u32>,
    #[serde(default)]
    pub filtered: Vec<String>,
}

impl ManagedState {
    pub fn of(doc: &AggregatedDocument) -> Self {
        Self {
            counts: doc
                .groups
                .iter()
                .map(|g| (g.bot_login.clone(), g.update_count))
                .collect(),
            filtered: doc.filtered_bots.clone(),
        }
    }

    pub fn to_line(&self) -> String {
        let json = serde_json::to_string(self).expect("state serializes");
        // keep the HTML comment well-formed whatever the logins contain
        format!(
            "{STATE_PREFIX}{}{STATE_SUFFIX}",
            json.replace("--", "-\\u002d")
        )
    }

    /// Reads the state line from a managed comment body.
    pub fn parse(body: &str) -> Option<Self> {
        let mut lines = body.lines();
        if lines.next() != Some(MARKER) {
            return None;
        }
        let json = lines
            .next()?
            .strip_prefix(STATE_PREFIX)?
            .strip_suffix(STATE_SUFFIX)?;
        serde_json::from_str(json).ok()
    }
}
