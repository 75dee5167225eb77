use super::{managed::ManagedState, plural, AggregatedDocument, BotGroup, MARKER};
use crate::config::DEFAULT_MAX_CHARS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderLimits {
    /// Upper bound on the output length in characters.
    pub max_chars: usize,
}

impl Default for RenderLimits {
    fn default() -> Self {
        Self {
            max_chars: DEFAULT_MAX_CHARS,
        }
    }
}

const SHORTENED_SUFFIX: &str = "\n\n*(message truncated)*";
/// A group is shortened rather than dropped only if this much of its body fits.
const MIN_SHORTENED_BODY: usize = 200;

/// Renders the managed comment body.
///
/// Layout: marker line, hidden state line, intro, optional filtered-bots
/// note, then one collapsed `<details>` block per group. When the result
/// would exceed `limits.max_chars`, groups are dropped from the end (the
/// last one that partly fits is shortened instead) and a notice is appended.
pub fn render_document(doc: &AggregatedDocument, limits: RenderLimits) -> String {
    let mut head = String::new();
    head.push_str(MARKER);
    head.push('\n');
    head.push_str(&ManagedState::of(doc).to_line());
    head.push('\n');
    head.push_str(&doc.intro);
    head.push('\n');
    if !doc.filtered_bots.is_empty() {
        let names: Vec<String> = doc
            .filtered_bots
            .iter()
            .map(|b| format!("`{}`", b.replace('`', "")))
            .collect();
        head.push_str(&format!(
            "\n> Not aggregated by repository policy: {}\n",
            names.join(", ")
        ));
    }

    let blocks: Vec<String> = doc
        .groups
        .iter()
        .map(|g| block(g, &g.latest_body))
        .collect();
    let full_len = char_len(&head) + blocks.iter().map(|b| char_len(b)).sum::<usize>();
    if full_len <= limits.max_chars {
        let mut out = head;
        blocks.iter().for_each(|b| out.push_str(b));
        return out;
    }

    let reserve = char_len(&notice(doc.groups.len()));
    let budget = limits
        .max_chars
        .saturating_sub(char_len(&head))
        .saturating_sub(reserve);
    let mut out = head;
    let mut used = 0;
    let mut shown = 0;
    for (group, rendered) in doc.groups.iter().zip(&blocks) {
        let len = char_len(rendered);
        if used + len <= budget {
            out.push_str(rendered);
            used += len;
            shown += 1;
            continue;
        }
        if let Some(short) = shortened_block(group, budget - used) {
            out.push_str(&short);
            shown += 1;
        }
        break;
    }
    out.push_str(&notice(doc.groups.len() - shown));

    if char_len(&out) > limits.max_chars {
        out = out.chars().take(limits.max_chars).collect();
    }
    out
}

fn block(group: &BotGroup, body: &str) -> String {
    format!(
        "\n<details>\n<summary>{} — {} ({})</summary>\n\n{}\n\n</details>\n",
        escape(&group.category),
        escape(&group.bot_login),
        plural(u64::from(group.update_count), "update"),
        body
    )
}

fn shortened_block(group: &BotGroup, room: usize) -> Option<String> {
    let skeleton = char_len(&block(group, SHORTENED_SUFFIX));
    let keep = room.checked_sub(skeleton)?;
    if keep < MIN_SHORTENED_BODY {
        return None;
    }
    let mut body: String = group.latest_body.chars().take(keep).collect();
    body.push_str(SHORTENED_SUFFIX);
    Some(block(group, &body))
}

fn notice(omitted: usize) -> String {
    if omitted == 0 {
        "\n_Output truncated to fit the comment size limit._\n".to_string()
    } else {
        format!(
            "\n_Output truncated to fit the comment size limit; {} not shown._\n",
            plural(omitted as u64, "group")
        )
    }
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn unescape(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
}

/// Top-level `<details>...</details>` blocks of `markdown`, nesting-aware.
pub fn collapsible_blocks(markdown: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut pos = 0;
    while let Some(off) = markdown[pos..].find('<') {
        let at = pos + off;
        let rest = &markdown[at..];
        if rest.starts_with("</details>") {
            if depth == 1 {
                blocks.push(&markdown[start..at + "</details>".len()]);
            }
            depth = depth.saturating_sub(1);
            pos = at + "</details>".len();
        } else if rest.starts_with("<details")
            && rest[8..].starts_with(|c: char| c == '>' || c.is_whitespace())
        {
            if depth == 0 {
                start = at;
            }
            depth += 1;
            pos = at + 8;
        } else {
            pos = at + 1;
        }
    }
    blocks
}

/// One group as read back from a rendered managed comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedGroup {
    pub category: String,
    pub bot_login: String,
    pub update_count: u32,
    pub body: String,
    /// The body was shortened to fit the size limit.
    pub shortened: bool,
}

/// Parses the group blocks of a rendered managed comment.
pub fn parse_group_blocks(markdown: &str) -> Vec<RenderedGroup> {
    collapsible_blocks(markdown)
        .into_iter()
        .filter_map(parse_block)
        .collect()
}

fn parse_block(block: &str) -> Option<RenderedGroup> {
    let rest = block.strip_prefix("<details>\n<summary>")?;
    let (summary, rest) = rest.split_once("</summary>\n\n")?;
    let body = rest.strip_suffix("\n\n</details>")?;
    let (label, count) = summary.rsplit_once(" (")?;
    let count: u32 = count
        .strip_suffix(" updates)")
        .or_else(|| count.strip_suffix(" update)"))?
        .parse()
        .ok()?;
    let (category, login) = label.rsplit_once(" — ")?;
    let (body, shortened) = match body.strip_suffix(SHORTENED_SUFFIX) {
        Some(b) => (b, true),
        None => (body, false),
    };
    Some(RenderedGroup {
        category: unescape(category),
        bot_login: unescape(login),
        update_count: count,
        body: body.to_string(),
        shortened,
    })
}
