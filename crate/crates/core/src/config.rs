//! Repository mediation policy.
//!
//! The policy lives in the repository at [`CONFIG_PATH`] and is a small YAML
//! document:
//!
//! ```yaml
//! version: 1
//! mode: aggregate          # aggregate | passthrough
//! suppression: minimize    # minimize | delete | none
//! category_order: [critical, deploy, coverage, tasks]
//! default_category: other
//! max_chars: 65000
//! bots:
//!   - login: codecov[bot]
//!     category: coverage
//!   - login: spam[bot]
//!     allowed: false
//! ```
//!
//! A missing or empty document yields [`RepoConfig::default`]. Unknown keys
//! are reported as warnings; every semantic violation is collected into a
//! single [`ConfigError::Invalid`].

use serde::Serialize;
use serde_yaml::{Mapping, Value};
use thiserror::Error;

/// Location of the policy file inside a repository.
pub const CONFIG_PATH: &str = ".github/funnelbot.yml";

pub const SUPPORTED_VERSION: u32 = 1;
pub const DEFAULT_CATEGORY: &str = "other";
pub const DEFAULT_MAX_CHARS: usize = 65_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Aggregate,
    Passthrough,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Aggregate => "aggregate",
            Mode::Passthrough => "passthrough",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "aggregate" => Some(Mode::Aggregate),
            "passthrough" => Some(Mode::Passthrough),
            _ => None,
        }
    }
}

/// What happens to an allowed bot's original comment once it is mirrored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suppression {
    Minimize,
    Delete,
    None,
}

impl Suppression {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "minimize" => Some(Suppression::Minimize),
            "delete" => Some(Suppression::Delete),
            "none" => Some(Suppression::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BotPolicy {
    pub login: String,
    pub allowed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl BotPolicy {
    pub fn allow(login: impl Into<String>, category: impl Into<String>) -> Self {
        Self {
            login: login.into(),
            allowed: true,
            category: Some(category.into()),
        }
    }

    pub fn deny(login: impl Into<String>) -> Self {
        Self {
            login: login.into(),
            allowed: false,
            category: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepoConfig {
    pub version: u32,
    pub mode: Mode,
    pub suppression: Suppression,
    pub category_order: Vec<String>,
    pub default_category: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intro_template: Option<String>,
    pub max_chars: usize,
    pub bots: Vec<BotPolicy>,
}

impl Default for RepoConfig {
    fn default() -> Self {
        Self {
            version: SUPPORTED_VERSION,
            mode: Mode::Aggregate,
            suppression: Suppression::Minimize,
            category_order: Vec::new(),
            default_category: DEFAULT_CATEGORY.to_string(),
            intro_template: None,
            max_chars: DEFAULT_MAX_CHARS,
            bots: Vec::new(),
        }
    }
}

impl RepoConfig {
    /// Policy entry for `login`. Forge logins are case-insensitive.
    pub fn policy(&self, login: &str) -> Option<&BotPolicy> {
        self.bots
            .iter()
            .find(|p| p.login.eq_ignore_ascii_case(login))
    }

    /// Rank of a category label in the rendered comment. Listed categories
    /// rank by position, unlisted ones after them, and the default category
    /// last unless it is listed explicitly.
    pub fn category_rank(&self, category: &str) -> usize {
        if let Some(pos) = self.category_order.iter().position(|c| c == category) {
            return pos;
        }
        if category == self.default_category {
            self.category_order.len() + 1
        } else {
            self.category_order.len()
        }
    }

    /// Canonical YAML form; [`parse_config`] maps it back to an equal value.
    pub fn to_canonical_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("RepoConfig serializes to YAML")
    }
}

/// False iff a policy explicitly denies `login`. Unlisted bots are allowed.
pub fn is_allowed(login: &str, config: &RepoConfig) -> bool {
    config.policy(login).map_or(true, |p| p.allowed)
}

pub fn category_of<'a>(login: &str, config: &'a RepoConfig) -> &'a str {
    config
        .policy(login)
        .and_then(|p| p.category.as_deref())
        .unwrap_or(&config.default_category)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedConfig {
    pub config: RepoConfig,
    pub warnings: Vec<String>,
}

/// Parses a policy document, logging unknown-key warnings.
pub fn parse_config(text: &str) -> Result<RepoConfig, ConfigError> {
    let parsed = parse_config_with_warnings(text)?;
    for warning in &parsed.warnings {
        tracing::warn!("{warning}");
    }
    Ok(parsed.config)
}

pub fn parse_config_with_warnings(text: &str) -> Result<ParsedConfig, ConfigError> {
    let value: Value = serde_yaml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.location().map(|l| l.line()),
        message: e.to_string(),
    })?;

    let mut builder = Builder::default();
    let config = match value {
        Value::Null => RepoConfig::default(),
        Value::Mapping(map) => builder.root(&map),
        other => {
            return Err(ConfigError::Invalid(vec![format!(
                "top level must be a mapping, found {}",
                kind_name(&other)
            )]))
        }
    };

    if builder.errors.is_empty() {
        Ok(ParsedConfig {
            config,
            warnings: builder.warnings,
        })
    } else {
        Err(ConfigError::Invalid(builder.errors))
    }
}

const ROOT_KEYS: &[&str] = &[
    "version",
    "mode",
    "suppression",
    "bots",
    "category_order",
    "default_category",
    "intro_template",
    "max_chars",
];
const BOT_KEYS: &[&str] = &["login", "allowed", "category"];

#[derive(Default)]
struct Builder {
    errors: Vec<String>,
    warnings: Vec<String>,
}

impl Builder {
    fn root(&mut self, map: &Mapping) -> RepoConfig {
        let mut config = RepoConfig::default();

        for key in map.keys() {
            match key.as_str() {
                Some(k) if ROOT_KEYS.contains(&k) => {}
                Some(k) => self.warnings.push(format!("unknown key `{k}` ignored")),
                None => self.errors.push("mapping keys must be strings".to_string()),
            }
        }

        if let Some(v) = map.get("version") {
            match v.as_u64() {
                Some(n) if n == u64::from(SUPPORTED_VERSION) => {}
                Some(n) => self.errors.push(format!("unsupported version {n}")),
                None => self.errors.push(format!(
                    "version must be an integer, found {}",
                    kind_name(v)
                )),
            }
        }

        if let Some(v) = map.get("mode") {
            match v.as_str().and_then(Mode::parse) {
                Some(mode) => config.mode = mode,
                None => self.errors.push(format!(
                    "mode must be one of aggregate, passthrough; found {}",
                    display_value(v)
                )),
            }
        }

        if let Some(v) = map.get("suppression") {
            match v.as_str().and_then(Suppression::parse) {
                Some(s) => config.suppression = s,
                None => self.errors.push(format!(
                    "suppression must be one of minimize, delete, none; found {}",
                    display_value(v)
                )),
            }
        }

        if let Some(v) = map.get("category_order") {
            config.category_order = self.string_list("category_order", v);
            let mut seen = std::collections::HashSet::new();
            for label in &config.category_order {
                if !seen.insert(label.as_str()) {
                    self.errors
                        .push(format!("category_order lists `{label}` more than once"));
                }
            }
        }

        if let Some(v) = map.get("default_category") {
            match v.as_str() {
                Some(s) if !s.trim().is_empty() => config.default_category = s.to_string(),
                _ => self
                    .errors
                    .push("default_category must be a non-empty string".to_string()),
            }
        }

        if let Some(v) = map.get("intro_template") {
            match v {
                Value::Null => {}
                Value::String(s) => config.intro_template = Some(s.clone()),
                other => self.errors.push(format!(
                    "intro_template must be a string, found {}",
                    kind_name(other)
                )),
            }
        }

        if let Some(v) = map.get("max_chars") {
            match v.as_u64() {
                Some(n) if n > 0 => config.max_chars = n as usize,
                _ => self.errors.push(format!(
                    "max_chars must be a positive integer, found {}",
                    display_value(v)
                )),
            }
        }

        if let Some(v) = map.get("bots") {
            match v {
                Value::Null => {}
                Value::Sequence(items) => {
                    for (idx, item) in items.iter().enumerate() {
                        if let Some(policy) = self.bot(idx, item) {
                            if config.policy(&policy.login).is_some() {
                                self.errors
                                    .push(format!("duplicate bot policy for `{}`", policy.login));
                            } else {
                                config.bots.push(policy);
                            }
                        }
                    }
                }
                other => self
                    .errors
                    .push(format!("bots must be a list, found {}", kind_name(other))),
            }
        }

        config
    }

    fn bot(&mut self, idx: usize, item: &Value) -> Option<BotPolicy> {
        let Value::Mapping(map) = item else {
            self.errors.push(format!(
                "bots[{idx}] must be a mapping, found {}",
                kind_name(item)
            ));
            return None;
        };
        for key in map.keys() {
            match key.as_str() {
                Some(k) if BOT_KEYS.contains(&k) => {}
                Some(k) => self
                    .warnings
                    .push(format!("unknown key `{k}` in bots[{idx}] ignored")),
                None => self
                    .errors
                    .push(format!("bots[{idx}] keys must be strings")),
            }
        }

        let login = match map.get("login").and_then(Value::as_str) {
            Some(l) if !l.trim().is_empty() => Some(l.to_string()),
            _ => {
                self.errors
                    .push(format!("bots[{idx}].login must be a non-empty string"));
                None
            }
        };
        let allowed = match map.get("allowed") {
            None | Some(Value::Null) => true,
            Some(Value::Bool(b)) => *b,
            Some(other) => {
                self.errors.push(format!(
                    "bots[{idx}].allowed must be a boolean, found {}",
                    display_value(other)
                ));
                true
            }
        };
        let category = match map.get("category") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
            Some(other) => {
                self.errors.push(format!(
                    "bots[{idx}].category must be a non-empty string, found {}",
                    display_value(other)
                ));
                None
            }
        };

        Some(BotPolicy {
            login: login?,
            allowed,
            category,
        })
    }

    fn string_list(&mut self, key: &str, value: &Value) -> Vec<String> {
        match value {
            Value::Null => Vec::new(),
            Value::Sequence(items) => items
                .iter()
                .enumerate()
                .filter_map(|(i, item)| match item.as_str() {
                    Some(s) => Some(s.to_string()),
                    None => {
                        self.errors.push(format!(
                            "{key}[{i}] must be a string, found {}",
                            kind_name(item)
                        ));
                        None
                    }
                })
                .collect(),
            other => {
                self.errors
                    .push(format!("{key} must be a list, found {}", kind_name(other)));
                Vec::new()
            }
        }
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Sequence(_) => "list",
        Value::Mapping(_) => "mapping",
        Value::Tagged(_) => "tagged value",
    }
}

fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => format!("`{s}`"),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => kind_name(other).to_string(),
    }
}
