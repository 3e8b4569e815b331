//! Feed monitoring with persisted update detection.
//!
//! Understands RSS 2.0, RSS 1.0 (RDF) and Atom. Every run records the ids of
//! all parsed entries in a JSON state file, so the next run over an
//! unchanged feed reports no new entries.

use std::collections::BTreeSet;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{SecondsFormat, Utc};
use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data_analysis::parse_date;
use super::http::{normalize_whitespace, url_input, Fetcher, DEFAULT_TIMEOUT};
use super::params::ParamReader;
use crate::backend::Backend;
use crate::registry::{FnFactory, SkillFactory};
use crate::skill::{Params, SkillBehavior, SkillDef, SkillError};
use crate::value::{Context, Value};

pub const NAME: &str = "rss_monitor";
const DESCRIPTION: &str = "Monitors an RSS or Atom feed and reports entries not seen before";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedEntry {
    pub id: String,
    pub title: String,
    pub summary: String,
    pub link: String,
    /// RFC 3339 UTC when the feed date parses, the raw text otherwise.
    pub published: Option<String>,
}

impl FeedEntry {
    pub fn to_value(&self) -> Value {
        let mut m = std::collections::BTreeMap::new();
        m.insert("id".to_string(), Value::from(self.id.as_str()));
        m.insert("title".to_string(), Value::from(self.title.as_str()));
        m.insert("summary".to_string(), Value::from(self.summary.as_str()));
        m.insert("link".to_string(), Value::from(self.link.as_str()));
        m.insert(
            "published".to_string(),
            self.published.clone().map(Value::Text).unwrap_or(Value::Null),
        );
        Value::Map(m)
    }

    fn matches_any(&self, keywords: &[String]) -> bool {
        let title = self.title.to_lowercase();
        let summary = self.summary.to_lowercase();
        keywords.iter().any(|k| {
            let k = k.to_lowercase();
            title.contains(&k) || summary.contains(&k)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RssState {
    pub feed_url: String,
    pub seen_ids: BTreeSet<String>,
    pub last_checked: String,
}

impl RssState {
    /// Reads the state file; a missing file yields `None`.
    pub fn load(path: &Path) -> Result<Option<Self>, SkillError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(SkillError::State(format!("{}: {e}", path.display()))),
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| SkillError::State(format!("{}: {e}", path.display())))
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<(), SkillError> {
        let state_err = |e: std::io::Error| SkillError::State(format!("{}: {e}", path.display()));
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(state_err)?;
        let json = serde_json::to_string_pretty(self).expect("state serializes");
        tmp.write_all(json.as_bytes()).map_err(state_err)?;
        tmp.write_all(b"\n").map_err(state_err)?;
        tmp.as_file().sync_all().map_err(state_err)?;
        tmp.persist(path).map_err(|e| state_err(e.error))?;
        Ok(())
    }
}

fn local<'a>(node: &Node<'a, '_>) -> &'a str {
    node.tag_name().name()
}

fn child<'a, 'i>(node: &Node<'a, 'i>, names: &[&str]) -> Option<Node<'a, 'i>> {
    names
        .iter()
        .find_map(|n| node.children().find(|c| c.is_element() && local(c) == *n))
}

fn child_text(node: &Node<'_, '_>, names: &[&str]) -> Option<String> {
    let c = child(node, names)?;
    let text: String = c.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect();
    let text = normalize_whitespace(&text);
    (!text.is_empty()).then_some(text)
}

fn atom_link(entry: &Node<'_, '_>) -> Option<String> {
    let links: Vec<Node> = entry
        .children()
        .filter(|c| c.is_element() && local(c) == "link")
        .collect();
    links
        .iter()
        .find(|l| matches!(l.attribute("rel"), None | Some("alternate")))
        .or(links.first())
        .and_then(|l| l.attribute("href"))
        .map(|h| h.trim().to_string())
}

fn content_hash(title: &str, summary: &str, published: Option<&str>) -> String {
    let mut hasher = Sha256::new();
    for part in [title, summary, published.unwrap_or("")] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

fn normalize_date(raw: String) -> String {
    parse_date(&raw)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or(raw)
}

fn entry_from(node: &Node<'_, '_>, atom: bool) -> FeedEntry {
    let title = child_text(node, &["title"]).unwrap_or_default();
    let summary = child_text(node, &["description", "summary", "content", "encoded"])
        .unwrap_or_default();
    let link = if atom {
        atom_link(node)
    } else {
        child_text(node, &["link"]).or_else(|| {
            node.attributes()
                .find(|a| a.name() == "about")
                .map(|a| a.value().to_string())
        })
    }
    .unwrap_or_default();
    let published = child_text(node, &["pubDate", "published", "updated", "date"]).map(normalize_date);
    let id = child_text(node, &["guid", "id"])
        .or_else(|| (!link.is_empty()).then(|| link.clone()))
        .unwrap_or_else(|| content_hash(&title, &summary, published.as_deref()));
    FeedEntry {
        id,
        title,
        summary,
        link,
        published,
    }
}

/// Parses a feed document into entries in document order.
pub fn parse_feed(xml: &str) -> Result<Vec<FeedEntry>, SkillError> {
    let doc = Document::parse(xml).map_err(|e| SkillError::FeedParse(e.to_string()))?;
    let root = doc.root_element();
    let (container, atom) = match local(&root) {
        "rss" => (
            child(&root, &["channel"])
                .ok_or_else(|| SkillError::FeedParse("<rss> without <channel>".into()))?,
            false,
        ),
        "RDF" => (root, false),
        "feed" => (root, true),
        other => return Err(SkillError::FeedParse(format!("unsupported root element <{other}>"))),
    };
    let item_name = if atom { "entry" } else { "item" };
    Ok(container
        .children()
        .filter(|c| c.is_element() && local(c) == item_name)
        .map(|n| entry_from(&n, atom))
        .collect())
}

/// Result of checking one feed against a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedCheck {
    pub entries: Vec<FeedEntry>,
    pub new_entries: Vec<FeedEntry>,
    pub state: RssState,
}

/// Pure update detection: new entries are unseen (and keyword-matching when
/// keywords are given); all parsed ids join the seen set.
pub fn check_feed(
    feed_url: &str,
    entries: Vec<FeedEntry>,
    previous: Option<RssState>,
    keywords: &[String],
    now: chrono::DateTime<Utc>,
) -> Result<FeedCheck, SkillError> {
    let mut seen = match previous {
        Some(state) if state.feed_url != feed_url => {
            return Err(SkillError::State(format!(
                "state file tracks {} but feed_url is {feed_url}",
                state.feed_url
            )))
        }
        Some(state) => state.seen_ids,
        None => BTreeSet::new(),
    };
    let mut new_entries = Vec::new();
    let mut batch = BTreeSet::new();
    for e in &entries {
        let unseen = !seen.contains(&e.id) && batch.insert(e.id.clone());
        if unseen && (keywords.is_empty() || e.matches_any(keywords)) {
            new_entries.push(e.clone());
        }
    }
    seen.extend(batch);
    Ok(FeedCheck {
        entries,
        new_entries,
        state: RssState {
            feed_url: feed_url.to_string(),
            seen_ids: seen,
            last_checked: now.to_rfc3339_opts(SecondsFormat::Secs, true),
        },
    })
}

struct RssMonitor {
    state_path: PathBuf,
    keywords: Vec<String>,
    timeout: Duration,
    fetcher: Fetcher,
}

impl SkillBehavior for RssMonitor {
    fn run(&self, context: &Context, _llm: Option<&dyn Backend>) -> Result<Context, SkillError> {
        let url = url_input(context, "feed_url")?;
        let previous = RssState::load(&self.state_path)?;
        let page = self.fetcher.get(&url, self.timeout)?;
        let xml = String::from_utf8(page.body)
            .map_err(|e| SkillError::FeedParse(format!("feed is not UTF-8: {e}")))?;
        let entries = parse_feed(&xml)?;
        let check = check_feed(url.as_str(), entries, previous, &self.keywords, Utc::now())?;
        check.state.save(&self.state_path)?;
        let list = |es: &[FeedEntry]| Value::List(es.iter().map(FeedEntry::to_value).collect());
        Ok(context
            .clone()
            .with("entries", list(&check.entries))
            .with("new_entries", list(&check.new_entries)))
    }
}

pub fn create(params: &Params) -> Result<SkillDef, String> {
    let mut reader = ParamReader::new(params);
    let state_path = reader
        .string("state_path")?
        .ok_or("`state_path` is required")?;
    let keywords = reader.string_list("keywords")?.unwrap_or_default();
    let timeout = reader
        .positive_int("timeout_ms")?
        .map(Duration::from_millis)
        .unwrap_or(DEFAULT_TIMEOUT);
    reader.finish()?;
    SkillDef::builder(NAME)
        .description(DESCRIPTION)
        .inputs(["feed_url"])
        .outputs(["entries", "new_entries"])
        .params(params.clone())
        .behavior(RssMonitor {
            state_path: PathBuf::from(state_path),
            keywords,
            timeout,
            fetcher: Fetcher::default(),
        })
        .map_err(|e| e.to_string())
}

pub fn factory() -> impl SkillFactory {
    FnFactory::new(DESCRIPTION, false, create)
}
