//! Fetches an HTML page and extracts its title, readable text and links.

use std::collections::HashSet;
use std::time::Duration;

use scraper::{ElementRef, Html, Selector};
use url::Url;

use super::http::{normalize_whitespace, url_input, Fetcher, DEFAULT_TIMEOUT};
use super::params::ParamReader;
use crate::backend::Backend;
use crate::registry::{FnFactory, SkillFactory};
use crate::skill::{Params, SkillBehavior, SkillDef, SkillError};
use crate::value::{Context, Value};

pub const NAME: &str = "web_scraper";
const DESCRIPTION: &str = "Fetches a web page and extracts its title, text and links";
const DEFAULT_TEXT_SELECTOR: &str = "p, h1, h2, h3, h4, h5, h6";

/// Extraction result for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub title: String,
    pub text: String,
    pub links: Vec<String>,
}

/// Extracts the first `<title>`, the whitespace-normalized text of elements
/// matching `text_selector` (nested matches are counted once, through the
/// outermost match), and absolute http(s) link targets in document order
/// without duplicates.
pub fn extract(html: &str, base: &Url, text_selector: &Selector) -> Extracted {
    let doc = Html::parse_document(html);
    let title_sel = Selector::parse("title").expect("static selector");
    let link_sel = Selector::parse("a[href]").expect("static selector");

    let title = doc
        .select(&title_sel)
        .next()
        .map(|t| normalize_whitespace(&t.text().collect::<String>()))
        .unwrap_or_default();

    let mut matched = HashSet::new();
    let mut parts = Vec::new();
    for el in doc.select(text_selector) {
        let nested = el
            .ancestors()
            .any(|a| matched.contains(&a.id()));
        matched.insert(el.id());
        if nested {
            continue;
        }
        let piece = element_text(&el);
        if !piece.is_empty() {
            parts.push(piece);
        }
    }

    let mut seen = HashSet::new();
    let mut links = Vec::new();
    for a in doc.select(&link_sel) {
        let Some(href) = a.value().attr("href") else {
            continue;
        };
        let Ok(mut target) = base.join(href.trim()) else {
            continue;
        };
        if !matches!(target.scheme(), "http" | "https") {
            continue;
        }
        target.set_fragment(None);
        let target = target.to_string();
        if seen.insert(target.clone()) {
            links.push(target);
        }
    }

    Extracted {
        title,
        text: parts.join(" "),
        links,
    }
}

fn element_text(el: &ElementRef<'_>) -> String {
    normalize_whitespace(&el.text().collect::<String>())
}

struct WebScraper {
    text_selector: Selector,
    timeout: Duration,
    fetcher: Fetcher,
}

impl SkillBehavior for WebScraper {
    fn run(&self, context: &Context, _llm: Option<&dyn Backend>) -> Result<Context, SkillError> {
        let url = url_input(context, "url")?;
        let page = self.fetcher.get(&url, self.timeout)?;
        let html = String::from_utf8_lossy(&page.body);
        let found = extract(&html, &page.final_url, &self.text_selector);
        let links: Vec<Value> = found.links.into_iter().map(Value::Text).collect();
        Ok(context
            .clone()
            .with("title", found.title)
            .with("text", found.text)
            .with("links", links))
    }
}

pub fn create(params: &Params) -> Result<SkillDef, String> {
    let mut reader = ParamReader::new(params);
    let selectors = reader.string_list("selectors")?;
    let timeout = reader
        .positive_int("timeout_ms")?
        .map(Duration::from_millis)
        .unwrap_or(DEFAULT_TIMEOUT);
    reader.finish()?;
    let selector_text = match &selectors {
        Some(list) if !list.is_empty() => list.join(", "),
        _ => DEFAULT_TEXT_SELECTOR.to_string(),
    };
    let text_selector = Selector::parse(&selector_text)
        .map_err(|e| format!("invalid selector `{selector_text}`: {e}"))?;
    SkillDef::builder(NAME)
        .description(DESCRIPTION)
        .inputs(["url"])
        .outputs(["title", "text", "links"])
        .params(params.clone())
        .behavior(WebScraper {
            text_selector,
            timeout,
            fetcher: Fetcher::default(),
        })
        .map_err(|e| e.to_string())
}

pub fn factory() -> impl SkillFactory {
    FnFactory::new(DESCRIPTION, false, create)
}
