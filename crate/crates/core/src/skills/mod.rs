//! Built-in skills and the default registry.

mod params;

pub mod content;
pub mod data_analysis;
pub mod http;
pub mod rss;
pub mod sentiment;
pub mod template;
pub mod web_scraper;

use crate::registry::SkillRegistry;

/// Registry holding every built-in skill under its canonical name.
pub fn default_registry() -> SkillRegistry {
    let mut registry = SkillRegistry::new();
    let builtins: [(&str, std::sync::Arc<dyn crate::registry::SkillFactory>); 5] = [
        (content::NAME, std::sync::Arc::new(content::factory())),
        (data_analysis::NAME, std::sync::Arc::new(data_analysis::factory())),
        (rss::NAME, std::sync::Arc::new(rss::factory())),
        (sentiment::NAME, std::sync::Arc::new(sentiment::factory())),
        (web_scraper::NAME, std::sync::Arc::new(web_scraper::factory())),
    ];
    for (name, factory) in builtins {
        registry
            .register_arc(name, factory, false)
            .expect("built-in names are valid and distinct");
    }
    registry
}
