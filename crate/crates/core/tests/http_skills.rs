mod support;

use agentloom::skill::{execute_skill, Params, SkillError};
use agentloom::skills::{rss, web_scraper};
use agentloom::{Context, Value};
use support::{closed_port, FixtureServer, Reply};

const PAGE: &str = r#"<html><head><title> Fixture  Page </title></head>
<body><p>First   paragraph.</p><p>Second <b>one</b>.</p>
<a href="/next">next</a><a href="https://other.test/x#frag">x</a><a href="mailto:a@b">m</a>
</body></html>"#;

fn scraper() -> agentloom::SkillDef {
    web_scraper::create(&Params::new()).unwrap()
}

#[test]
fn scrapes_title_text_and_links() {
    let server = FixtureServer::routes(vec![("/page", Reply::ok("text/html", PAGE))]);
    let ctx = Context::new().with("url", server.url("/page"));
    let out = execute_skill(&scraper(), &ctx, None).unwrap();
    assert_eq!(out.get("title"), Some(&Value::from("Fixture Page")));
    assert_eq!(
        out.get("text"),
        Some(&Value::from("First paragraph. Second one."))
    );
    let links = out.get("links").and_then(Value::as_list).unwrap();
    assert!(links.contains(&Value::from(server.url("/next"))));
    assert!(links.iter().all(|l| !l.to_string().starts_with("mailto")));
    assert_eq!(out.get("url"), ctx.get("url"));
    let ua = &server.requests()[0].headers["user-agent"];
    assert!(ua.starts_with("agentloom/"), "{ua}");
}

#[test]
fn not_found_is_http_error() {
    let server = FixtureServer::routes(vec![]);
    let ctx = Context::new().with("url", server.url("/missing"));
    match execute_skill(&scraper(), &ctx, None) {
        Err(SkillError::Http { status: 404, url }) => assert!(url.ends_with("/missing")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn oversize_body_rejected() {
    let big = vec![b'a'; agentloom::skills::http::MAX_BODY_BYTES + 10];
    let server = FixtureServer::routes(vec![("/big", Reply::ok("text/html", big))]);
    let ctx = Context::new().with("url", server.url("/big"));
    assert!(matches!(
        execute_skill(&scraper(), &ctx, None),
        Err(SkillError::Oversize { .. })
    ));
}

#[test]
fn follows_redirects_and_resolves_against_final_url() {
    let server = FixtureServer::start(|req| match req.path.as_str() {
        "/old" => Reply::status(302, "").header("Location", "/new/page"),
        "/new/page" => Reply::ok("text/html", r#"<title>moved</title><a href="sib">s</a>"#),
        _ => Reply::status(404, ""),
    });
    let ctx = Context::new().with("url", server.url("/old"));
    let out = execute_skill(&scraper(), &ctx, None).unwrap();
    assert_eq!(out.get("title"), Some(&Value::from("moved")));
    assert_eq!(
        out.get("links"),
        Some(&Value::List(vec![Value::from(server.url("/new/sib"))]))
    );
}

#[test]
fn unreachable_host_is_network_error() {
    let ctx = Context::new().with("url", format!("http://127.0.0.1:{}/", closed_port()));
    assert!(matches!(
        execute_skill(&scraper(), &ctx, None),
        Err(SkillError::Network { .. })
    ));
}

const FEED: &str = r#"<?xml version="1.0"?>
<rss version="2.0"><channel><title>t</title>
<item><guid>a1</guid><title>Rust release</title><description>new compiler</description>
<pubDate>Mon, 02 Jan 2023 10:00:00 GMT</pubDate></item>
<item><guid>a2</guid><title>Gardening</title><description>tomatoes</description></item>
</channel></rss>"#;

fn monitor(state: &std::path::Path, keywords: &[&str]) -> agentloom::SkillDef {
    let mut params = Params::new();
    params.insert("state_path".into(), Value::from(state.to_str().unwrap()));
    if !keywords.is_empty() {
        params.insert(
            "keywords".into(),
            Value::List(keywords.iter().map(|k| Value::from(*k)).collect()),
        );
    }
    rss::create(&params).unwrap()
}

fn ids(out: &Context, key: &str) -> Vec<String> {
    out.get(key)
        .and_then(Value::as_list)
        .unwrap()
        .iter()
        .map(|e| e.as_map().unwrap()["id"].to_string())
        .collect()
}

#[test]
fn second_check_reports_nothing_new() {
    let server = FixtureServer::routes(vec![("/feed", Reply::ok("application/rss+xml", FEED))]);
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let skill = monitor(&state, &[]);
    let ctx = Context::new().with("feed_url", server.url("/feed"));

    let first = execute_skill(&skill, &ctx, None).unwrap();
    assert_eq!(ids(&first, "entries"), ["a1", "a2"]);
    assert_eq!(ids(&first, "new_entries"), ["a1", "a2"]);
    let saved = rss::RssState::load(&state).unwrap().unwrap();
    assert_eq!(saved.feed_url, server.url("/feed"));
    assert_eq!(saved.seen_ids.len(), 2);

    let second = execute_skill(&skill, &ctx, None).unwrap();
    assert_eq!(ids(&second, "entries"), ["a1", "a2"]);
    assert!(ids(&second, "new_entries").is_empty());
}

#[test]
fn keywords_filter_new_entries() {
    let server = FixtureServer::routes(vec![("/feed", Reply::ok("application/rss+xml", FEED))]);
    let dir = tempfile::tempdir().unwrap();
    let skill = monitor(&dir.path().join("s.json"), &["RUST"]);
    let ctx = Context::new().with("feed_url", server.url("/feed"));
    let out = execute_skill(&skill, &ctx, None).unwrap();
    assert_eq!(ids(&out, "new_entries"), ["a1"]);
    assert_eq!(ids(&out, "entries").len(), 2);
}

#[test]
fn malformed_feed_is_parse_error_and_keeps_state() {
    let server = FixtureServer::routes(vec![("/feed", Reply::ok("text/xml", "<rss><channel>"))]);
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("s.json");
    let ctx = Context::new().with("feed_url", server.url("/feed"));
    assert!(matches!(
        execute_skill(&monitor(&state, &[]), &ctx, None),
        Err(SkillError::FeedParse(_))
    ));
    assert!(!state.exists());
}
