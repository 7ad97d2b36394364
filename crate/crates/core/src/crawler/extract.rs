use std::collections::HashSet;

use scraper::{ElementRef, Html, Node};
use url::Url;

use super::url_norm::{normalize_url_with, NormalizeOptions};
use super::{Document, Page};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("not an HTML page (content type {0:?})")]
    NotHtml(String),
    #[error("page has no body (status {0})")]
    NoBody(u16),
}

const SKIPPED: &[&str] = &[
    "head", "script", "style", "noscript", "template", "svg", "iframe", "object", "canvas",
];

const BLOCK_LEVEL: &[&str] = &[
    "address",
    "article",
    "aside",
    "blockquote",
    "body",
    "br",
    "caption",
    "dd",
    "details",
    "dialog",
    "div",
    "dl",
    "dt",
    "fieldset",
    "figcaption",
    "figure",
    "footer",
    "form",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "header",
    "hgroup",
    "hr",
    "html",
    "li",
    "main",
    "nav",
    "ol",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "tbody",
    "td",
    "tfoot",
    "th",
    "thead",
    "tr",
    "ul",
];

pub fn is_html_content_type(content_type: &str) -> bool {
    let media = content_type
        .split(';')
        .next()
        .unwrap_or_default()
        .trim()
        .to_ascii_lowercase();
    media == "text/html" || media == "application/xhtml+xml"
}

/// Converts an HTML page into a [`Document`]. Pure: identical page bytes
/// always produce an identical document.
pub fn extract_document(page: &Page) -> Result<Document, ExtractError> {
    extract_document_with(page, NormalizeOptions::default())
}

pub fn extract_document_with(
    page: &Page,
    opts: NormalizeOptions,
) -> Result<Document, ExtractError> {
    if !is_html_content_type(&page.content_type) {
        return Err(ExtractError::NotHtml(page.content_type.clone()));
    }
    let body = page
        .body
        .as_deref()
        .ok_or(ExtractError::NoBody(page.status))?;
    let html = Html::parse_document(&String::from_utf8_lossy(body));

    let title = html
        .root_element()
        .descendants()
        .filter_map(ElementRef::wrap)
        .find(|el| el.value().name() == "title")
        .map(|el| collapse_whitespace(&el.text().collect::<String>()))
        .unwrap_or_default();

    let mut walker = Walker {
        page_url: &page.url,
        opts,
        blocks: Vec::new(),
        current: String::new(),
        links: Vec::new(),
        seen_links: HashSet::new(),
    };
    walker.walk(html.root_element());
    walker.flush();

    Ok(Document {
        url: page.url.clone(),
        title,
        blocks: walker.blocks,
        links: walker.links,
    })
}

struct Walker<'a> {
    page_url: &'a Url,
    opts: NormalizeOptions,
    blocks: Vec<String>,
    current: String,
    links: Vec<Url>,
    seen_links: HashSet<Url>,
}

impl Walker<'_> {
    fn walk(&mut self, el: ElementRef<'_>) {
        let name = el.value().name();
        if SKIPPED.contains(&name) {
            return;
        }
        let block = BLOCK_LEVEL.contains(&name);
        if block {
            self.flush();
        }
        if name == "a" {
            if let Some(href) = el.value().attr("href") {
                if let Ok(link) = normalize_url_with(href, self.page_url, self.opts) {
                    if self.seen_links.insert(link.clone()) {
                        self.links.push(link);
                    }
                }
            }
        }
        for child in el.children() {
            match child.value() {
                Node::Text(text) => {
                    self.current.push_str(text);
                }
                Node::Element(_) => {
                    if let Some(child_el) = ElementRef::wrap(child) {
                        self.walk(child_el);
                    }
                }
                _ => {}
            }
        }
        if block {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let text = collapse_whitespace(&self.current);
        self.current.clear();
        if !text.is_empty() {
            self.blocks.push(text);
        }
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
