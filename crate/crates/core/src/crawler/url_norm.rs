use std::fmt;

use url::Url;

/// Why a link was not admitted to the crawl frontier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    FragmentOnly,
    Empty,
    UnsupportedScheme(String),
    CrossHost(String),
    Unparsable(String),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::FragmentOnly => write!(f, "fragment-only reference"),
            Rejection::Empty => write!(f, "empty reference"),
            Rejection::UnsupportedScheme(s) => write!(f, "unsupported scheme {s:?}"),
            Rejection::CrossHost(h) => write!(f, "cross-host target {h:?}"),
            Rejection::Unparsable(e) => write!(f, "unparsable reference: {e}"),
        }
    }
}

impl std::error::Error for Rejection {}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeOptions {
    /// Keep `?query` components. Off by default: the target sites use
    /// path-distinct pages and queries mostly carry tracking noise.
    pub keep_query: bool,
}

/// Resolves `raw` against `base` with the default options.
pub fn normalize_url(raw: &str, base: &Url) -> Result<Url, Rejection> {
    normalize_url_with(raw, base, NormalizeOptions::default())
}

pub fn normalize_url_with(raw: &str, base: &Url, opts: NormalizeOptions) -> Result<Url, Rejection> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(Rejection::Empty);
    }
    if raw.starts_with('#') {
        return Err(Rejection::FragmentOnly);
    }
    let mut url = base
        .join(raw)
        .map_err(|e| Rejection::Unparsable(e.to_string()))?;
    match url.scheme() {
        "http" | "https" => {}
        other => return Err(Rejection::UnsupportedScheme(other.to_string())),
    }
    if !same_host(&url, base) {
        return Err(Rejection::CrossHost(
            url.host_str().unwrap_or_default().to_string(),
        ));
    }
    url.set_fragment(None);
    if !opts.keep_query {
        url.set_query(None);
    }
    Ok(url)
}

/// Host comparison used for the same-site rule. The `url` crate already
/// lowercases scheme and host during parsing.
pub fn same_host(a: &Url, b: &Url) -> bool {
    match (a.host_str(), b.host_str()) {
        (Some(x), Some(y)) => x.eq_ignore_ascii_case(y),
        _ => false,
    }
}

/// Validates a crawl seed: absolute and http(s).
pub fn parse_seed(raw: &str) -> Result<Url, Rejection> {
    let url = Url::parse(raw.trim()).map_err(|e| Rejection::Unparsable(e.to_string()))?;
    match url.scheme() {
        "http" | "https" if url.host_str().is_some() => {
            let mut url = url;
            url.set_fragment(None);
            Ok(url)
        }
        "http" | "https" => Err(Rejection::Unparsable("missing host".into())),
        other => Err(Rejection::UnsupportedScheme(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(s: &str) -> Url {
        Url::parse(s).unwrap()
    }

    #[test]
    fn resolves_relative_reference() {
        let got = normalize_url("about.html", &base("https://x.example/dir/")).unwrap();
        assert_eq!(got.as_str(), "https://x.example/dir/about.html");
    }

    #[test]
    fn fragment_only_is_rejected() {
        assert_eq!(
            normalize_url("#top", &base("https://x.example/a")),
            Err(Rejection::FragmentOnly)
        );
    }

    #[test]
    fn cross_host_is_rejected() {
        assert!(matches!(
            normalize_url("https://other.example/", &base("https://x.example/")),
            Err(Rejection::CrossHost(h)) if h == "other.example"
        ));
    }

    #[test]
    fn non_http_schemes_are_rejected() {
        let b = base("https://x.example/");
        assert!(matches!(
            normalize_url("mailto:a@x.example", &b),
            Err(Rejection::UnsupportedScheme(s)) if s == "mailto"
        ));
        assert!(matches!(
            normalize_url("javascript:void(0)", &b),
            Err(Rejection::UnsupportedScheme(_))
        ));
    }

    #[test]
    fn strips_fragment_and_query_and_lowercases_host() {
        let b = base("https://x.example/");
        let got = normalize_url("HTTPS://X.Example/Page.html?ref=1#sec", &b).unwrap();
        assert_eq!(got.as_str(), "https://x.example/Page.html");
        let kept =
            normalize_url_with("/p?q=1#f", &b, NormalizeOptions { keep_query: true }).unwrap();
        assert_eq!(kept.as_str(), "https://x.example/p?q=1");
    }

    #[test]
    fn unparsable_reference() {
        let b = base("https://x.example/");
        assert!(matches!(
            normalize_url("http://[::1", &b),
            Err(Rejection::Unparsable(_))
        ));
    }

    #[test]
    fn college_site_seed_is_accepted() {
        let seed = parse_seed("https://bvmengineering.ac.in/").unwrap();
        assert_eq!(seed.host_str(), Some("bvmengineering.ac.in"));
        assert!(parse_seed("notaurl").is_err());
        assert!(parse_seed("ftp://x.example/").is_err());
    }
}
