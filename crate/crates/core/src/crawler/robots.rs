//! Minimal robots.txt support: `User-agent` groups and `Disallow` prefixes.
//! `Allow`, wildcards and crawl-delay are ignored.

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RobotsRules {
    disallow: Vec<String>,
}

impl RobotsRules {
    pub fn allow_all() -> Self {
        Self::default()
    }

    /// Picks the group naming `user_agent` (case-insensitive substring match
    /// on the product token) and falls back to `*`.
    pub fn parse(body: &str, user_agent: &str) -> Self {
        let agent = user_agent
            .split('/')
            .next()
            .unwrap_or_default()
            .trim()
            .to_ascii_lowercase();

        let mut specific: Option<Vec<String>> = None;
        let mut wildcard: Option<Vec<String>> = None;

        let mut group_agents: Vec<String> = Vec::new();
        let mut group_rules: Vec<String> = Vec::new();
        let mut in_rules = false;

        let mut flush = |agents: &mut Vec<String>, rules: &mut Vec<String>| {
            for a in agents.iter() {
                if a == "*" {
                    wildcard
                        .get_or_insert_with(Vec::new)
                        .extend(rules.iter().cloned());
                } else if !agent.is_empty() && agent.contains(a.as_str()) {
                    specific
                        .get_or_insert_with(Vec::new)
                        .extend(rules.iter().cloned());
                }
            }
            agents.clear();
            rules.clear();
        };

        for line in body.lines() {
            let line = line.split('#').next().unwrap_or_default().trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if in_rules {
                        flush(&mut group_agents, &mut group_rules);
                        in_rules = false;
                    }
                    group_agents.push(value.to_ascii_lowercase());
                }
                "disallow" => {
                    in_rules = true;
                    if !value.is_empty() {
                        group_rules.push(value.to_string());
                    }
                }
                _ => in_rules = true,
            }
        }
        flush(&mut group_agents, &mut group_rules);

        RobotsRules {
            disallow: specific.or(wildcard).unwrap_or_default(),
        }
    }

    pub fn is_allowed(&self, path: &str) -> bool {
        !self
            .disallow
            .iter()
            .any(|prefix| path.starts_with(prefix.as_str()))
    }
}
