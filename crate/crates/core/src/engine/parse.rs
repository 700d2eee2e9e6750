//! Minimal response grammars for backend answers.

use crate::ontology::{AgentId, TaskId, Verdict};

/// Items of a numbered list (`1. x`, `2) y`). Other lines are ignored.
pub fn numbered_list(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            let digits = line.chars().take_while(char::is_ascii_digit).count();
            if digits == 0 {
                return None;
            }
            let rest = line[digits..].strip_prefix(['.', ')'])?.trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
        .collect()
}

/// Values of every `KEY: value` line, keys compared case-insensitively.
pub fn directives<'a>(text: &'a str, key: &str) -> Vec<&'a str> {
    text.lines()
        .filter_map(|line| {
            let (k, v) = line.trim().split_once(':')?;
            k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
        })
        .filter(|v| !v.is_empty())
        .collect()
}

pub fn directive<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    directives(text, key).into_iter().next()
}

/// Comma- or whitespace-separated list.
pub fn id_list(value: &str) -> Vec<String> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// `TASK:<id> AGENT:<id>` on one line.
pub fn assignment(text: &str) -> Option<(TaskId, AgentId)> {
    text.lines().find_map(|line| {
        let mut task = None;
        let mut agent = None;
        let mut tokens = line.split_whitespace().peekable();
        while let Some(tok) = tokens.next() {
            let (key, inline) = match tok.split_once(':') {
                Some((k, v)) => (k, v),
                None => continue,
            };
            let value = if inline.is_empty() { tokens.next().unwrap_or("") } else { inline };
            if value.is_empty() {
                continue;
            }
            if key.eq_ignore_ascii_case("task") {
                task = Some(TaskId(value.to_string()));
            } else if key.eq_ignore_ascii_case("agent") {
                agent = Some(AgentId(value.to_string()));
            }
        }
        Some((task?, agent?))
    })
}

/// ACCEPT/REJECT on the first non-empty line, or the done marker anywhere.
pub fn verdict(text: &str, done_marker: &str) -> Option<Verdict> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty())?;
    let upper = first.to_ascii_uppercase();
    if upper.starts_with("ACCEPT") {
        Some(Verdict::Accepted)
    } else if upper.starts_with("REJECT") {
        Some(Verdict::Rejected)
    } else if !done_marker.is_empty() && text.contains(done_marker) {
        Some(Verdict::Accepted)
    } else {
        None
    }
}

/// `a-b` pairs from `CONNECT:` lines.
pub fn connections(text: &str) -> Vec<(AgentId, AgentId)> {
    directives(text, "connect")
        .into_iter()
        .flat_map(id_list)
        .filter_map(|pair| {
            let (a, b) = pair.split_once('-')?;
            (!a.is_empty() && !b.is_empty()).then(|| (AgentId::from(a), AgentId::from(b)))
        })
        .collect()
}

/// `key=value` pairs from `REMEMBER:` lines.
pub fn remembered(text: &str) -> Vec<(String, String)> {
    directives(text, "remember")
        .into_iter()
        .filter_map(|v| {
            let (k, v) = v.split_once('=')?;
            let k = k.trim();
            (!k.is_empty()).then(|| (k.to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Fields of an `AGENT: id TYPE: t ROLE: r TOOLS: a,b` line. ROLE runs until TOOLS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentDefinition {
    pub id: String,
    pub agent_type: Option<String>,
    pub role: String,
    pub tools: Vec<String>,
}

pub fn agent_definitions(text: &str) -> Vec<AgentDefinition> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            let rest = strip_key(line, "AGENT:")?;
            let (head, tools) = match find_key(rest, "TOOLS:") {
                Some(i) => (&rest[..i], id_list(&rest[i + 6..])),
                None => (rest, Vec::new()),
            };
            let (head, role) = match find_key(head, "ROLE:") {
                Some(i) => (&head[..i], head[i + 5..].trim().to_string()),
                None => (head, String::new()),
            };
            let (id, agent_type) = match find_key(head, "TYPE:") {
                Some(i) => (head[..i].trim(), Some(head[i + 5..].trim().to_string())),
                None => (head.trim(), None),
            };
            (!id.is_empty() && !id.contains(char::is_whitespace)).then(|| AgentDefinition {
                id: id.to_string(),
                agent_type,
                role,
                tools,
            })
        })
        .collect()
}

fn strip_key<'a>(s: &'a str, key: &str) -> Option<&'a str> {
    (s.len() >= key.len() && s[..key.len()].eq_ignore_ascii_case(key)).then(|| &s[key.len()..])
}

fn find_key(s: &str, key: &str) -> Option<usize> {
    s.to_ascii_uppercase().find(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbered() {
        assert_eq!(numbered_list("1. x\n2. y"), vec!["x", "y"]);
        assert_eq!(numbered_list("Plan:\n1) a\n- b\n3. c"), vec!["a", "c"]);
        assert!(numbered_list("").is_empty());
        assert!(numbered_list("just text").is_empty());
    }

    #[test]
    fn directive_lines() {
        assert_eq!(directive("foo\nStrategy: deep", "STRATEGY"), Some("deep"));
        assert_eq!(directives("ORDER: t2, t1", "order"), vec!["t2, t1"]);
        assert_eq!(id_list("t2, t1 t3"), vec!["t2", "t1", "t3"]);
        assert_eq!(directive("STRATEGY:", "strategy"), None);
    }

    #[test]
    fn assignment_line() {
        assert_eq!(assignment("TASK:t2 AGENT:coder"), Some(("t2".into(), "coder".into())));
        assert_eq!(assignment("x\nTASK: t1 AGENT: a"), Some(("t1".into(), "a".into())));
        assert_eq!(assignment("TASK:t1"), None);
    }

    #[test]
    fn verdicts() {
        assert_eq!(verdict("ACCEPT", "DONE"), Some(Verdict::Accepted));
        assert_eq!(verdict("  reject: too short", "DONE"), Some(Verdict::Rejected));
        assert_eq!(verdict("all good DONE", "DONE"), Some(Verdict::Accepted));
        assert_eq!(verdict("hmm", "DONE"), None);
    }

    #[test]
    fn agents_and_links() {
        let defs = agent_definitions("AGENT: qa TYPE: Technical ROLE: test the code TOOLS: exec, search");
        assert_eq!(defs.len(), 1);
        assert_eq!(defs[0].id, "qa");
        assert_eq!(defs[0].agent_type.as_deref(), Some("Technical"));
        assert_eq!(defs[0].role, "test the code");
        assert_eq!(defs[0].tools, vec!["exec", "search"]);
        assert_eq!(connections("CONNECT: a-b, c-d"), vec![("a".into(), "b".into()), ("c".into(), "d".into())]);
        assert_eq!(remembered("REMEMBER: lang = rust\nREMEMBER: bad"), vec![("lang".into(), "rust".into())]);
    }
}
