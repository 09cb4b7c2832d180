//! Requirement specification text format.
//!
//! ```text
//! # comment
//! env distance 2
//! competency move 3
//! competency reach 2 derived
//! target haskey
//! lambda 0.05
//! phi move 0.8 0.2 0.0
//! haskey : (distance=1 | move=2, pick up=1)
//! ```
//!
//! A requirement may wrap across lines until its parentheses close.
//! Identifiers inside requirements may contain spaces; each run of
//! whitespace becomes `_`, so `pick up` names `pick_up`.

use std::collections::BTreeMap;

use super::{CompetencyDecl, EnvVarDecl, RequirementLine, SebnSpec, SpecError, DEFAULT_LAMBDA};

fn perr(line: usize, token: &str, message: impl Into<String>) -> SpecError {
    SpecError::Parse { line, token: token.trim().to_string(), message: message.into() }
}

fn normalize_ident(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join("_")
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
}

enum Item {
    Env(EnvVarDecl),
    Competency(CompetencyDecl),
    Target(String),
    Lambda(f64),
    Phi(String, Vec<f64>),
    Requirement(RequirementLine),
}

fn parse_pairs(text: &str, line: usize) -> Result<Vec<(String, usize)>, SpecError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|piece| {
            let (name, value) = piece
                .split_once('=')
                .ok_or_else(|| perr(line, piece, "expected `name=level`"))?;
            let name = normalize_ident(name);
            if !is_ident(&name) {
                return Err(perr(line, piece, "bad identifier"));
            }
            let value = value
                .trim()
                .parse::<usize>()
                .map_err(|_| perr(line, value, "level must be a non-negative integer"))?;
            Ok((name, value))
        })
        .collect()
}

fn parse_requirement(text: &str, line: usize) -> Result<RequirementLine, SpecError> {
    let (target, body) = text.split_once(':').ok_or_else(|| perr(line, text, "expected `target : (...)`"))?;
    let target = normalize_ident(target);
    if !is_ident(&target) {
        return Err(perr(line, &target, "bad target identifier"));
    }
    let body = body.trim();
    let inner = body
        .strip_prefix('(')
        .and_then(|b| b.strip_suffix(')'))
        .ok_or_else(|| perr(line, body, "requirement body must be parenthesised"))?;
    let (conds, reqs) = inner
        .split_once('|')
        .ok_or_else(|| perr(line, inner, "expected `conditions | requirements`"))?;
    if reqs.contains('|') {
        return Err(perr(line, reqs, "more than one `|`"));
    }
    Ok(RequirementLine {
        target,
        env_conditions: parse_pairs(conds, line)?,
        requirements: parse_pairs(reqs, line)?,
    })
}

fn parse_size(tok: Option<&str>, line: usize, what: &str) -> Result<usize, SpecError> {
    let tok = tok.ok_or_else(|| perr(line, "", format!("missing {what}")))?;
    tok.parse().map_err(|_| perr(line, tok, format!("{what} must be a positive integer")))
}

fn parse_declaration(text: &str, line: usize) -> Result<Item, SpecError> {
    let mut toks = text.split_whitespace();
    let keyword = toks.next().unwrap_or_default();
    let name = |t: Option<&str>| -> Result<String, SpecError> {
        let t = t.ok_or_else(|| perr(line, text, "missing name"))?;
        if is_ident(t) {
            Ok(t.to_string())
        } else {
            Err(perr(line, t, "bad identifier"))
        }
    };
    let item = match keyword {
        "env" => {
            let n = name(toks.next())?;
            Item::Env(EnvVarDecl { name: n, domain_size: parse_size(toks.next(), line, "domain size")? })
        }
        "competency" => {
            let n = name(toks.next())?;
            let size = parse_size(toks.next(), line, "level count")?;
            let is_base = match toks.next() {
                None => true,
                Some("derived") => false,
                Some(other) => return Err(perr(line, other, "expected `derived` or end of line")),
            };
            Item::Competency(CompetencyDecl { name: n, domain_size: size, is_base })
        }
        "target" => Item::Target(name(toks.next())?),
        "lambda" => {
            let tok = toks.next().ok_or_else(|| perr(line, text, "missing value"))?;
            Item::Lambda(tok.parse().map_err(|_| perr(line, tok, "lambda must be a number"))?)
        }
        "phi" => {
            let n = name(toks.next())?;
            let values = toks
                .by_ref()
                .map(|t| t.parse::<f64>().map_err(|_| perr(line, t, "probability must be a number")))
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(perr(line, text, "phi needs at least one probability"));
            }
            return Ok(Item::Phi(n, values));
        }
        other => return Err(perr(line, other, "unknown declaration")),
    };
    if let Some(extra) = toks.next() {
        return Err(perr(line, extra, "unexpected token"));
    }
    Ok(item)
}

fn parse_items(text: &str) -> Result<Vec<(usize, Item)>, SpecError> {
    let mut items = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or_default();
        if let Some((start, mut buf)) = pending.take() {
            buf.push(' ');
            buf.push_str(content);
            if buf.contains(')') {
                items.push((start, Item::Requirement(parse_requirement(&buf, start)?)));
            } else {
                pending = Some((start, buf));
            }
            continue;
        }
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.contains(':') {
            if trimmed.contains('(') && !trimmed.contains(')') {
                pending = Some((line_no, trimmed.to_string()));
            } else {
                items.push((line_no, Item::Requirement(parse_requirement(trimmed, line_no)?)));
            }
        } else {
            items.push((line_no, parse_declaration(trimmed, line_no)?));
        }
    }
    if let Some((start, buf)) = pending {
        return Err(perr(start, &buf, "unterminated requirement"));
    }
    Ok(items)
}

/// Requirement lines of a spec document, in document order. Declarations
/// are checked for syntax but not returned.
pub fn parse_requirements(text: &str) -> Result<Vec<RequirementLine>, SpecError> {
    Ok(parse_items(text)?
        .into_iter()
        .filter_map(|(_, item)| match item {
            Item::Requirement(r) => Some(r),
            _ => None,
        })
        .collect())
}

/// Parses and validates a complete spec document. Base competencies without
/// a `phi` line start uniform; `lambda` defaults to [`DEFAULT_LAMBDA`].
pub fn parse_spec(text: &str) -> Result<SebnSpec, SpecError> {
    let mut spec = SebnSpec {
        env_vars: Vec::new(),
        competency_vars: Vec::new(),
        target_vars: Vec::new(),
        requirement_lines: Vec::new(),
        lambda: DEFAULT_LAMBDA,
        phi_base: BTreeMap::new(),
    };
    let mut lambda_seen = false;
    for (line, item) in parse_items(text)? {
        match item {
            Item::Env(v) => spec.env_vars.push(v),
            Item::Competency(c) => spec.competency_vars.push(c),
            Item::Target(t) => spec.target_vars.push(t),
            Item::Lambda(l) => {
                if lambda_seen {
                    return Err(perr(line, "lambda", "lambda set twice"));
                }
                lambda_seen = true;
                spec.lambda = l;
            }
            Item::Phi(name, values) => {
                if spec.phi_base.insert(name.clone(), values).is_some() {
                    return Err(perr(line, &name, "phi set twice"));
                }
            }
            Item::Requirement(r) => spec.requirement_lines.push(r),
        }
    }
    for c in spec.competency_vars.iter().filter(|c| c.is_base) {
        spec.phi_base
            .entry(c.name.clone())
            .or_insert_with(|| vec![1.0 / c.domain_size as f64; c.domain_size]);
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sebn::fixtures;

    fn line(target: &str, env: &[(&str, usize)], reqs: &[(&str, usize)]) -> RequirementLine {
        RequirementLine {
            target: target.into(),
            env_conditions: env.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            requirements: reqs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn single_line() {
        let lines = parse_requirements("haskey : (distance=1 | move=2)").unwrap();
        assert_eq!(lines, vec![line("haskey", &[("distance", 1)], &[("move", 2)])]);
    }

    #[test]
    fn empty_document() {
        assert!(parse_requirements("").unwrap().is_empty());
        assert!(parse_requirements("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn doorkey_listing() {
        let lines = parse_requirements(fixtures::DOORKEY).unwrap();
        assert_eq!(lines.len(), 7);
        let count = |t: &str| lines.iter().filter(|l| l.target == t).count();
        assert_eq!(count("goalreached"), 4);
        assert_eq!(count("dooropened"), 1);
        assert_eq!(count("haskey"), 2);
        // The wrapped fourth line and the spaced identifier.
        assert_eq!(
            lines[3],
            line(
                "goalreached",
                &[("wall", 1), ("exists_door", 1)],
                &[("dooropened", 1), ("avoid_wall", 1), ("move", 1)]
            )
        );
        assert!(lines[4].requirements.contains(&("open_door".to_string(), 1)));
    }

    #[test]
    fn spaced_identifiers_normalise() {
        let lines = parse_requirements("haskey: (distance = 0 | move=1, pick   up = 1)").unwrap();
        assert_eq!(lines[0], line("haskey", &[("distance", 0)], &[("move", 1), ("pick_up", 1)]));
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse_requirements("\nhaskey : (distance=1 | move=two)").unwrap_err();
        match err {
            SpecError::Parse { line, token, .. } => {
                assert_eq!(line, 2);
                assert_eq!(token, "two");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_requirements("haskey : distance=1 | move=2"), Err(SpecError::Parse { line: 1, .. })));
        assert!(matches!(parse_requirements("haskey : (distance=1 move=2)"), Err(SpecError::Parse { .. })));
        assert!(matches!(parse_requirements("bogus line here"), Err(SpecError::Parse { line: 1, .. })));
        assert!(matches!(parse_requirements("t : (a=1 |\n b=1"), Err(SpecError::Parse { line: 1, .. })));
    }

    #[test]
    fn declarations() {
        let spec = parse_spec(fixtures::DOORKEY).unwrap();
        assert_eq!(spec.env_vars.len(), 3);
        assert_eq!(spec.competency_vars.len(), 5);
        assert_eq!(spec.target_vars.len(), 3);
        assert_eq!(spec.lambda, 0.05);
        assert_eq!(spec.phi_base["move"], vec![1.0 / 3.0; 3]);
        let spec = parse_spec(fixtures::BIPEDAL_WALKER).unwrap();
        assert_eq!(spec.env_space_size(), 1536);
    }

    #[test]
    fn duplicate_settings_rejected() {
        assert!(parse_spec("lambda 0.1\nlambda 0.2\n").is_err());
        assert!(parse_spec("competency m 2\nphi m 0.5 0.5\nphi m 0.5 0.5\n").is_err());
    }
}
