use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{feature, is_placeholder, keyword_eq, tokenize_sparql, LexError, QueryForm, SparqlQuery, Term, TriplePattern};
use crate::kg::{parse_literal, Iri, Prefix};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("syntax error at token {position}: {message}")]
    Syntax { position: usize, message: String },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Subject,
    Predicate,
    Object { after_type: bool },
}

struct Parser<'a> {
    tokens: &'a [String],
    pos: usize,
    patterns: Vec<TriplePattern>,
    features: Vec<String>,
}

pub fn parse_sparql(text: &str) -> Result<SparqlQuery, ParseError> {
    let tokens = tokenize_sparql(text)?;
    parse_query(&tokens)
}

/// Parses a token list produced by [`tokenize_sparql`]. `;` and `,`
/// abbreviations are expanded into full triple patterns.
pub fn parse_query(tokens: &[String]) -> Result<SparqlQuery, ParseError> {
    let mut p = Parser {
        tokens,
        pos: 0,
        patterns: Vec::new(),
        features: Vec::new(),
    };
    p.prologue()?;
    let (form, distinct, projection, star) = p.head()?;
    if p.peek_kw("WHERE") {
        p.pos += 1;
    }
    p.group()?;
    p.modifiers()?;
    let mut query = SparqlQuery {
        form,
        distinct,
        projection,
        patterns: p.patterns,
        unsupported_features: p.features,
        raw_tokens: tokens.to_vec(),
    };
    if star && form == QueryForm::Select {
        query.projection = query.variables().into_iter().map(ToString::to_string).collect();
    }
    Ok(query)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(String::as_str)
    }

    fn peek_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| keyword_eq(t, kw))
    }

    fn next(&mut self) -> Result<&'a str, ParseError> {
        let t = self.peek().ok_or_else(|| self.err("unexpected end of query"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: &str) -> Result<(), ParseError> {
        let got = self.next()?;
        if keyword_eq(got, want) {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(&format!("expected `{want}`, found `{got}`")))
        }
    }

    fn err(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn prologue(&mut self) -> Result<(), ParseError> {
        loop {
            if self.peek_kw("PREFIX") {
                self.pos += 3;
            } else if self.peek_kw("BASE") {
                self.pos += 2;
            } else {
                return Ok(());
            }
            if self.pos > self.tokens.len() {
                return Err(self.err("truncated prologue"));
            }
        }
    }

    fn head(&mut self) -> Result<(QueryForm, bool, Vec<String>, bool), ParseError> {
        let first = self.next()?;
        if keyword_eq(first, "ASK") {
            return Ok((QueryForm::Ask, false, Vec::new(), false));
        }
        if !keyword_eq(first, "SELECT") {
            self.pos -= 1;
            return Err(self.err(&format!("expected SELECT or ASK, found `{first}`")));
        }
        let mut distinct = false;
        if self.peek_kw("DISTINCT") || self.peek_kw("REDUCED") {
            distinct = self.peek_kw("DISTINCT");
            self.pos += 1;
        }
        let mut form = QueryForm::Select;
        let mut projection = Vec::new();
        let mut star = false;
        loop {
            match self.peek() {
                None => return Err(self.err("unexpected end of projection")),
                Some(t) if keyword_eq(t, "WHERE") || t == "{" => break,
                Some("*") => {
                    self.pos += 1;
                    star = true;
                }
                Some(t) if keyword_eq(t, "COUNT") => {
                    self.pos += 1;
                    form = QueryForm::SelectCount;
                    distinct |= self.count_body(&mut projection)?;
                }
                Some("(") => {
                    // `(COUNT(?x) AS ?n)`
                    self.pos += 1;
                    self.expect("COUNT")?;
                    form = QueryForm::SelectCount;
                    distinct |= self.count_body(&mut projection)?;
                    self.expect("AS")?;
                    self.variable()?;
                    self.expect(")")?;
                }
                Some(_) => {
                    let v = self.variable()?;
                    projection.push(v);
                }
            }
        }
        if form == QueryForm::Select && projection.is_empty() && !star {
            return Err(self.err("empty projection"));
        }
        Ok((form, distinct, projection, star))
    }

    fn count_body(&mut self, projection: &mut Vec<String>) -> Result<bool, ParseError> {
        self.expect("(")?;
        let mut distinct = false;
        if self.peek_kw("DISTINCT") {
            distinct = true;
            self.pos += 1;
        }
        if self.peek() == Some("*") {
            self.pos += 1;
        } else {
            let v = self.variable()?;
            projection.push(v);
        }
        self.expect(")")?;
        Ok(distinct)
    }

    fn variable(&mut self) -> Result<String, ParseError> {
        let t = self.next()?;
        match t.strip_prefix('?').or_else(|| t.strip_prefix('$')) {
            Some(name) if !name.is_empty() => Ok(format!("?{name}")),
            _ => {
                self.pos -= 1;
                Err(self.err(&format!("expected variable, found `{t}`")))
            }
        }
    }

    fn group(&mut self) -> Result<(), ParseError> {
        self.expect("{")?;
        loop {
            let Some(t) = self.peek() else {
                return Err(self.err("unclosed `{`"));
            };
            match t {
                "}" => {
                    self.pos += 1;
                    return Ok(());
                }
                "." => self.pos += 1,
                "{" => {
                    self.group()?;
                    while self.peek_kw("UNION") {
                        feature(&mut self.features, "UNION");
                        self.pos += 1;
                        self.group()?;
                    }
                }
                _ if keyword_eq(t, "OPTIONAL") || keyword_eq(t, "MINUS") => {
                    feature(&mut self.features, &t.to_ascii_uppercase());
                    self.pos += 1;
                    self.group()?;
                }
                _ if keyword_eq(t, "FILTER") || keyword_eq(t, "BIND") || keyword_eq(t, "VALUES") => {
                    feature(&mut self.features, &t.to_ascii_uppercase());
                    self.pos += 1;
                    self.skip_constraint()?;
                }
                _ => self.triples_block()?,
            }
        }
    }

    /// Skips a FILTER/BIND/VALUES body: optional leading words (function
    /// names, `NOT EXISTS`, variables) followed by one balanced `(...)` or
    /// `{...}`.
    fn skip_constraint(&mut self) -> Result<(), ParseError> {
        while let Some(t) = self.peek() {
            if t == "(" || t == "{" {
                break;
            }
            if t == "}" {
                return Err(self.err("constraint without body"));
            }
            self.pos += 1;
        }
        self.skip_balanced()
    }

    fn skip_balanced(&mut self) -> Result<(), ParseError> {
        let mut depth = 0usize;
        loop {
            let t = self.next()?;
            match t {
                "(" | "{" => depth += 1,
                ")" | "}" => {
                    depth = depth.checked_sub(1).ok_or_else(|| self.err("unbalanced brackets"))?;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                _ => {}
            }
        }
    }

    fn triples_block(&mut self) -> Result<(), ParseError> {
        let subject = self.term(Slot::Subject)?;
        loop {
            let verb = self.term(Slot::Predicate)?;
            let after_type = matches!(&verb, Term::Relation(r) if r.is_rdf_type());
            loop {
                let object = self.term(Slot::Object { after_type })?;
                self.patterns.push(TriplePattern::new(subject.clone(), verb.clone(), object));
                if self.peek() == Some(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            if self.peek() != Some(";") {
                return Ok(());
            }
            while self.peek() == Some(";") {
                self.pos += 1;
            }
            if matches!(self.peek(), Some("." | "}")) {
                return Ok(());
            }
        }
    }

    fn term(&mut self, slot: Slot) -> Result<Term, ParseError> {
        let t = self.next()?;
        let bad = |p: &Self, what: &str| ParseError::Syntax {
            position: p.pos - 1,
            message: format!("{what} `{t}`"),
        };
        if matches!(t, "{" | "}" | "(" | ")" | "." | ";" | ",") {
            return Err(bad(self, "unexpected"));
        }
        if t.starts_with('?') || t.starts_with('$') {
            self.pos -= 1;
            return self.variable().map(Term::Variable);
        }
        if is_placeholder(t) {
            return Ok(Term::Placeholder(t.to_string()));
        }
        if t.starts_with('"') || t.starts_with('\'') {
            return parse_literal(t).map(Term::Literal).map_err(|_| bad(self, "malformed literal"));
        }
        if t == "a" && slot == Slot::Predicate {
            return Ok(Term::Relation(Iri::rdf_type()));
        }
        if is_number(t) || keyword_eq(t, "true") || keyword_eq(t, "false") {
            return Ok(Term::Literal(t.to_string()));
        }
        let iri: Iri = t.parse().map_err(|_| bad(self, "expected term, found"))?;
        if let Prefix::Other(p) = &iri.prefix {
            if p == "dct" || p == "dbc" {
                feature(&mut self.features, p);
            }
        }
        Ok(match (slot, &iri.prefix) {
            (Slot::Predicate, p) if p.is_relation() => Term::Relation(iri),
            (Slot::Predicate, _) => Term::Other(iri),
            (_, Prefix::Dbr) => Term::Entity(iri),
            (_, Prefix::Dbo) => Term::Class(iri),
            (Slot::Object { after_type: true }, _) => Term::Class(iri),
            _ => Term::Other(iri),
        })
    }

    fn modifiers(&mut self) -> Result<(), ParseError> {
        while let Some(t) = self.peek() {
            if keyword_eq(t, "GROUP") || keyword_eq(t, "ORDER") {
                let name = if keyword_eq(t, "GROUP") { "GROUP BY" } else { "ORDER BY" };
                feature(&mut self.features, name);
                self.pos += 1;
                self.expect("BY")?;
                // Grouping/ordering keys: variables or bracketed expressions.
                loop {
                    match self.peek() {
                        Some(k) if k.starts_with('?') || k.starts_with('$') => self.pos += 1,
                        Some(k) if keyword_eq(k, "ASC") || keyword_eq(k, "DESC") => {
                            self.pos += 1;
                            self.skip_balanced()?;
                        }
                        Some("(") => self.skip_balanced()?,
                        _ => break,
                    }
                }
            } else if keyword_eq(t, "HAVING") {
                feature(&mut self.features, "HAVING");
                self.pos += 1;
                self.skip_balanced()?;
            } else if keyword_eq(t, "LIMIT") || keyword_eq(t, "OFFSET") {
                feature(&mut self.features, &t.to_ascii_uppercase());
                self.pos += 1;
                let n = self.next()?;
                if !n.bytes().all(|b| b.is_ascii_digit()) {
                    self.pos -= 1;
                    return Err(self.err("expected integer"));
                }
            } else {
                return Err(self.err(&format!("unexpected `{t}` after query body")));
            }
        }
        Ok(())
    }
}

fn is_number(t: &str) -> bool {
    let body = t.strip_prefix('-').unwrap_or(t);
    !body.is_empty()
        && body.bytes().next().is_some_and(|b| b.is_ascii_digit())
        && body.bytes().all(|b| b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E')
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn count_forms() {
        let q = parse_sparql("SELECT DISTINCT COUNT (?uri) WHERE { ?uri dbo:director dbr:X }").unwrap();
        assert_eq!(q.form, QueryForm::SelectCount);
        assert_eq!(q.projection, vec!["?uri"]);
        let q = parse_sparql("SELECT (COUNT(DISTINCT ?uri) AS ?n) WHERE { ?uri dbo:director dbr:X }").unwrap();
        assert_eq!(q.form, QueryForm::SelectCount);
        assert!(q.distinct);
    }

    #[test]
    fn group_by_having_is_unsupported() {
        let q = parse_sparql(
            "SELECT DISTINCT ?uri WHERE { ?x a dbo:volcano ; dbo:locatedInArea ?uri . ?uri a dbo:Country } GROUP BY ?uri HAVING ( COUNT(?x) > 10 )",
        )
        .unwrap();
        assert_eq!(q.unsupported_features, vec!["GROUP BY", "HAVING"]);
        assert_eq!(q.patterns.len(), 3);
        assert_eq!(q.serialize(), q.raw_tokens.join(" "));
    }

    #[test]
    fn semicolon_lists_expand() {
        let q = parse_sparql("SELECT DISTINCT ?uri WHERE { ?uri a dbo:Film ; dbo:time dbr:Gangsters , dbr:Other }").unwrap();
        assert_eq!(q.patterns.len(), 3);
        assert!(q.patterns.iter().all(|p| p.subject == Term::Variable("?uri".into())));
        assert_eq!(q.patterns[0].object, Term::Class(Iri::dbo("Film")));
    }

    #[test]
    fn union_filter_dct_recorded() {
        let q = parse_sparql(
            "SELECT DISTINCT ?uri ?p WHERE { ?uri rdf:type dbo:Bird { ?uri dbo:conservationStatus \"CR\" } UNION { ?uri dct:subject dbc:Critically_endangered_animals } }",
        )
        .unwrap();
        assert_eq!(q.unsupported_features, vec!["UNION", "dct", "dbc"]);
        let q = parse_sparql("SELECT ?uri WHERE { ?uri dbo:alias ?alias FILTER contains(lcase(?alias), \"scarface\") }").unwrap();
        assert_eq!(q.unsupported_features, vec!["FILTER"]);
        assert_eq!(q.patterns.len(), 1);
    }

    #[test]
    fn star_projection_expands() {
        let q = parse_sparql("SELECT DISTINCT * WHERE { dbr:Elizabeth_II dbo:parent ?uri }").unwrap();
        assert_eq!(q.projection, vec!["?uri"]);
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_sparql("SELECT WHERE { }"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_sparql("SELECT ?x WHERE { ?x dbo:a"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_sparql("DESCRIBE ?x"), Err(ParseError::Syntax { position: 0, .. })));
        assert!(matches!(parse_sparql("SELECT ?x { ?x dbo:a ?y } junk"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_sparql(""), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn placeholders_parse() {
        let q = parse_sparql("SELECT DISTINCT ?uri WHERE { <e0> <r0> ?uri }").unwrap();
        assert_eq!(q.patterns[0].subject, Term::Placeholder("<e0>".into()));
        assert_eq!(q.patterns[0].relation, Term::Placeholder("<r0>".into()));
    }
}
