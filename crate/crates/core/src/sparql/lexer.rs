use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexError {
    #[error("unbalanced quote starting at byte {0}")]
    UnbalancedQuote(usize),
}

const PUNCT: &[char] = &['{', '}', '(', ')', ';', ',', '.'];

/// Splits SPARQL text into tokens. Keywords, braces, punctuation,
/// prefixed names, `<...>` IRIs (including `<e0>`-style placeholders),
/// variables and complete literals (with any `@lang` or `^^type` suffix)
/// each become one token.
pub fn tokenize_sparql(text: &str) -> Result<Vec<String>, LexError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if PUNCT.contains(&c) && !(c == '.' && chars.get(i + 1).is_some_and(|(_, n)| n.is_ascii_digit())) {
            tokens.push(c.to_string());
            i += 1;
            continue;
        }
        if c == '"' || c == '\'' {
            let mut j = i + 1;
            let mut escaped = false;
            let mut closed = false;
            while j < chars.len() {
                let ch = chars[j].1;
                if escaped {
                    escaped = false;
                } else if ch == '\\' {
                    escaped = true;
                } else if ch == c {
                    closed = true;
                    break;
                }
                j += 1;
            }
            if !closed {
                return Err(LexError::UnbalancedQuote(start));
            }
            j += 1;
            // Language tag or datatype suffix.
            if j < chars.len() && chars[j].1 == '@' {
                j += 1;
                while j < chars.len() && (chars[j].1.is_alphanumeric() || chars[j].1 == '-') {
                    j += 1;
                }
            } else if j + 1 < chars.len() && chars[j].1 == '^' && chars[j + 1].1 == '^' {
                j += 2;
                if j < chars.len() && chars[j].1 == '<' {
                    while j < chars.len() && chars[j].1 != '>' && !chars[j].1.is_whitespace() {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1 == '>' {
                        j += 1;
                    }
                } else {
                    while j < chars.len() && is_name_char(chars[j].1) {
                        j += 1;
                    }
                }
            }
            tokens.push(slice(text, &chars, i, j));
            i = j;
            continue;
        }
        if c == '<' {
            // `<...>` with no whitespace inside is an IRI; otherwise an operator.
            let mut j = i + 1;
            while j < chars.len() && !chars[j].1.is_whitespace() && chars[j].1 != '>' && chars[j].1 != '<' {
                j += 1;
            }
            if j > i + 1 && j < chars.len() && chars[j].1 == '>' && chars[i + 1].1 != '=' {
                tokens.push(slice(text, &chars, i, j + 1));
                i = j + 1;
                continue;
            }
            i = push_operator(text, &chars, i, &mut tokens);
            continue;
        }
        if matches!(c, '>' | '=' | '!' | '&' | '|' | '*' | '+' | '/' | '-') && !is_number_start(&chars, i) {
            i = push_operator(text, &chars, i, &mut tokens);
            continue;
        }
        if c == '?' || c == '$' {
            let mut j = i + 1;
            while j < chars.len() && (chars[j].1.is_alphanumeric() || chars[j].1 == '_') {
                j += 1;
            }
            tokens.push(slice(text, &chars, i, j));
            i = j;
            continue;
        }
        // Words: keywords, prefixed names, numbers.
        let mut j = i;
        let mut depth = 0usize;
        let mut seen_colon = false;
        while j < chars.len() {
            let ch = chars[j].1;
            if ch == ':' {
                seen_colon = true;
            }
            if ch == '(' && seen_colon && j > i && chars[j - 1].1 != ':' {
                depth += 1;
            } else if ch == ')' && depth > 0 {
                depth -= 1;
            } else if ch.is_whitespace() || matches!(ch, '{' | '}' | '(' | ')' | ';' | ',' | '"' | '<' | '>' | '=' | '!')
                || (ch == '\'' && j == i)
            {
                break;
            }
            j += 1;
        }
        // A trailing `.` before whitespace/brace/end terminates the triple.
        while j > i + 1 && chars[j - 1].1 == '.' {
            j -= 1;
        }
        if j == i {
            // Lone unrecognised character.
            j = i + 1;
        }
        tokens.push(slice(text, &chars, i, j));
        i = j;
    }
    Ok(tokens)
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | ':' | '-' | '.')
}

fn is_number_start(chars: &[(usize, char)], i: usize) -> bool {
    chars[i].1 == '-' && chars.get(i + 1).is_some_and(|(_, n)| n.is_ascii_digit())
}

fn push_operator(text: &str, chars: &[(usize, char)], i: usize, tokens: &mut Vec<String>) -> usize {
    let two = |a: char, b: char| chars[i].1 == a && chars.get(i + 1).is_some_and(|(_, n)| *n == b);
    let len = if two('<', '=') || two('>', '=') || two('!', '=') || two('&', '&') || two('|', '|') {
        2
    } else {
        1
    };
    tokens.push(slice(text, chars, i, i + len));
    i + len
}

fn slice(text: &str, chars: &[(usize, char)], from: usize, to: usize) -> String {
    let start = chars[from].0;
    let end = chars.get(to).map_or(text.len(), |(b, _)| *b);
    text[start..end].to_string()
}
