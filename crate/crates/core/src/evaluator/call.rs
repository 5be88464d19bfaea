//! Parsing and formatting of `func_name(key=value, ...)` call strings.
//!
//! This is the exact shape fine-tuned models are instructed to emit:
//! one call per response, comma-separated `name=value` parameters, values
//! either bare or quoted with backslash escapes.

use thiserror::Error;

/// A parsed function call. Parameter order is preserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionCall {
    pub name: String,
    pub params: Vec<(String, String)>,
}

impl FunctionCall {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: Vec::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: &str) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {position}: expected {expected}")]
pub struct ParseError {
    /// Character offset into the input.
    pub position: usize,
    pub expected: String,
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Self {
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn err<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos,
            expected: expected.to_string(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return self.err(what),
        }
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn expect(&mut self, wanted: char) -> Result<(), ParseError> {
        if self.peek() == Some(wanted) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("`{wanted}`"))
        }
    }

    fn quoted_value(&mut self, quote: char) -> Result<String, ParseError> {
        self.pos += 1; // opening quote
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return self.err("closing quote"),
                Some('\\') => match self.bump() {
                    None => return self.err("escaped character"),
                    Some(c) if c == quote || c == '\\' => out.push(c),
                    // Unknown escapes keep the backslash literally.
                    Some(c) => {
                        out.push('\\');
                        out.push(c);
                    }
                },
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
            }
        }
    }

    fn bare_value(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c != ',' && c != ')') {
            self.pos += 1;
        }
        let raw: String = self.chars[start..self.pos].iter().collect();
        let trimmed = raw.trim().to_string();
        if trimmed.is_empty() {
            self.pos = start;
            return self.err("parameter value");
        }
        Ok(trimmed)
    }
}

/// Parse exactly one call. Surrounding whitespace is tolerated; anything
/// else before or after the call is an error.
pub fn parse_call(text: &str) -> Result<FunctionCall, ParseError> {
    let mut p = Parser::new(text);
    p.skip_ws();
    let name = p.ident("function name")?;
    p.skip_ws();
    p.expect('(')?;
    p.skip_ws();

    let mut params: Vec<(String, String)> = Vec::new();
    if p.peek() == Some(')') {
        p.pos += 1;
    } else {
        loop {
            p.skip_ws();
            let key_pos = p.pos;
            let key = p.ident("parameter name")?;
            if params.iter().any(|(k, _)| *k == key) {
                return Err(ParseError {
                    position: key_pos,
                    expected: "unique parameter name".to_string(),
                });
            }
            p.skip_ws();
            p.expect('=')?;
            p.skip_ws();
            let value = match p.peek() {
                Some(q @ ('"' | '\'')) => p.quoted_value(q)?,
                Some(_) => p.bare_value()?,
                None => return p.err("parameter value"),
            };
            params.push((key, value));
            p.skip_ws();
            match p.bump() {
                Some(',') => continue,
                Some(')') => break,
                _ => {
                    p.pos = p.pos.saturating_sub(1);
                    return p.err("`,` or `)`");
                }
            }
        }
    }

    p.skip_ws();
    if p.pos != p.chars.len() {
        return p.err("end of input");
    }
    Ok(FunctionCall { name, params })
}

/// Canonical string form: double-quoted values with backslash escapes.
/// `parse_call(format_call(c)) == c` for any call with a valid name.
pub fn format_call(call: &FunctionCall) -> String {
    let mut out = String::new();
    out.push_str(&call.name);
    out.push('(');
    for (i, (key, value)) in call.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(key);
        out.push_str("=\"");
        for c in value.chars() {
            if c == '"' || c == '\\' {
                out.push('\\');
            }
            out.push(c);
        }
        out.push('"');
    }
    out.push(')');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_double_quoted_call() {
        let call = parse_call(r#"Search(content_type="Photo", extracted_prompt="elephant")"#)
            .unwrap();
        assert_eq!(call.name, "Search");
        assert_eq!(call.param("content_type"), Some("Photo"));
        assert_eq!(call.param("extracted_prompt"), Some("elephant"));
    }

    #[test]
    fn parses_empty_args() {
        let call = parse_call("F()").unwrap();
        assert_eq!(call.name, "F");
        assert!(call.params.is_empty());
    }

    #[test]
    fn parses_escaped_quotes() {
        let call = parse_call(r#"Generate(extracted_prompt="a \"quoted\" word")"#).unwrap();
        assert_eq!(call.param("extracted_prompt"), Some(r#"a "quoted" word"#));
    }

    #[test]
    fn parses_single_quotes_and_bare_values() {
        let call = parse_call("Search(content_type='Photo', limit=10)").unwrap();
        assert_eq!(call.param("content_type"), Some("Photo"));
        assert_eq!(call.param("limit"), Some("10"));
    }

    #[test]
    fn tolerates_surrounding_whitespace() {
        let call = parse_call("  Search( a = \"x\" , b = y )  ").unwrap();
        assert_eq!(call.param("a"), Some("x"));
        assert_eq!(call.param("b"), Some("y"));
    }

    #[test]
    fn rejects_trailing_garbage() {
        let err = parse_call("F() and more").unwrap_err();
        assert_eq!(err.expected, "end of input");
    }

    #[test]
    fn rejects_duplicate_params() {
        let err = parse_call("F(a=1, a=2)").unwrap_err();
        assert_eq!(err.expected, "unique parameter name");
    }

    #[test]
    fn rejects_missing_close_paren() {
        assert!(parse_call("F(a=1").is_err());
        assert!(parse_call("F(").is_err());
    }

    #[test]
    fn rejects_prose() {
        assert!(parse_call("I think the answer is Search").is_err());
        assert!(parse_call("").is_err());
    }

    #[test]
    fn format_is_canonical_and_round_trips() {
        let call = FunctionCall::new("Search")
            .with_param("content_type", "Photo")
            .with_param("extracted_prompt", "elephant");
        let s = format_call(&call);
        assert_eq!(s, r#"Search(content_type="Photo", extracted_prompt="elephant")"#);
        assert_eq!(parse_call(&s).unwrap(), call);
    }

    #[test]
    fn format_round_trips_empty_params() {
        let call = FunctionCall::new("F");
        assert_eq!(format_call(&call), "F()");
        assert_eq!(parse_call("F()").unwrap(), call);
    }

    #[test]
    fn format_quotes_commas_and_escapes() {
        let call = FunctionCall::new("G").with_param("p", r#"a, "b" \ c"#);
        let s = format_call(&call);
        assert_eq!(parse_call(&s).unwrap(), call);
    }
}
