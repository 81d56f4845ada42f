//! Parser for the `name(key=value, ...)` notation used by metric and drift
//! specifications, e.g. `conformal(phi="0.5*cos(2*pi*x)")` or
//! `flat(gram=[[1,0],[0,2]])`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_vec(&self) -> Option<Vec<f64>> {
        match self {
            Value::List(items) => items.iter().map(Value::as_f64).collect(),
            Value::Num(v) => Some(vec![*v]),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Value::List(rows) => rows.iter().map(Value::as_vec).collect(),
            _ => None,
        }
    }

    pub fn as_str_list(&self) -> Option<Vec<String>> {
        match self {
            Value::List(items) => items.iter().map(|v| v.as_str().map(str::to_string)).collect(),
            Value::Str(s) => Some(vec![s.clone()]),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CallSpec {
    pub name: String,
    pub args: Vec<(String, Value)>,
}

impl CallSpec {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Cursor { src, pos: 0 };
        let name = p.ident()?;
        let mut args = Vec::new();
        p.ws();
        if p.eat('(') {
            p.ws();
            if !p.eat(')') {
                loop {
                    let key = p.ident()?;
                    p.ws();
                    if !p.eat('=') {
                        return Err(p.error("expected '='"));
                    }
                    let value = p.value()?;
                    args.push((key, value));
                    p.ws();
                    if p.eat(')') {
                        break;
                    }
                    if !p.eat(',') {
                        return Err(p.error("expected ',' or ')'"));
                    }
                }
            }
        }
        p.ws();
        if p.pos != src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(CallSpec { name, args })
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.args.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn require(&self, key: &str) -> Result<&Value> {
        self.get(key)
            .ok_or_else(|| Error::Invalid(format!("{}(...) requires argument '{key}'", self.name)))
    }

    /// Rejects arguments outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.args {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Invalid(format!(
                    "{}(...) does not accept argument '{k}'",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            line: 1,
            column: self.pos + 1,
            message: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected identifier"));
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn value(&mut self) -> Result<Value> {
        self.ws();
        match self.peek() {
            Some('[') => {
                self.pos += 1;
                let mut items = Vec::new();
                self.ws();
                if self.eat(']') {
                    return Ok(Value::List(items));
                }
                loop {
                    items.push(self.value()?);
                    self.ws();
                    if self.eat(']') {
                        return Ok(Value::List(items));
                    }
                    if !self.eat(',') {
                        return Err(self.error("expected ',' or ']'"));
                    }
                }
            }
            Some(q @ ('"' | '\'')) => {
                self.pos += 1;
                let start = self.pos;
                while self.peek().is_some_and(|c| c != q) {
                    self.pos += self.peek().map_or(1, char::len_utf8);
                }
                if !self.eat(q) {
                    return Err(self.error("unterminated string"));
                }
                Ok(Value::Str(self.src[start..self.pos - 1].to_string()))
            }
            Some(_) => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
                {
                    self.pos += 1;
                }
                self.src[start..self.pos]
                    .parse()
                    .map(Value::Num)
                    .map_err(|_| {
                        self.pos = start;
                        self.error("expected number, string or list")
                    })
            }
            None => Err(self.error("unexpected end of input")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_lists_and_strings() {
        let c = CallSpec::parse(r#"flat(gram=[[1, 0.5], [0.5, 2]])"#).unwrap();
        assert_eq!(c.name, "flat");
        assert_eq!(
            c.get("gram").unwrap().as_matrix().unwrap(),
            vec![vec![1.0, 0.5], vec![0.5, 2.0]]
        );
        let c = CallSpec::parse(r#"stream(hbar=[0.2, 0], psi="cos(2*pi*y)/(2*pi)")"#).unwrap();
        assert_eq!(c.get("psi").unwrap().as_str(), Some("cos(2*pi*y)/(2*pi)"));
        assert_eq!(c.get("hbar").unwrap().as_vec(), Some(vec![0.2, 0.0]));
    }

    #[test]
    fn bare_name_and_errors() {
        assert_eq!(CallSpec::parse("zero").unwrap().args.len(), 0);
        assert!(CallSpec::parse("flat(gram=").is_err());
        assert!(CallSpec::parse("flat(gram=[1,2)").is_err());
        match CallSpec::parse("diag(gxx=\"1\" gyy=\"2\")") {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 14),
            other => panic!("{other:?}"),
        }
    }
}
