//! Parser for model expressions:
//!
//! ```text
//! EXPR := bl(INT, INT) | rt(INT) | complete(INT)
//!       | product(EXPR, EXPR) | file:PATH
//! ```
//!
//! Whitespace is allowed around tokens. A `file:` path extends to the next
//! `,` or `)` (or the end of the expression), so paths containing those
//! characters cannot be nested inside `product(...)`.

use entroric::markov::parse_edge_list;
use entroric::models::{self, Model};
use std::fmt;
use std::fs;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelExpr {
    BernoulliLaplace(u32, u32),
    RandomTransposition(u32),
    Complete(u32),
    Product(Box<ModelExpr>, Box<ModelExpr>),
    File(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.position, self.message)
    }
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, bytes: text.as_bytes(), pos: 0 }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { position: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", c as char)))
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_alphanumeric() || c == b'_')
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        self.text[start..self.pos].to_string()
    }

    fn integer(&mut self) -> Result<u32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an integer"));
        }
        self.text[start..self.pos]
            .parse()
            .map_err(|e| self.error(format!("bad integer: {e}")))
    }

    fn expr(&mut self) -> Result<ModelExpr, ParseError> {
        self.skip_ws();
        let at = self.pos;
        let head = self.ident();
        match head.as_str() {
            "bl" => {
                self.expect(b'(')?;
                let n = self.integer()?;
                self.expect(b',')?;
                let k = self.integer()?;
                self.expect(b')')?;
                Ok(ModelExpr::BernoulliLaplace(n, k))
            }
            "rt" => {
                self.expect(b'(')?;
                let n = self.integer()?;
                self.expect(b')')?;
                Ok(ModelExpr::RandomTransposition(n))
            }
            "complete" => {
                self.expect(b'(')?;
                let n = self.integer()?;
                self.expect(b')')?;
                Ok(ModelExpr::Complete(n))
            }
            "product" => {
                self.expect(b'(')?;
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                self.expect(b')')?;
                Ok(ModelExpr::Product(Box::new(a), Box::new(b)))
            }
            "file" => {
                self.skip_ws();
                if self.peek() != Some(b':') {
                    self.pos = at;
                    return Err(self.error("expected 'file:PATH'"));
                }
                self.pos += 1;
                let start = self.pos;
                while self
                    .peek()
                    .map(|c| c != b',' && c != b')')
                    .unwrap_or(false)
                {
                    self.pos += 1;
                }
                let path = self.text[start..self.pos].trim();
                if path.is_empty() {
                    return Err(self.error("empty file path"));
                }
                Ok(ModelExpr::File(path.to_string()))
            }
            "" => Err(self.error("expected a model expression")),
            other => {
                self.pos = at;
                Err(self.error(format!(
                    "unknown model '{other}'; expected bl, rt, complete, product, or file:"
                )))
            }
        }
    }
}

pub fn parse_model_expr(text: &str) -> Result<ModelExpr, ParseError> {
    let mut p = Parser::new(text);
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.error("trailing input after model expression"));
    }
    Ok(expr)
}

/// Instantiate the expression: named families delegate to the model
/// constructors, `file:` paths go through the edge-list reader.
pub fn build_model(expr: &ModelExpr) -> Result<Model, String> {
    match expr {
        ModelExpr::BernoulliLaplace(n, k) => {
            models::bernoulli_laplace(*n, *k).map_err(|e| e.to_string())
        }
        ModelExpr::RandomTransposition(n) => {
            models::random_transposition(*n).map_err(|e| e.to_string())
        }
        ModelExpr::Complete(n) => models::complete_graph(*n).map_err(|e| e.to_string()),
        ModelExpr::Product(a, b) => {
            let ma = build_model(a)?;
            let mb = build_model(b)?;
            models::product_model(&ma, &mb).map_err(|e| e.to_string())
        }
        ModelExpr::File(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {path}: {e}"))?;
            let triple = parse_edge_list(&text).map_err(|e| e.to_string())?;
            Ok(Model::from_triple(format!("file:{path}"), triple))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_grammar() {
        assert_eq!(
            parse_model_expr("bl(6,3)").unwrap(),
            ModelExpr::BernoulliLaplace(6, 3)
        );
        assert_eq!(parse_model_expr(" rt( 4 ) ").unwrap(), ModelExpr::RandomTransposition(4));
        assert_eq!(
            parse_model_expr("product(complete(2), complete(2))").unwrap(),
            ModelExpr::Product(
                Box::new(ModelExpr::Complete(2)),
                Box::new(ModelExpr::Complete(2))
            )
        );
        assert_eq!(
            parse_model_expr("product(file:a b.txt,rt(3))").unwrap(),
            ModelExpr::Product(
                Box::new(ModelExpr::File("a b.txt".into())),
                Box::new(ModelExpr::RandomTransposition(3))
            )
        );
        assert_eq!(
            parse_model_expr("file:/tmp/chain.txt").unwrap(),
            ModelExpr::File("/tmp/chain.txt".into())
        );
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["", "bl(4", "bl(4;2)", "foo(3)", "rt(4)x", "file:", "bl(-1,2)"] {
            assert!(parse_model_expr(bad).is_err(), "{bad:?} parsed");
        }
    }

    #[test]
    fn range_errors_surface_from_the_model_layer() {
        let expr = parse_model_expr("rt(9)").unwrap();
        assert!(build_model(&expr).is_err());
        let expr = parse_model_expr("bl(1,1)").unwrap();
        assert!(build_model(&expr).is_err());
    }
}
