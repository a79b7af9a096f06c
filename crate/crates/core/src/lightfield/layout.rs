use super::{BitDepth, LightFieldError, Result};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Literal(String),
    Row { width: usize },
    Col { width: usize },
}

/// File naming scheme for a directory of views. The pattern uses `{r}` and
/// `{c}` placeholders, optionally zero padded as `{r:02}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub pattern: String,
    tokens: Vec<Token>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    /// Declared capture depth; overrides the depth implied by the container.
    pub bit_depth: Option<BitDepth>,
}

impl Default for Layout {
    fn default() -> Self {
        Layout::new(&Layout::default_pattern()).expect("default pattern parses")
    }
}

impl Layout {
    pub fn default_pattern() -> String {
        "v_{r:02}_{c:02}.ppm".to_string()
    }

    pub fn new(pattern: &str) -> Result<Self> {
        let tokens = parse(pattern)?;
        let rows = tokens.iter().filter(|t| matches!(t, Token::Row { .. })).count();
        let cols = tokens.iter().filter(|t| matches!(t, Token::Col { .. })).count();
        if rows != 1 || cols != 1 {
            return Err(LightFieldError::Layout(pattern.to_string()));
        }
        Ok(Layout {
            pattern: pattern.to_string(),
            tokens,
            rows: None,
            cols: None,
            bit_depth: None,
        })
    }

    pub fn with_extent(mut self, rows: usize, cols: usize) -> Self {
        self.rows = Some(rows);
        self.cols = Some(cols);
        self
    }

    pub fn with_bit_depth(mut self, bit_depth: BitDepth) -> Self {
        self.bit_depth = Some(bit_depth);
        self
    }

    pub fn file_name(&self, row: usize, col: usize) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            match t {
                Token::Literal(s) => out.push_str(s),
                Token::Row { width } => out.push_str(&format!("{row:0width$}")),
                Token::Col { width } => out.push_str(&format!("{col:0width$}")),
            }
        }
        out
    }

    /// Inverse of [`Layout::file_name`]; `None` when `name` does not match.
    pub fn parse_name(&self, name: &str) -> Option<(usize, usize)> {
        let mut rest = name;
        let mut row = None;
        let mut col = None;
        for (i, t) in self.tokens.iter().enumerate() {
            match t {
                Token::Literal(s) => rest = rest.strip_prefix(s.as_str())?,
                Token::Row { .. } | Token::Col { .. } => {
                    // digits run until the next literal (or end)
                    let end = match self.tokens.get(i + 1) {
                        Some(Token::Literal(next)) => rest.find(next.as_str())?,
                        _ => rest.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(rest.len()),
                    };
                    let digits = &rest[..end];
                    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                        return None;
                    }
                    let v = digits.parse().ok()?;
                    if matches!(t, Token::Row { .. }) {
                        row = Some(v);
                    } else {
                        col = Some(v);
                    }
                    rest = &rest[end..];
                }
            }
        }
        if rest.is_empty() {
            Some((row?, col?))
        } else {
            None
        }
    }

    pub(super) fn discover_extent(&self, dir: &Path) -> Result<(usize, usize)> {
        let mut rows = 0;
        let mut cols = 0;
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if let Some((r, c)) = entry.file_name().to_str().and_then(|n| self.parse_name(n)) {
                rows = rows.max(r + 1);
                cols = cols.max(c + 1);
            }
        }
        Ok((self.rows.unwrap_or(rows), self.cols.unwrap_or(cols)))
    }
}

fn parse(pattern: &str) -> Result<Vec<Token>> {
    let err = || LightFieldError::Layout(pattern.to_string());
    let mut tokens = Vec::new();
    let mut literal = String::new();
    let mut chars = pattern.chars();
    while let Some(ch) = chars.next() {
        if ch != '{' {
            literal.push(ch);
            continue;
        }
        let mut spec = String::new();
        loop {
            match chars.next() {
                Some('}') => break,
                Some(x) => spec.push(x),
                None => return Err(err()),
            }
        }
        let (name, width) = match spec.split_once(':') {
            Some((n, w)) => (n, w.parse::<usize>().map_err(|_| err())?),
            None => (spec.as_str(), 0),
        };
        if !literal.is_empty() {
            tokens.push(Token::Literal(std::mem::take(&mut literal)));
        }
        tokens.push(match name {
            "r" => Token::Row { width },
            "c" => Token::Col { width },
            _ => return Err(err()),
        });
    }
    if !literal.is_empty() {
        tokens.push(Token::Literal(literal));
    }
    Ok(tokens)
}
