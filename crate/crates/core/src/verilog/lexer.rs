use super::ast::{Literal, Loc};
use super::error::{FrontendError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Number(Literal),
    /// Operators and punctuation, longest match.
    Sym(&'static str),
    /// `$name`; only recognised so it can be rejected with a clear message.
    SystemName(String),
    Str,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub loc: Loc,
}

const SYMBOLS: [&str; 48] = [
    "<<<", ">>>", "===", "!==", "~^", "^~", "~&", "~|", "<<", ">>", "<=", ">=", "==", "!=", "&&",
    "||", "+:", "-:", "(", ")", "[", "]", "{", "}", ";", ",", ".", ":", "?", "@", "#", "=", "+",
    "-", "*", "/", "%", "<", ">", "!", "~", "&", "|", "^", "'", "`", "\\", "$",
];

pub fn tokenize(path: &str, src: &str) -> Result<Vec<Token>> {
    Lexer {
        path,
        src: src.as_bytes(),
        pos: 0,
        line: 1,
        col: 1,
    }
    .run()
}

struct Lexer<'a> {
    path: &'a str,
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn run(mut self) -> Result<Vec<Token>> {
        let mut tokens = Vec::new();
        loop {
            self.skip_trivia()?;
            let loc = self.loc();
            let Some(&c) = self.src.get(self.pos) else {
                tokens.push(Token {
                    kind: TokenKind::Eof,
                    loc,
                });
                return Ok(tokens);
            };
            let kind = if c.is_ascii_alphabetic() || c == b'_' {
                TokenKind::Ident(self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'$'))
            } else if c.is_ascii_digit() || (c == b'\'' && self.peek_base(self.pos + 1)) {
                TokenKind::Number(self.number(loc)?)
            } else if c == b'$' {
                self.bump();
                TokenKind::SystemName(self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_'))
            } else if c == b'"' {
                self.bump();
                while let Some(&b) = self.src.get(self.pos) {
                    self.bump();
                    if b == b'"' {
                        break;
                    }
                }
                TokenKind::Str
            } else {
                let rest = &self.src[self.pos..];
                let sym = SYMBOLS
                    .iter()
                    .find(|s| rest.starts_with(s.as_bytes()))
                    .ok_or_else(|| self.error(loc, format!("unexpected character `{}`", c as char)))?;
                for _ in 0..sym.len() {
                    self.bump();
                }
                match *sym {
                    "`" => {
                        return Err(FrontendError::UnsupportedConstruct {
                            feature: "macro usage".into(),
                            location: format!("{}:{loc}", self.path),
                        })
                    }
                    "\\" => {
                        return Err(FrontendError::UnsupportedConstruct {
                            feature: "escaped identifier".into(),
                            location: format!("{}:{loc}", self.path),
                        })
                    }
                    _ => TokenKind::Sym(sym),
                }
            };
            tokens.push(Token { kind, loc });
        }
    }

    fn loc(&self) -> Loc {
        Loc {
            line: self.line,
            col: self.col,
        }
    }

    fn error(&self, loc: Loc, message: String) -> FrontendError {
        FrontendError::Syntax {
            path: self.path.to_string(),
            line: loc.line,
            col: loc.col,
            message,
        }
    }

    fn bump(&mut self) {
        if self.src[self.pos] == b'\n' {
            self.line += 1;
            self.col = 1;
        } else if self.src[self.pos] & 0xC0 != 0x80 {
            self.col += 1;
        }
        self.pos += 1;
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && pred(self.src[self.pos]) {
            self.bump();
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn skip_trivia(&mut self) -> Result<()> {
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_whitespace() {
                self.bump();
            } else if self.src[self.pos..].starts_with(b"//") {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.bump();
                }
            } else if self.src[self.pos..].starts_with(b"/*") {
                let loc = self.loc();
                self.bump();
                self.bump();
                loop {
                    if self.pos >= self.src.len() {
                        return Err(self.error(loc, "unterminated block comment".into()));
                    }
                    if self.src[self.pos..].starts_with(b"*/") {
                        self.bump();
                        self.bump();
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
        Ok(())
    }

    /// True if position `i` (after a `'`) begins a base specifier.
    fn peek_base(&self, mut i: usize) -> bool {
        if matches!(self.src.get(i), Some(b's' | b'S')) {
            i += 1;
        }
        matches!(
            self.src.get(i),
            Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H')
        )
    }

    fn skip_spaces(&mut self) {
        while matches!(self.src.get(self.pos), Some(b' ' | b'\t')) {
            self.bump();
        }
    }

    fn number(&mut self, loc: Loc) -> Result<Literal> {
        let mut text = String::new();
        let mut width = None;
        if self.src[self.pos].is_ascii_digit() {
            let digits = self.take_while(|b| b.is_ascii_digit() || b == b'_');
            text.push_str(&digits);
            if self.src.get(self.pos) == Some(&b'.') || matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
                return Err(FrontendError::UnsupportedConstruct {
                    feature: "real number literal".into(),
                    location: format!("{}:{loc}", self.path),
                });
            }
            let save = (self.pos, self.line, self.col);
            self.skip_spaces();
            if self.src.get(self.pos) == Some(&b'\'') && self.peek_base(self.pos + 1) {
                let w: u32 = digits
                    .replace('_', "")
                    .parse()
                    .map_err(|_| self.error(loc, format!("bad literal width `{digits}`")))?;
                if w == 0 {
                    return Err(self.error(loc, "zero-width literal".into()));
                }
                width = Some(w);
            } else {
                (self.pos, self.line, self.col) = save;
                let value = digits.replace('_', "").parse::<u64>().ok();
                return Ok(Literal {
                    text,
                    width: None,
                    value,
                });
            }
        }
        // '[s]<base><digits>
        self.bump();
        text.push('\'');
        if matches!(self.src.get(self.pos), Some(b's' | b'S')) {
            text.push(self.src[self.pos] as char);
            self.bump();
        }
        let base_ch = self.src[self.pos];
        text.push(base_ch as char);
        self.bump();
        self.skip_spaces();
        let radix = match base_ch.to_ascii_lowercase() {
            b'b' => 2,
            b'o' => 8,
            b'd' => 10,
            _ => 16,
        };
        let digits = self.take_while(|b| b.is_ascii_hexdigit() || matches!(b, b'_' | b'x' | b'X' | b'z' | b'Z' | b'?'));
        if digits.is_empty() {
            return Err(self.error(loc, "missing digits in based literal".into()));
        }
        text.push_str(&digits);
        let mut value: Option<u64> = Some(0);
        for ch in digits.chars().filter(|&c| c != '_') {
            match ch.to_digit(radix) {
                Some(d) => value = value.map(|v| v.wrapping_mul(radix as u64).wrapping_add(d as u64)),
                None if matches!(ch, 'x' | 'X' | 'z' | 'Z' | '?') => value = None,
                None => return Err(self.error(loc, format!("invalid digit `{ch}` for base {radix}"))),
            }
        }
        if let (Some(w), Some(v)) = (width, value) {
            if w < 64 {
                value = Some(v & ((1u64 << w) - 1));
            }
        }
        Ok(Literal { text, width, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize("t.v", src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn based_literals() {
        let toks = kinds("32'h0010_0073 4'b10x1 'd7 8 'hff 12");
        let lits: Vec<_> = toks
            .iter()
            .filter_map(|k| match k {
                TokenKind::Number(l) => Some((l.width, l.value)),
                _ => None,
            })
            .collect();
        assert_eq!(
            lits,
            vec![
                (Some(32), Some(0x0010_0073)),
                (Some(4), None),
                (None, Some(7)),
                (Some(8), Some(0xff)),
                (None, Some(12)),
            ]
        );
    }

    #[test]
    fn longest_match_symbols() {
        assert_eq!(
            kinds("a <<< b !== c ~^ d"),
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Sym("<<<"),
                TokenKind::Ident("b".into()),
                TokenKind::Sym("!=="),
                TokenKind::Ident("c".into()),
                TokenKind::Sym("~^"),
                TokenKind::Ident("d".into()),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("t.v", "module\n  m;").unwrap();
        assert_eq!(toks[1].loc, Loc { line: 2, col: 3 });
    }

    #[test]
    fn unterminated_comment_is_syntax_error() {
        assert!(matches!(
            tokenize("t.v", "/* open"),
            Err(FrontendError::Syntax { line: 1, col: 1, .. })
        ));
    }
}
