use super::{ApList, Formula, ScltlError};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Not,
    And,
    Or,
    Next,
    Until,
    Eventually,
    BoundedEventually(u32),
    BoundedAlways(u32),
    True,
    False,
    LParen,
    RParen,
    Ident(String),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn syntax(&self, offset: usize, message: impl Into<String>) -> ScltlError {
        ScltlError::Syntax {
            offset,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, ScltlError> {
        let mut out = Vec::new();
        loop {
            let (tok, at) = self.next_token()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next_token(&mut self) -> Result<(Tok, usize), ScltlError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'!' => Some(Tok::Not),
            b'&' => Some(Tok::And),
            b'|' => Some(Tok::Or),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok((tok, start));
        }
        if !(c.is_ascii_alphabetic() || c == b'_') {
            let ch = self.src[start..].chars().next().unwrap_or('?');
            return Err(self.syntax(start, format!("unexpected character `{ch}`")));
        }
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
            self.pos += 1;
        }
        let word = &self.src[start..self.pos];
        let tok = match word {
            "X" => Tok::Next,
            "U" => Tok::Until,
            "true" => Tok::True,
            "false" => Tok::False,
            "F" | "G" => {
                if self.src[self.pos..].starts_with("<=") {
                    self.pos += 2;
                    let n = self.bound(start)?;
                    if word == "F" {
                        Tok::BoundedEventually(n)
                    } else {
                        Tok::BoundedAlways(n)
                    }
                } else if word == "F" {
                    Tok::Eventually
                } else {
                    return Err(self.syntax(start, "unbounded `G` is not co-safe; use `G<=N`"));
                }
            }
            _ => Tok::Ident(word.to_string()),
        };
        Ok((tok, start))
    }

    fn bound(&mut self, op_start: usize) -> Result<u32, ScltlError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos] == b' ' {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if digits_start == self.pos {
            return Err(self.syntax(digits_start, "expected a bound after `<=`"));
        }
        self.src[digits_start..self.pos]
            .parse()
            .map_err(|_| self.syntax(op_start, "bound does not fit in 32 bits"))
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    aps: &'a ApList,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn offset(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if t.0 != Tok::End {
            self.at += 1;
        }
        t
    }

    fn or(&mut self) -> Result<Formula, ScltlError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ScltlError> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::And {
            self.bump();
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, ScltlError> {
        let lhs = self.unary()?;
        if *self.peek() == Tok::Until {
            self.bump();
            return Ok(Formula::until(lhs, self.until()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ScltlError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Not => match self.unary()? {
                Formula::Atom(p) => Ok(Formula::NegAtom(p)),
                _ => Err(ScltlError::NegatedNonAtom { offset: at }),
            },
            Tok::Next => Ok(Formula::next(self.unary()?)),
            Tok::Eventually => Ok(Formula::eventually(self.unary()?)),
            Tok::BoundedEventually(n) => Ok(Formula::bounded_eventually(n, self.unary()?)),
            Tok::BoundedAlways(n) => Ok(Formula::bounded_always(n, self.unary()?)),
            Tok::True => Ok(Formula::True),
            Tok::False => Ok(Formula::False),
            Tok::Ident(name) => {
                if self.aps.index_of(&name).is_none() {
                    return Err(ScltlError::UnknownAtom { name, offset: at });
                }
                Ok(Formula::Atom(name))
            }
            Tok::LParen => {
                let inner = self.or()?;
                match self.bump() {
                    (Tok::RParen, _) => Ok(inner),
                    (_, at) => Err(ScltlError::Syntax {
                        offset: at,
                        message: "expected `)`".into(),
                    }),
                }
            }
            Tok::End => Err(ScltlError::Syntax {
                offset: at,
                message: "unexpected end of formula".into(),
            }),
            other => Err(ScltlError::Syntax {
                offset: at,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }
}

/// Parses formula text over the declared atomic propositions.
///
/// Precedence, tightest first: prefix operators (`!`, `X`, `F`, `F<=N`,
/// `G<=N`), then `U` (right-associative), then `&`, then `|`.
pub fn parse_formula(text: &str, aps: &ApList) -> Result<Formula, ScltlError> {
    let toks = Lexer { src: text, pos: 0 }.tokens()?;
    let mut p = Parser { toks, at: 0, aps };
    let f = p.or()?;
    if *p.peek() != Tok::End {
        return Err(ScltlError::Syntax {
            offset: p.offset(),
            message: "trailing input".into(),
        });
    }
    Ok(f)
}
