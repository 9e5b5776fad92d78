use super::{BinOp, CmpOp, Dims, Expr, ExprError, Func, Predicate, Var};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        offset,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let v: f64 = lit
                .parse()
                .map_err(|_| syntax(start, format!("malformed number `{lit}`")))?;
            out.push(Token {
                tok: Tok::Num(v),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let two = if i + 1 < bytes.len() {
            &text[i..i + 2]
        } else {
            ""
        };
        let op: &'static str = match two {
            "<=" => "<=",
            ">=" => ">=",
            "==" => "==",
            "&&" => "&",
            "||" => "|",
            _ => "",
        };
        if !op.is_empty() {
            out.push(Token {
                tok: Tok::Op(op),
                offset: start,
            });
            i += 2;
            continue;
        }
        let tok = match c {
            b'+' => Tok::Op("+"),
            b'-' => Tok::Op("-"),
            b'*' => Tok::Op("*"),
            b'/' => Tok::Op("/"),
            b'^' => Tok::Op("^"),
            b'<' => Tok::Op("<"),
            b'>' => Tok::Op(">"),
            b'&' => Tok::Op("&"),
            b'|' => Tok::Op("|"),
            b'!' => Tok::Op("!"),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        out.push(Token { tok, offset: start });
        i += 1;
    }
    out.push(Token {
        tok: Tok::End,
        offset: text.len(),
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dims: Dims,
}

impl Parser {
    fn new(text: &str, dims: Dims) -> Result<Self, ExprError> {
        Ok(Self {
            toks: tokenize(text)?,
            pos: 0,
            dims,
        })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(&self.peek().tok, Tok::Op(o) if *o == op)
    }

    fn expect_end(&self) -> Result<(), ExprError> {
        let t = self.peek();
        if t.tok != Tok::End {
            return Err(syntax(t.offset, "unexpected trailing input"));
        }
        Ok(())
    }

    // sum := product (('+' | '-') product)*
    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.at_op("+") {
                BinOp::Add
            } else if self.at_op("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // product := unary (('*' | '/') unary)*
    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.at_op("*") {
                BinOp::Mul
            } else if self.at_op("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.at_op("-") {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.at_op("^") {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.sum()?;
                let close = self.bump();
                if close.tok != Tok::RParen {
                    return Err(syntax(close.offset, "expected `)`"));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    return self.call(name, t.offset);
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    _ => self.variable(&name, t.offset).map(Expr::Var),
                }
            }
            Tok::End => Err(syntax(t.offset, "unexpected end of input")),
            _ => Err(syntax(t.offset, "expected a number, variable or `(`")),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ExprError> {
        let func = Func::from_name(&name).ok_or_else(|| ExprError::UnknownIdentifier {
            name: name.clone(),
            offset,
        })?;
        self.bump(); // '('
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                args.push(self.sum()?);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                    continue;
                }
                break;
            }
        }
        let close = self.bump();
        if close.tok != Tok::RParen {
            return Err(syntax(close.offset, "expected `)` or `,`"));
        }
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                name,
                expected: func.arity(),
                found: args.len(),
                offset,
            });
        }
        Ok(Expr::Call(func, args))
    }

    fn variable(&self, name: &str, offset: usize) -> Result<Var, ExprError> {
        let unknown = || ExprError::UnknownIdentifier {
            name: name.to_string(),
            offset,
        };
        let mut chars = name.chars();
        let prefix = chars.next().ok_or_else(unknown)?;
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0')
        {
            return Err(unknown());
        }
        let k: usize = digits.parse().map_err(|_| unknown())?;
        let i = k - 1;
        let d = self.dims;
        let (var, limit) = match prefix {
            'x' => (Var::State(i), d.state),
            'u' => (Var::Input(i), d.input),
            'w' => (Var::Disturb(i), d.disturb),
            'y' if d.density => (Var::Point(i), d.state),
            'm' if d.density => (Var::Mean(i), d.state),
            _ => return Err(unknown()),
        };
        if i >= limit {
            return Err(unknown());
        }
        Ok(var)
    }

    // or := and ('|' and)*
    fn pred_or(&mut self) -> Result<Predicate, ExprError> {
        let mut lhs = self.pred_and()?;
        while self.at_op("|") {
            self.bump();
            let rhs = self.pred_and()?;
            lhs = Predicate::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // and := not ('&' not)*
    fn pred_and(&mut self) -> Result<Predicate, ExprError> {
        let mut lhs = self.pred_not()?;
        while self.at_op("&") {
            self.bump();
            let rhs = self.pred_not()?;
            lhs = Predicate::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // not := '!' not | '(' or ')' | comparison
    fn pred_not(&mut self) -> Result<Predicate, ExprError> {
        if self.at_op("!") {
            self.bump();
            return Ok(Predicate::Not(Box::new(self.pred_not()?)));
        }
        if self.peek().tok == Tok::LParen {
            // Either a parenthesized predicate or a comparison whose left
            // operand starts with `(`; try the comparison first.
            let save = self.pos;
            match self.comparison() {
                Ok(p) => return Ok(p),
                Err(cmp_err) => {
                    self.pos = save;
                    self.bump();
                    let inner = match self.pred_or() {
                        Ok(p) => p,
                        Err(_) => return Err(cmp_err),
                    };
                    let close = self.bump();
                    if close.tok != Tok::RParen {
                        return Err(syntax(close.offset, "expected `)`"));
                    }
                    return Ok(inner);
                }
            }
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Predicate, ExprError> {
        let lhs = self.sum()?;
        let t = self.bump();
        let op = match t.tok {
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op("==") => CmpOp::Eq,
            _ => return Err(syntax(t.offset, "expected a comparison operator")),
        };
        let rhs = self.sum()?;
        Ok(Predicate::Cmp(lhs, op, rhs))
    }
}

/// Parses an arithmetic expression over the declared variables.
pub fn parse_expression(text: &str, dims: Dims) -> Result<Expr, ExprError> {
    let mut p = Parser::new(text, dims)?;
    let e = p.sum()?;
    p.expect_end()?;
    Ok(e)
}

/// Parses a noise density over `y1..yn` (integration point) and `m1..mn` (mean).
pub fn parse_density(text: &str, state_dims: usize) -> Result<Expr, ExprError> {
    parse_expression(
        text,
        Dims {
            state: state_dims,
            input: 0,
            disturb: 0,
            density: true,
        },
    )
}

/// Parses a boolean region predicate over `x1..xn`.
pub fn parse_predicate(text: &str, state_dims: usize) -> Result<Predicate, ExprError> {
    let mut p = Parser::new(text, Dims::new(state_dims, 0, 0))?;
    let e = p.pred_or()?;
    p.expect_end()?;
    Ok(e)
}
