use super::ast::*;
use super::lexer::{tokenize, Tok};
use super::{KernelError, Pos};

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

/// Parses one kernel definition; anything after it is an error.
pub(crate) fn parse(src: &str) -> Result<KernelAst, KernelError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        at: 0,
    };
    let k = p.kernel()?;
    p.expect(&Tok::Eof)?;
    Ok(k)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok) -> Result<Pos, KernelError> {
        if self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(self.unexpected(&tok.to_string()))
        }
    }

    fn unexpected(&self, wanted: &str) -> KernelError {
        KernelError::syntax(self.pos(), format!("expected {wanted}, found {}", self.peek()))
    }

    fn ident(&mut self) -> Result<(String, Pos), KernelError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let pos = self.bump().1;
                Ok((name, pos))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn kernel(&mut self) -> Result<KernelAst, KernelError> {
        self.expect(&Tok::Kernel)?;
        let (name, _) = self.ident()?;
        self.expect(&Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let (pname, pos) = self.ident()?;
                self.expect(&Tok::Colon)?;
                let ty = self.param_type()?;
                params.push(Param { name: pname, ty, pos });
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(&Tok::Comma)?;
            }
        }
        let body = self.block()?;
        Ok(KernelAst { name, params, body })
    }

    fn param_type(&mut self) -> Result<ParamType, KernelError> {
        let pos = self.pos();
        let (name, _) = self.ident()?;
        match name.as_str() {
            "i32" => Ok(ParamType::I32),
            "f32" if self.eat(&Tok::LBracket) => {
                if self.eat(&Tok::RBracket) {
                    Ok(ParamType::Array1)
                } else {
                    self.expect(&Tok::Comma)?;
                    self.expect(&Tok::RBracket)?;
                    Ok(ParamType::Array2)
                }
            }
            "f32" => Ok(ParamType::F32),
            other => Err(KernelError::syntax(pos, format!("unknown type `{other}`"))),
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, KernelError> {
        self.expect(&Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if *self.peek() == Tok::Eof {
                return Err(self.unexpected("`}`"));
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, KernelError> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::For => {
                self.bump();
                let (var, _) = self.ident()?;
                self.expect(&Tok::In)?;
                self.expect(&Tok::Range)?;
                self.expect(&Tok::LParen)?;
                let bound = self.expr()?;
                self.expect(&Tok::RParen)?;
                StmtKind::For {
                    var,
                    bound,
                    body: self.block()?,
                }
            }
            Tok::While => {
                self.bump();
                let cond = self.expr()?;
                StmtKind::While {
                    cond,
                    body: self.block()?,
                }
            }
            Tok::Foreach => {
                self.bump();
                let (var, _) = self.ident()?;
                self.expect(&Tok::In)?;
                let (array, _) = self.ident()?;
                StmtKind::ForEach {
                    var,
                    array,
                    body: self.block()?,
                }
            }
            Tok::Reduce => {
                self.bump();
                let (acc, _) = self.ident()?;
                let op_pos = self.pos();
                let (op_name, _) = self.ident()?;
                let op = match op_name.as_str() {
                    "sum" => ReduceOp::Sum,
                    "product" => ReduceOp::Product,
                    "min" => ReduceOp::Min,
                    "max" => ReduceOp::Max,
                    other => {
                        return Err(KernelError::syntax(op_pos, format!("unknown reduction `{other}`")));
                    }
                };
                let value = self.expr()?;
                self.expect(&Tok::Semi)?;
                StmtKind::Reduce { acc, op, value }
            }
            Tok::If => return self.if_stmt(),
            Tok::Break => {
                self.bump();
                self.expect(&Tok::Semi)?;
                StmtKind::Break
            }
            Tok::Return => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::Semi)?;
                StmtKind::Return(e)
            }
            Tok::Yield => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::Semi)?;
                StmtKind::Yield(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat(&Tok::LBracket) {
                    let indices = self.expr_list(&Tok::RBracket)?;
                    let op = match self.bump() {
                        (Tok::Assign, _) => None,
                        (Tok::PlusAssign, _) => Some(AugOp::Add),
                        (Tok::StarAssign, _) => Some(AugOp::Mul),
                        (tok, at) => {
                            return Err(KernelError::syntax(
                                at,
                                format!("expected `=`, `+=` or `*=`, found {tok}"),
                            ));
                        }
                    };
                    let value = self.expr()?;
                    self.expect(&Tok::Semi)?;
                    match op {
                        None => StmtKind::Store {
                            array: name,
                            indices,
                            value,
                        },
                        Some(op) => StmtKind::AugStore {
                            array: name,
                            indices,
                            op,
                            value,
                        },
                    }
                } else {
                    self.expect(&Tok::Assign)?;
                    let value = self.expr()?;
                    self.expect(&Tok::Semi)?;
                    StmtKind::Assign { name, value }
                }
            }
            _ => return Err(self.unexpected("statement")),
        };
        Ok(Stmt { kind, pos })
    }

    fn if_stmt(&mut self) -> Result<Stmt, KernelError> {
        let pos = self.expect(&Tok::If)?;
        let cond = self.expr()?;
        let then_body = self.block()?;
        let else_body = if self.eat(&Tok::Else) {
            if *self.peek() == Tok::If {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt {
            kind: StmtKind::If {
                cond,
                then_body,
                else_body,
            },
            pos,
        })
    }

    fn expr_list(&mut self, close: &Tok) -> Result<Vec<Expr>, KernelError> {
        let mut items = Vec::new();
        if self.eat(close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat(close) {
                return Ok(items);
            }
            self.expect(&Tok::Comma)?;
        }
    }

    fn expr(&mut self) -> Result<Expr, KernelError> {
        self.binary(0)
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_level: u8) -> Result<Expr, KernelError> {
        let mut lhs = self.unary()?;
        loop {
            let (op, level) = match self.peek() {
                Tok::OrOr => (BinOp::Or, 0),
                Tok::AndAnd => (BinOp::And, 1),
                Tok::EqEq => (BinOp::Eq, 2),
                Tok::Ne => (BinOp::Ne, 2),
                Tok::Lt => (BinOp::Lt, 3),
                Tok::Le => (BinOp::Le, 3),
                Tok::Gt => (BinOp::Gt, 3),
                Tok::Ge => (BinOp::Ge, 3),
                Tok::Plus => (BinOp::Add, 4),
                Tok::Minus => (BinOp::Sub, 4),
                Tok::Star => (BinOp::Mul, 5),
                Tok::Slash => (BinOp::Div, 5),
                Tok::Percent => (BinOp::Rem, 5),
                _ => return Ok(lhs),
            };
            if level < min_level {
                return Ok(lhs);
            }
            let pos = self.bump().1;
            let rhs = self.binary(level + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                pos,
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, KernelError> {
        let pos = self.pos();
        let op = match self.peek() {
            Tok::Minus => UnOp::Neg,
            Tok::Bang => UnOp::Not,
            _ => return self.primary(),
        };
        self.bump();
        let operand = self.unary()?;
        Ok(Expr {
            kind: ExprKind::Unary {
                op,
                operand: Box::new(operand),
            },
            pos,
        })
    }

    fn primary(&mut self) -> Result<Expr, KernelError> {
        let (tok, pos) = self.bump();
        let kind = match tok {
            Tok::Float(v) => ExprKind::Float(v),
            Tok::Int(v) => ExprKind::Int(v),
            Tok::True => ExprKind::Bool(true),
            Tok::False => ExprKind::Bool(false),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                return Ok(e);
            }
            Tok::Ident(name) => {
                if self.eat(&Tok::LParen) {
                    ExprKind::Call {
                        func: name,
                        args: self.expr_list(&Tok::RParen)?,
                    }
                } else if self.eat(&Tok::LBracket) {
                    ExprKind::Index {
                        array: name,
                        indices: self.expr_list(&Tok::RBracket)?,
                    }
                } else {
                    ExprKind::Var(name)
                }
            }
            other => return Err(KernelError::syntax(pos, format!("expected expression, found {other}"))),
        };
        Ok(Expr { kind, pos })
    }
}
