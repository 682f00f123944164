use super::ast::*;
use super::lexer::{keyword_name, tokenize, Keyword, Token, TokenKind};
use super::{Diagnostic, DiagCode, FrontendError, Loc, Severity, SourceUnit};

/// Parses every unit of a package. Fails atomically: any failing unit fails the whole package.
pub fn parse_package(units: &[SourceUnit]) -> Result<PackageAst, FrontendError> {
    let mut diagnostics = Vec::new();
    if units.is_empty() {
        diagnostics.push(Diagnostic {
            path: Default::default(),
            line: 0,
            col: 0,
            severity: Severity::Error,
            code: DiagCode::ParseError,
            message: "no sources found".into(),
        });
        return Err(FrontendError { diagnostics });
    }
    let mut name: Option<(String, usize)> = None;
    let mut classes = Vec::new();
    for (index, unit) in units.iter().enumerate() {
        let tokens = match tokenize(unit, index as u32) {
            Ok(t) => t,
            Err(d) => {
                diagnostics.push(d);
                continue;
            }
        };
        let mut p = Parser { tokens, pos: 0, unit, unit_index: index as u32 };
        match p.unit() {
            Ok((pkg, mut cls)) => {
                match &name {
                    None => name = Some((pkg, index)),
                    Some((first, first_unit)) if *first != pkg => {
                        diagnostics.push(Diagnostic {
                            path: unit.path.clone(),
                            line: 1,
                            col: 1,
                            severity: Severity::Error,
                            code: DiagCode::PackageNameMismatch,
                            message: format!(
                                "package '{pkg}' does not match package '{first}' declared in {}",
                                units[*first_unit].path.display()
                            ),
                        });
                    }
                    Some(_) => {}
                }
                classes.append(&mut cls);
            }
            Err(d) => diagnostics.push(d),
        }
    }
    if !diagnostics.is_empty() {
        return Err(FrontendError { diagnostics });
    }
    Ok(PackageAst {
        name: name.map(|(n, _)| n).unwrap_or_default(),
        units: units.iter().map(|u| u.path.clone()).collect(),
        classes,
    })
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    unit: &'a SourceUnit,
    unit_index: u32,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&Token> {
        self.tokens.get(self.pos + n)
    }

    fn loc(&self) -> Loc {
        match self.peek() {
            Some(t) => t.loc,
            None => {
                let (line, col) = self.unit.position(self.unit.text.len());
                Loc { unit: self.unit_index, line, col }
            }
        }
    }

    fn error(&self, code: DiagCode, msg: impl Into<String>) -> Diagnostic {
        let loc = self.loc();
        Diagnostic {
            path: self.unit.path.clone(),
            line: loc.line,
            col: loc.col,
            severity: Severity::Error,
            code,
            message: msg.into(),
        }
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        let found = match self.peek().map(|t| &t.kind) {
            None => "end of file".to_string(),
            Some(TokenKind::Ident(s)) => format!("identifier '{s}'"),
            Some(TokenKind::Int(v)) => format!("integer {v}"),
            Some(TokenKind::Char(_)) => "character literal".into(),
            Some(TokenKind::Str(_)) => "string literal".into(),
            Some(TokenKind::Keyword(k)) => format!("'{}'", keyword_name(*k)),
            Some(TokenKind::Punct(p)) => format!("'{p}'"),
        };
        self.error(DiagCode::ParseError, format!("expected {wanted}, found {found}"))
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn at_kw(&self, k: Keyword) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(k))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: Keyword) -> bool {
        if self.at_kw(k) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{p}'")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn unit(&mut self) -> PResult<(String, Vec<ClassDecl>)> {
        if !self.eat_kw(Keyword::Package) {
            return Err(self.error(DiagCode::MissingPackageDirective, "source must begin with a 'package' directive"));
        }
        let name = self.ident()?;
        self.expect_punct(";")?;
        let mut classes = Vec::new();
        while self.peek().is_some() {
            if self.eat_punct(";") {
                continue;
            }
            classes.push(self.class_decl()?);
        }
        Ok((name, classes))
    }

    fn class_decl(&mut self) -> PResult<ClassDecl> {
        let loc = self.loc();
        let mut quals = ClassQuals::default();
        loop {
            if self.eat_kw(Keyword::External) {
                quals.external = true;
            } else if self.eat_kw(Keyword::Group) {
                quals.group = true;
            } else if self.eat_kw(Keyword::Public) {
                quals.public = true;
            } else {
                break;
            }
        }
        if !self.eat_kw(Keyword::Class) {
            return Err(self.unexpected("'class'"));
        }
        let name = self.ident()?;
        self.expect_punct("{")?;
        let mut class = ClassDecl { name, quals, fields: vec![], methods: vec![], enums: vec![], loc };
        while !self.eat_punct("}") {
            if self.peek().is_none() {
                return Err(self.unexpected("'}'"));
            }
            self.member(&mut class)?;
        }
        self.eat_punct(";");
        Ok(class)
    }

    fn member(&mut self, class: &mut ClassDecl) -> PResult<()> {
        let loc = self.loc();
        if self.eat_punct(";") {
            return Ok(());
        }
        let mut q = MemberQuals::default();
        loop {
            let flag = match self.peek().map(|t| &t.kind) {
                Some(TokenKind::Keyword(Keyword::Public)) => &mut q.public,
                Some(TokenKind::Keyword(Keyword::Private)) => &mut q.private,
                Some(TokenKind::Keyword(Keyword::Static)) => &mut q.is_static,
                Some(TokenKind::Keyword(Keyword::External)) => &mut q.external,
                Some(TokenKind::Keyword(Keyword::Message)) => &mut q.message,
                Some(TokenKind::Keyword(Keyword::Iterator)) => &mut q.iterator,
                Some(TokenKind::Keyword(Keyword::Copy)) => &mut q.copy,
                _ => break,
            };
            *flag = true;
            self.pos += 1;
        }
        if self.eat_kw(Keyword::Enum) {
            self.expect_punct("{")?;
            loop {
                let loc = self.loc();
                let name = self.ident()?;
                self.expect_punct("=")?;
                let value = self.expr()?;
                class.enums.push(EnumConst { name, value, loc });
                if !self.eat_punct(",") {
                    break;
                }
                if self.at_punct("}") {
                    break;
                }
            }
            self.expect_punct("}")?;
            self.eat_punct(";");
            return Ok(());
        }
        // Constructor: ClassName '('
        if let (Some(Token { kind: TokenKind::Ident(n), .. }), Some(t2)) = (self.peek(), self.peek_at(1)) {
            if *n == class.name && t2.is_punct("(") {
                self.pos += 1;
                let params = self.params()?;
                let body = self.block_body()?;
                class.methods.push(MethodDecl {
                    name: class.name.clone(),
                    quals: q,
                    params,
                    ret: TypeExpr { base: BaseType::Void, dims: 0, loc },
                    is_ctor: true,
                    body: Some(body),
                    loc,
                });
                return Ok(());
            }
        }
        let ty = self.type_expr()?;
        let name_loc = self.loc();
        let name = self.ident()?;
        if self.at_punct("(") {
            let params = self.params()?;
            let body = if self.eat_punct(";") { None } else { Some(self.block_body()?) };
            class.methods.push(MethodDecl { name, quals: q, params, ret: ty, is_ctor: false, body, loc: name_loc });
        } else {
            self.expect_punct(";")?;
            class.fields.push(FieldDecl { name, ty, quals: q, loc: name_loc });
        }
        Ok(())
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        if self.eat_punct(")") {
            return Ok(out);
        }
        loop {
            let loc = self.loc();
            let copy = self.eat_kw(Keyword::Copy);
            let ty = self.type_expr()?;
            let name = self.ident()?;
            out.push(Param { name, ty, copy, loc });
            if self.eat_punct(")") {
                return Ok(out);
            }
            self.expect_punct(",")?;
        }
    }

    fn base_type(&mut self) -> Option<BaseType> {
        let base = match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Keyword(Keyword::Void)) => BaseType::Void,
            Some(TokenKind::Keyword(Keyword::Int)) => BaseType::Int,
            Some(TokenKind::Keyword(Keyword::Bool)) => BaseType::Bool,
            Some(TokenKind::Keyword(Keyword::Char)) => BaseType::Char,
            Some(TokenKind::Keyword(Keyword::Host)) => BaseType::Host,
            Some(TokenKind::Keyword(Keyword::Queue)) => BaseType::Queue,
            Some(TokenKind::Ident(s)) => BaseType::Named(s.clone()),
            _ => return None,
        };
        self.pos += 1;
        Some(base)
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        let loc = self.loc();
        let base = self.base_type().ok_or_else(|| self.unexpected("type"))?;
        let mut dims = 0;
        while self.at_punct("[") && self.peek_at(1).is_some_and(|t| t.is_punct("]")) {
            self.pos += 2;
            dims += 1;
        }
        Ok(TypeExpr { base, dims, loc })
    }

    fn block_body(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.eat_punct("}") {
            if self.peek().is_none() {
                return Err(self.unexpected("'}'"));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn starts_decl(&self) -> bool {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Keyword(
                Keyword::Int | Keyword::Bool | Keyword::Char | Keyword::Host | Keyword::Queue | Keyword::Void,
            )) => true,
            Some(TokenKind::Ident(_)) => match self.peek_at(1) {
                Some(Token { kind: TokenKind::Ident(_), .. }) => true,
                Some(t) if t.is_punct("[") => self.peek_at(2).is_some_and(|t| t.is_punct("]")),
                _ => false,
            },
            _ => false,
        }
    }

    fn var_decl(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        let ty = self.type_expr()?;
        let name = self.ident()?;
        let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
        Ok(Stmt::VarDecl { ty, name, init, loc })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        if self.at_punct("{") {
            return Ok(Stmt::Block(self.block_body()?, loc));
        }
        if self.eat_punct(";") {
            return Ok(Stmt::Empty(loc));
        }
        if self.eat_kw(Keyword::If) {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let then = Box::new(self.stmt()?);
            let otherwise = if self.eat_kw(Keyword::Else) { Some(Box::new(self.stmt()?)) } else { None };
            return Ok(Stmt::If { cond, then, otherwise, loc });
        }
        if self.eat_kw(Keyword::While) {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let body = Box::new(self.stmt()?);
            return Ok(Stmt::While { cond, body, loc });
        }
        if self.eat_kw(Keyword::For) {
            self.expect_punct("(")?;
            let init = if self.at_punct(";") {
                None
            } else if self.starts_decl() {
                Some(Box::new(self.var_decl()?))
            } else {
                Some(Box::new(Stmt::Expr(self.expr()?)))
            };
            self.expect_punct(";")?;
            let cond = if self.at_punct(";") { None } else { Some(self.expr()?) };
            self.expect_punct(";")?;
            let mut step = Vec::new();
            if !self.at_punct(")") {
                loop {
                    step.push(self.expr()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            }
            self.expect_punct(")")?;
            let body = Box::new(self.stmt()?);
            return Ok(Stmt::For { init, cond, step, body, loc });
        }
        if self.eat_kw(Keyword::Return) {
            let value = if self.at_punct(";") { None } else { Some(self.expr()?) };
            self.expect_punct(";")?;
            return Ok(Stmt::Return(value, loc));
        }
        if self.starts_decl() {
            let s = self.var_decl()?;
            self.expect_punct(";")?;
            return Ok(s);
        }
        let e = self.expr()?;
        self.expect_punct(";")?;
        Ok(Stmt::Expr(e))
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.queued()?;
        let op = if self.eat_punct("=") {
            AssignOp::Set
        } else if self.eat_punct("+=") {
            AssignOp::Add
        } else if self.eat_punct("-=") {
            AssignOp::Sub
        } else {
            return Ok(lhs);
        };
        let rhs = self.expr()?;
        let loc = lhs.loc;
        Ok(Expr { kind: ExprKind::Assign(op, Box::new(lhs), Box::new(rhs)), loc })
    }

    fn queued(&mut self) -> PResult<Expr> {
        let lhs = self.ternary()?;
        let loc = lhs.loc;
        if self.eat_punct("<=>") {
            let rhs = self.ternary()?;
            return Ok(Expr { kind: ExprKind::QueuedEval(Box::new(lhs), Box::new(rhs)), loc });
        }
        if self.eat_punct("#>") {
            self.expect_punct("(")?;
            let target = self.expr()?;
            self.expect_punct(",")?;
            let method = self.ident()?;
            let args = self.args()?;
            self.expect_punct(")")?;
            return Ok(Expr {
                kind: ExprKind::Post { queue: Box::new(lhs), target: Box::new(target), method, args },
                loc,
            });
        }
        Ok(lhs)
    }

    fn ternary(&mut self) -> PResult<Expr> {
        let cond = self.binary(0)?;
        if self.eat_punct("?") {
            let a = self.expr()?;
            self.expect_punct(":")?;
            let b = self.ternary()?;
            let loc = cond.loc;
            return Ok(Expr { kind: ExprKind::Cond(Box::new(cond), Box::new(a), Box::new(b)), loc });
        }
        Ok(cond)
    }

    fn binop(&self, level: usize) -> Option<BinOp> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("||", BinOp::Or)],
            &[("&&", BinOp::And)],
            &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[("<", BinOp::Lt), ("<=", BinOp::Le), (">", BinOp::Gt), (">=", BinOp::Ge)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
        ];
        let t = self.peek()?;
        LEVELS[level].iter().find(|(p, _)| t.is_punct(p)).map(|(_, op)| *op)
    }

    fn binary(&mut self, level: usize) -> PResult<Expr> {
        if level == 6 {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = self.binop(level) {
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            let loc = lhs.loc;
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), loc };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        if self.eat_punct("!") {
            let e = self.unary()?;
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Not, Box::new(e)), loc });
        }
        if self.eat_punct("-") {
            let e = self.unary()?;
            return Ok(Expr { kind: ExprKind::Unary(UnOp::Neg, Box::new(e)), loc });
        }
        for (p, delta) in [("++", 1), ("--", -1)] {
            if self.eat_punct(p) {
                let e = self.unary()?;
                return Ok(Expr { kind: ExprKind::IncDec { target: Box::new(e), delta, prefix: true }, loc });
            }
        }
        self.postfix()
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        if self.eat_punct(")") {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat_punct(")") {
                return Ok(out);
            }
            self.expect_punct(",")?;
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            let loc = e.loc;
            if self.eat_punct(".") {
                let name = self.ident()?;
                if self.at_punct("(") {
                    let args = self.args()?;
                    e = Expr { kind: ExprKind::MethodCall(Box::new(e), name, args), loc };
                } else {
                    e = Expr { kind: ExprKind::Field(Box::new(e), name), loc };
                }
            } else if self.eat_punct(".+") {
                let name = self.ident()?;
                let args = self.args()?;
                e = Expr { kind: ExprKind::Iterate(Box::new(e), name, args), loc };
            } else if self.eat_punct("[") {
                let idx = self.expr()?;
                self.expect_punct("]")?;
                e = Expr { kind: ExprKind::Index(Box::new(e), Box::new(idx)), loc };
            } else if self.eat_punct("++") {
                e = Expr { kind: ExprKind::IncDec { target: Box::new(e), delta: 1, prefix: false }, loc };
            } else if self.eat_punct("--") {
                e = Expr { kind: ExprKind::IncDec { target: Box::new(e), delta: -1, prefix: false }, loc };
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        let Some(tok) = self.peek().cloned() else {
            return Err(self.unexpected("expression"));
        };
        let kind = match tok.kind {
            TokenKind::Int(v) => {
                self.pos += 1;
                ExprKind::Int(v)
            }
            TokenKind::Char(c) => {
                self.pos += 1;
                ExprKind::Char(c)
            }
            TokenKind::Str(s) => {
                self.pos += 1;
                ExprKind::Str(s)
            }
            TokenKind::Keyword(Keyword::True) => {
                self.pos += 1;
                ExprKind::Bool(true)
            }
            TokenKind::Keyword(Keyword::False) => {
                self.pos += 1;
                ExprKind::Bool(false)
            }
            TokenKind::Keyword(Keyword::Null) => {
                self.pos += 1;
                ExprKind::Null
            }
            TokenKind::Keyword(Keyword::This) => {
                self.pos += 1;
                ExprKind::This
            }
            TokenKind::Keyword(Keyword::ThisHost) => {
                self.pos += 1;
                ExprKind::ThisHost
            }
            TokenKind::Keyword(Keyword::Hosts) => {
                self.pos += 1;
                ExprKind::Hosts
            }
            TokenKind::Ident(name) => {
                self.pos += 1;
                if self.at_punct("(") {
                    let args = self.args()?;
                    ExprKind::Call(name, args)
                } else {
                    ExprKind::Name(name)
                }
            }
            TokenKind::Punct("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                return Ok(Expr { kind: e.kind, loc });
            }
            TokenKind::Keyword(Keyword::New) => {
                self.pos += 1;
                self.allocation(false, None)?
            }
            TokenKind::Keyword(Keyword::Create) => {
                self.pos += 1;
                let at = if self.eat_punct("(") {
                    let h = self.expr()?;
                    self.expect_punct(")")?;
                    Some(Box::new(h))
                } else {
                    None
                };
                self.allocation(true, at)?
            }
            _ => return Err(self.unexpected("expression")),
        };
        Ok(Expr { kind, loc })
    }

    fn allocation(&mut self, create: bool, at: Option<Box<Expr>>) -> PResult<ExprKind> {
        if self.at_kw(Keyword::Queue) && self.peek_at(1).is_some_and(|t| t.is_punct("(")) {
            self.pos += 1;
            self.expect_punct("(")?;
            self.expect_punct(")")?;
            return Ok(ExprKind::NewQueue { at });
        }
        let base = self.base_type().ok_or_else(|| self.unexpected("class or element type"))?;
        if self.at_punct("[") {
            let mut sizes = Vec::new();
            let mut extra_dims = 0;
            while self.eat_punct("[") {
                if self.eat_punct("]") {
                    extra_dims += 1;
                    continue;
                }
                if extra_dims > 0 {
                    return Err(self.unexpected("']'"));
                }
                sizes.push(self.expr()?);
                self.expect_punct("]")?;
            }
            if sizes.is_empty() {
                return Err(self.error(DiagCode::ParseError, "array allocation needs at least one size"));
            }
            if at.is_some() {
                return Err(self.error(DiagCode::ParseError, "arrays cannot be created on a remote host"));
            }
            return Ok(ExprKind::NewArray { elem: base, sizes, extra_dims });
        }
        let BaseType::Named(class) = base else {
            return Err(self.unexpected("class name"));
        };
        let args = self.args()?;
        Ok(ExprKind::New { class, args, create, at })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(src: &str) -> SourceUnit {
        SourceUnit::new("t.hlo", src)
    }

    #[test]
    fn missing_package_directive() {
        let e = parse_package(&[unit("class A {}")]).unwrap_err();
        assert_eq!(e.code(), Some(DiagCode::MissingPackageDirective));
    }

    #[test]
    fn package_name_mismatch() {
        let e = parse_package(&[unit("package a;"), SourceUnit::new("u.hlo", "package b;")]).unwrap_err();
        assert_eq!(e.code(), Some(DiagCode::PackageNameMismatch));
    }

    #[test]
    fn atomic_failure_when_one_unit_is_bad() {
        let good = unit("package p; class A { static void main() {} }");
        let bad = SourceUnit::new("b.hlo", "package p; class B { void f( }");
        let e = parse_package(&[good, bad]).unwrap_err();
        assert_eq!(e.code(), Some(DiagCode::ParseError));
        assert_eq!(e.diagnostics[0].path.to_str(), Some("b.hlo"));
    }

    #[test]
    fn precedence() {
        let ast = parse_package(&[unit("package p; class A { int f() { return 1 + 2 * 3 == 7 && !false; } }")]).unwrap();
        let body = ast.classes[0].methods[0].body.as_ref().unwrap();
        let Stmt::Return(Some(e), _) = &body[0] else { panic!() };
        let ExprKind::Binary(BinOp::And, l, _) = &e.kind else { panic!("{e:?}") };
        let ExprKind::Binary(BinOp::Eq, l, _) = &l.kind else { panic!() };
        let ExprKind::Binary(BinOp::Add, _, r) = &l.kind else { panic!() };
        assert!(matches!(r.kind, ExprKind::Binary(BinOp::Mul, _, _)));
    }

    #[test]
    fn distributed_operators() {
        let src = "package p; class A { message void m(int x) {} void f(queue q) { q #> (this, m(1)); int v = q <=> 1; hosts.+print(\"x\"); } }";
        let ast = parse_package(&[unit(src)]).unwrap();
        let body = ast.classes[0].methods[1].body.as_ref().unwrap();
        assert!(matches!(&body[0], Stmt::Expr(Expr { kind: ExprKind::Post { .. }, .. })));
        assert!(matches!(&body[1], Stmt::VarDecl { init: Some(Expr { kind: ExprKind::QueuedEval(..), .. }), .. }));
        assert!(matches!(&body[2], Stmt::Expr(Expr { kind: ExprKind::Iterate(..), .. })));
    }

    #[test]
    fn create_forms() {
        let src = "package p; external class S { void f(host h) { S a = create (h) S(); queue q = create (h) queue(); queue r = create queue(); char[][] b = create char[2][8]; char[] c = new char[0]; } }";
        let ast = parse_package(&[unit(src)]).unwrap();
        let body = ast.classes[0].methods[0].body.as_ref().unwrap();
        let kinds: Vec<_> = body
            .iter()
            .map(|s| match s {
                Stmt::VarDecl { init: Some(e), .. } => e.kind.clone(),
                _ => panic!(),
            })
            .collect();
        assert!(matches!(&kinds[0], ExprKind::New { create: true, at: Some(_), .. }));
        assert!(matches!(&kinds[1], ExprKind::NewQueue { at: Some(_) }));
        assert!(matches!(&kinds[2], ExprKind::NewQueue { at: None }));
        assert!(matches!(&kinds[3], ExprKind::NewArray { sizes, .. } if sizes.len() == 2));
        assert!(matches!(&kinds[4], ExprKind::NewArray { sizes, .. } if sizes.len() == 1));
    }
}
