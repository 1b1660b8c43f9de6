//! Operator expressions: the small algebra in which every covariance operator
//! is written.
//!
//! Surface syntax (tightest binding first): postfix adjoint `'`, tensor chains
//! `A # B`, composition by juxtaposition (or `.`), an optional leading scalar
//! `2 A` / `2*A`, and sums `A + B - C`.
//!
//! ```text
//! expr    := ["+"|"-"] term (("+"|"-") term)*
//! term    := [number ["*"]] chain (["."] chain)*
//! chain   := factor ("#" factor)*
//! factor  := primary "'"*
//! primary := atom | "(" expr ")"
//! atom    := "I" | "T" | "P" | "R" | "S[" name "]" | "Ta[" number "]" | "Pn[" integer "]"
//! ```

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A real weight function `f` used by the multiplication operator `S_f`.
#[derive(Clone)]
pub struct Weight {
    name: String,
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Weight {
    pub const BUILTIN: [&'static str; 4] = ["one", "x", "sqrtx", "1-x"];

    /// Looks up a built-in weight by name.
    pub fn named(name: &str) -> Result<Self> {
        let func: fn(f64) -> f64 = match name {
            "one" => |_| 1.0,
            "x" => |x| x,
            "sqrtx" => f64::sqrt,
            "1-x" => |x| 1.0 - x,
            _ => return Err(Error::UnknownName(format!("weight function `{name}`"))),
        };
        Ok(Weight {
            name: name.to_string(),
            func: Arc::new(func),
        })
    }

    /// An arbitrary weight. The name is what gets printed; it only re-parses
    /// when it is one of the built-ins.
    pub fn custom<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Weight {
            name: name.into(),
            func: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }
}

impl PartialEq for Weight {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Weight({})", self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// `I`
    Identity,
    /// `T`, integration from the left.
    Integrate,
    /// Integration from the right; normalizes to `T'`.
    IntegrateRight,
    /// `P`, projector onto constants.
    ConstProjector,
    /// `S[f]`
    Multiplier(Weight),
    /// `Ta[alpha]`, Riemann-Liouville integration with exponent `alpha > 1/2`.
    RiemannLiouville(f64),
    /// `Pn[m]`, projector onto polynomials of degree `<= m`.
    PolyProjector(usize),
    /// `R`, the reflection `u(x) -> u(1-x)`.
    Flip,
}

impl Atom {
    pub fn rl(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.5 {
            Ok(Atom::RiemannLiouville(alpha))
        } else {
            Err(Error::Argument(format!(
                "Riemann-Liouville exponent must exceed 1/2, got {alpha}"
            )))
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Identity => f.write_str("I"),
            Atom::Integrate => f.write_str("T"),
            Atom::IntegrateRight => f.write_str("T'"),
            Atom::ConstProjector => f.write_str("P"),
            Atom::Multiplier(w) => write!(f, "S[{}]", w.name()),
            Atom::RiemannLiouville(a) => write!(f, "Ta[{a}]"),
            Atom::PolyProjector(m) => write!(f, "Pn[{m}]"),
            Atom::Flip => f.write_str("R"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorExpr {
    Atom(Atom),
    /// Product, applied right to left like ordinary operator composition.
    Compose(Vec<OperatorExpr>),
    Adjoint(Box<OperatorExpr>),
    /// Kronecker product; the first factor acts on the first axis.
    Tensor(Vec<OperatorExpr>),
    Scale(f64, Box<OperatorExpr>),
    Sum(Vec<(f64, OperatorExpr)>),
}

use OperatorExpr as E;

impl From<Atom> for OperatorExpr {
    fn from(a: Atom) -> Self {
        E::Atom(a)
    }
}

impl OperatorExpr {
    pub fn identity() -> Self {
        E::Atom(Atom::Identity)
    }

    pub fn t() -> Self {
        E::Atom(Atom::Integrate)
    }

    pub fn p() -> Self {
        E::Atom(Atom::ConstProjector)
    }

    pub fn flip() -> Self {
        E::Atom(Atom::Flip)
    }

    pub fn compose<I: IntoIterator<Item = OperatorExpr>>(parts: I) -> Self {
        E::Compose(parts.into_iter().collect())
    }

    pub fn tensor<I: IntoIterator<Item = OperatorExpr>>(parts: I) -> Self {
        E::Tensor(parts.into_iter().collect())
    }

    pub fn sum<I: IntoIterator<Item = (f64, OperatorExpr)>>(terms: I) -> Self {
        E::Sum(terms.into_iter().collect())
    }

    pub fn adjoint(self) -> Self {
        E::Adjoint(Box::new(self))
    }

    pub fn scale(self, c: f64) -> Self {
        E::Scale(c, Box::new(self))
    }

    /// `self - other`
    pub fn minus(self, other: OperatorExpr) -> Self {
        E::Sum(vec![(1.0, self), (-1.0, other)])
    }

    /// `self` raised to a non-negative compositional power.
    pub fn pow(self, k: usize) -> Self {
        match k {
            0 => E::identity(),
            1 => self,
            _ => E::Compose(vec![self; k]),
        }
    }

    pub fn contains_tensor(&self) -> bool {
        match self {
            E::Atom(_) => false,
            E::Tensor(_) => true,
            E::Adjoint(e) | E::Scale(_, e) => e.contains_tensor(),
            E::Compose(v) => v.iter().any(Self::contains_tensor),
            E::Sum(v) => v.iter().any(|(_, e)| e.contains_tensor()),
        }
    }

    /// Number of axes the expression acts on. A bare identity adapts to its
    /// context and counts as one axis on its own.
    pub fn dim(&self) -> Result<usize> {
        Ok(self.dim_hint()?.unwrap_or(1))
    }

    /// Like [`dim`](Self::dim), but `None` when the expression is built from
    /// identities only and so fits any number of axes.
    pub fn dim_hint(&self) -> Result<Option<usize>> {
        match self {
            E::Atom(Atom::Identity) => Ok(None),
            E::Atom(_) => Ok(Some(1)),
            E::Tensor(v) => {
                let mut total = 0;
                for e in v {
                    total += e.dim_hint()?.unwrap_or(1);
                }
                Ok(Some(total))
            }
            E::Adjoint(e) | E::Scale(_, e) => e.dim_hint(),
            E::Compose(v) => common_dim(v.iter()),
            E::Sum(v) => common_dim(v.iter().map(|(_, e)| e)),
        }
    }

    /// Canonical form: nested products, tensors and sums are flattened,
    /// scalars are folded, double adjoints cancel and `IntegrateRight` is
    /// spelled `T'`.
    pub fn normalize(&self) -> OperatorExpr {
        match self {
            E::Atom(Atom::IntegrateRight) => E::t().adjoint(),
            E::Atom(a) => E::Atom(a.clone()),
            E::Adjoint(inner) => match inner.normalize() {
                E::Adjoint(x) => *x,
                x => x.adjoint(),
            },
            E::Compose(parts) => {
                let mut flat = Vec::with_capacity(parts.len());
                for p in parts {
                    match p.normalize() {
                        E::Compose(q) => flat.extend(q),
                        q => flat.push(q),
                    }
                }
                if flat.len() == 1 {
                    flat.pop().unwrap()
                } else {
                    E::Compose(flat)
                }
            }
            E::Tensor(parts) => {
                let mut flat = Vec::with_capacity(parts.len());
                for p in parts {
                    match p.normalize() {
                        E::Tensor(q) => flat.extend(q),
                        q => flat.push(q),
                    }
                }
                if flat.len() == 1 {
                    flat.pop().unwrap()
                } else {
                    E::Tensor(flat)
                }
            }
            E::Scale(c, inner) => E::Sum(vec![(*c, (**inner).clone())]).normalize(),
            E::Sum(terms) => {
                let mut flat = Vec::with_capacity(terms.len());
                for (c, e) in terms {
                    push_term(&mut flat, *c, e.normalize());
                }
                match flat.len() {
                    1 => {
                        let (c, e) = flat.pop().unwrap();
                        if c == 1.0 {
                            e
                        } else {
                            e.scale(c)
                        }
                    }
                    _ => E::Sum(flat),
                }
            }
        }
    }

    /// Adjoint pushed down to the atoms using `(AB)* = B*A*`,
    /// `(A⊗B)* = A*⊗B*` and linearity. Symmetric atoms absorb it.
    pub fn adjoint_distributed(&self) -> OperatorExpr {
        match self {
            E::Atom(a) => match a {
                Atom::Integrate => E::t().adjoint(),
                Atom::IntegrateRight => E::t(),
                Atom::RiemannLiouville(_) => E::Atom(a.clone()).adjoint(),
                _ => E::Atom(a.clone()),
            },
            E::Adjoint(e) => (**e).clone(),
            E::Compose(v) => E::Compose(v.iter().rev().map(Self::adjoint_distributed).collect()),
            E::Tensor(v) => E::Tensor(v.iter().map(Self::adjoint_distributed).collect()),
            E::Scale(c, e) => e.adjoint_distributed().scale(*c),
            E::Sum(v) => E::Sum(
                v.iter()
                    .map(|(c, e)| (*c, e.adjoint_distributed()))
                    .collect(),
            ),
        }
    }
}

fn push_term(out: &mut Vec<(f64, OperatorExpr)>, c: f64, e: OperatorExpr) {
    match e {
        E::Sum(inner) => {
            for (ci, ei) in inner {
                out.push((c * ci, ei));
            }
        }
        E::Scale(ci, ei) => out.push((c * ci, *ei)),
        e => out.push((c, e)),
    }
}

fn common_dim<'a, I: Iterator<Item = &'a OperatorExpr>>(it: I) -> Result<Option<usize>> {
    let mut found: Option<usize> = None;
    for e in it {
        if let Some(d) = e.dim_hint()? {
            match found {
                Some(f) if f != d => {
                    return Err(Error::Dimension(format!(
                        "operands act on {f} and {d} axes"
                    )))
                }
                _ => found = Some(d),
            }
        }
    }
    Ok(found)
}

/// Replaces every atom by its `d`-fold tensor power.
pub fn lift(e: &OperatorExpr, d: usize) -> Result<OperatorExpr> {
    if d == 0 {
        return Err(Error::Argument("cannot lift to dimension 0".into()));
    }
    if e.contains_tensor() {
        return Err(Error::Argument(format!(
            "`{}` already contains a tensor product",
            format(e)
        )));
    }
    if d == 1 {
        return Ok(e.clone());
    }
    fn go(e: &OperatorExpr, d: usize) -> OperatorExpr {
        match e {
            E::Atom(a) => E::Tensor(vec![E::Atom(a.clone()); d]),
            E::Adjoint(x) => go(x, d).adjoint(),
            E::Scale(c, x) => go(x, d).scale(*c),
            E::Compose(v) => E::Compose(v.iter().map(|x| go(x, d)).collect()),
            E::Sum(v) => E::Sum(v.iter().map(|(c, x)| (*c, go(x, d))).collect()),
            E::Tensor(_) => unreachable!(),
        }
    }
    Ok(go(e, d))
}

// ---------------------------------------------------------------------------
// Printing

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Level {
    Sum,
    Term,
    Chain,
    Factor,
}

fn write_expr(out: &mut String, e: &OperatorExpr, level: Level) {
    use std::fmt::Write;
    let own = match e {
        E::Sum(_) | E::Scale(..) => Level::Sum,
        E::Compose(_) => Level::Term,
        E::Tensor(_) => Level::Chain,
        E::Atom(_) | E::Adjoint(_) => Level::Factor,
    };
    if own < level {
        out.push('(');
        write_expr(out, e, Level::Sum);
        out.push(')');
        return;
    }
    match e {
        E::Atom(a) => {
            let _ = write!(out, "{a}");
        }
        E::Adjoint(x) => {
            match **x {
                E::Atom(Atom::IntegrateRight) => {
                    out.push('(');
                    let _ = write!(out, "{}", Atom::IntegrateRight);
                    out.push(')');
                }
                _ => write_expr(out, x, Level::Factor),
            }
            out.push('\'');
        }
        E::Tensor(v) => {
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    out.push_str(" # ");
                }
                write_expr(out, x, Level::Factor);
            }
        }
        E::Compose(v) => {
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                // tensors inside products are bracketed for readability
                let lvl = if v.len() > 1 && matches!(x, E::Tensor(_)) {
                    Level::Factor
                } else {
                    Level::Chain
                };
                write_expr(out, x, lvl);
            }
        }
        E::Scale(c, x) => write_terms(out, std::iter::once((*c, &**x))),
        E::Sum(v) => write_terms(out, v.iter().map(|(c, x)| (*c, x))),
    }
}

fn write_terms<'a, I: Iterator<Item = (f64, &'a OperatorExpr)>>(out: &mut String, terms: I) {
    use std::fmt::Write;
    for (i, (c, x)) in terms.enumerate() {
        let neg = c.is_sign_negative();
        match (i, neg) {
            (0, true) => out.push('-'),
            (0, false) => {}
            (_, true) => out.push_str(" - "),
            (_, false) => out.push_str(" + "),
        }
        let mag = c.abs();
        if mag != 1.0 {
            let _ = write!(out, "{mag} ");
        }
        write_expr(out, x, Level::Term);
    }
}

/// Renders `e` in the surface syntax accepted by [`parse`].
pub fn format(e: &OperatorExpr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, Level::Sum);
    s
}

impl fmt::Display for OperatorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format(self))
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Atom(Atom),
    Num(f64),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Hash,
    Dot,
    Prime,
}

fn parse_number(s: &str, start: usize) -> Result<(f64, usize)> {
    let b = s.as_bytes();
    let mut i = start;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
        i += 1;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    let text = &s[start..i];
    let v: f64 = text.parse().map_err(|_| Error::Parse {
        pos: start,
        msg: format!("malformed number `{text}`"),
    })?;
    Ok((v, i))
}

/// Reads `[...]` right after a parameterized atom name.
fn bracket_arg<'a>(s: &'a str, pos: usize, name: &str) -> Result<(&'a str, usize)> {
    if !s[pos..].starts_with('[') {
        return Err(Error::Parse {
            pos,
            msg: format!("atom `{name}` takes one bracketed argument, e.g. {name}[..]"),
        });
    }
    match s[pos + 1..].find(']') {
        Some(off) => Ok((s[pos + 1..pos + 1 + off].trim(), pos + off + 2)),
        None => Err(Error::Parse {
            pos,
            msg: format!("unterminated argument of `{name}`"),
        }),
    }
}

fn tokenize(s: &str) -> Result<Vec<(usize, Tok)>> {
    let b = s.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'#' => Some(Tok::Hash),
            b'\'' => Some(Tok::Prime),
            b'.' if !b.get(i + 1).is_some_and(u8::is_ascii_digit) => Some(Tok::Dot),
            _ => None,
        };
        if let Some(t) = simple {
            toks.push((start, t));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            let (v, end) = parse_number(s, i)?;
            toks.push((start, Tok::Num(v)));
            i = end;
            continue;
        }
        if c.is_ascii_alphabetic() {
            let mut j = i;
            while j < b.len() && b[j].is_ascii_alphanumeric() {
                j += 1;
            }
            let word = &s[i..j];
            let (atom, end) = match word {
                "I" => (Atom::Identity, j),
                "T" => (Atom::Integrate, j),
                "P" => (Atom::ConstProjector, j),
                "R" => (Atom::Flip, j),
                "S" => {
                    let (arg, end) = bracket_arg(s, j, word)?;
                    let w = Weight::named(arg).map_err(|_| Error::Parse {
                        pos: j,
                        msg: format!(
                            "unknown weight function `{arg}` (known: {})",
                            Weight::BUILTIN.join(", ")
                        ),
                    })?;
                    (Atom::Multiplier(w), end)
                }
                "Ta" => {
                    let (arg, end) = bracket_arg(s, j, word)?;
                    let alpha: f64 = arg.parse().map_err(|_| Error::Parse {
                        pos: j + 1,
                        msg: format!("Ta expects a real exponent, got `{arg}`"),
                    })?;
                    let atom = Atom::rl(alpha).map_err(|e| Error::Parse {
                        pos: j + 1,
                        msg: e.to_string(),
                    })?;
                    (atom, end)
                }
                "Pn" => {
                    let (arg, end) = bracket_arg(s, j, word)?;
                    let m: usize = arg.parse().map_err(|_| Error::Parse {
                        pos: j + 1,
                        msg: format!("Pn expects a non-negative integer degree, got `{arg}`"),
                    })?;
                    (Atom::PolyProjector(m), end)
                }
                _ => {
                    return Err(Error::Parse {
                        pos: start,
                        msg: format!("unknown atom `{word}`"),
                    })
                }
            };
            toks.push((start, Tok::Atom(atom)));
            i = end;
            continue;
        }
        return Err(Error::Parse {
            pos: start,
            msg: format!("unexpected character `{}`", s[i..].chars().next().unwrap()),
        });
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn starts_primary(&self) -> bool {
        matches!(self.peek(), Some(Tok::Atom(_)) | Some(Tok::LParen))
    }

    fn expr(&mut self) -> Result<OperatorExpr> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        if self.eat(&Tok::Minus) {
            sign = -1.0;
        } else {
            self.eat(&Tok::Plus);
        }
        loop {
            let (c, e) = self.term()?;
            terms.push((sign * c, e));
            if self.eat(&Tok::Plus) {
                sign = 1.0;
            } else if self.eat(&Tok::Minus) {
                sign = -1.0;
            } else {
                break;
            }
        }
        if terms.len() == 1 && terms[0].0 == 1.0 {
            Ok(terms.pop().unwrap().1)
        } else {
            Ok(E::Sum(terms))
        }
    }

    fn term(&mut self) -> Result<(f64, OperatorExpr)> {
        let mut coef = 1.0;
        if let Some(Tok::Num(v)) = self.peek() {
            coef = *v;
            self.at += 1;
            self.eat(&Tok::Star);
        }
        let mut parts = vec![self.chain()?];
        loop {
            if self.eat(&Tok::Dot) || self.starts_primary() {
                parts.push(self.chain()?);
            } else {
                break;
            }
        }
        let e = if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            E::Compose(parts)
        };
        Ok((coef, e))
    }

    fn chain(&mut self) -> Result<OperatorExpr> {
        let mut parts = vec![self.factor()?];
        while self.eat(&Tok::Hash) {
            parts.push(self.factor()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            E::Tensor(parts)
        })
    }

    fn factor(&mut self) -> Result<OperatorExpr> {
        let mut e = self.primary()?;
        while self.eat(&Tok::Prime) {
            e = e.adjoint();
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<OperatorExpr> {
        match self.peek().cloned() {
            Some(Tok::Atom(a)) => {
                self.at += 1;
                Ok(E::Atom(a))
            }
            Some(Tok::LParen) => {
                self.at += 1;
                let e = self.expr()?;
                if !self.eat(&Tok::RParen) {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(Tok::Num(_)) => self.err("a scalar may only lead a term"),
            Some(t) => self.err(format!("unexpected token {t:?}")),
            None => self.err("unexpected end of input"),
        }
    }
}

/// Parses the surface syntax into a normalized expression.
pub fn parse(text: &str) -> Result<OperatorExpr> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e.normalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> OperatorExpr {
        E::t()
    }
    fn p() -> OperatorExpr {
        E::p()
    }
    fn i() -> OperatorExpr {
        E::identity()
    }

    #[test]
    fn parses_bridge_covariance() {
        let e = parse("T(I-P)T'").unwrap();
        assert_eq!(
            e,
            E::compose([t(), E::sum([(1.0, i()), (-1.0, p())]), t().adjoint()])
        );
    }

    #[test]
    fn parses_pinned_sheet() {
        let e = parse("(T#T)(I - P#P)(T#T)'").unwrap();
        let tt = E::tensor([t(), t()]);
        assert_eq!(
            e,
            E::compose([
                tt.clone(),
                E::sum([(1.0, i()), (-1.0, E::tensor([p(), p()]))]),
                tt.adjoint()
            ])
        );
        assert_eq!(e.dim().unwrap(), 2);
    }

    #[test]
    fn parses_rl_covariance() {
        let ta = E::Atom(Atom::RiemannLiouville(0.75));
        assert_eq!(
            parse("Ta[0.75] Ta[0.75]'").unwrap(),
            E::compose([ta.clone(), ta.adjoint()])
        );
    }

    #[test]
    fn parses_scalars_and_dots() {
        assert_eq!(parse("2*P").unwrap(), p().scale(2.0));
        assert_eq!(parse("2 P").unwrap(), p().scale(2.0));
        assert_eq!(parse("-P").unwrap(), p().scale(-1.0));
        assert_eq!(parse("T.T'").unwrap(), parse("T T'").unwrap());
        assert_eq!(
            parse("I - 0.5 P").unwrap(),
            E::sum([(1.0, i()), (-0.5, p())])
        );
        assert_eq!(parse("T''").unwrap(), t());
        assert_eq!(parse("1e-3 I").unwrap(), i().scale(1e-3));
    }

    #[test]
    fn parse_errors() {
        match parse("T (I - P") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 8),
            other => panic!("{other:?}"),
        }
        match parse("T Q") {
            Err(Error::Parse { pos, msg }) => {
                assert_eq!(pos, 2);
                assert!(msg.contains("unknown atom"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("Ta"), Err(Error::Parse { .. })));
        assert!(matches!(parse("Ta[0.4]"), Err(Error::Parse { .. })));
        assert!(matches!(parse("Pn[-1]"), Err(Error::Parse { .. })));
        assert!(matches!(parse("S[cosh]"), Err(Error::Parse { .. })));
        assert!(matches!(parse("T 2 T"), Err(Error::Parse { .. })));
        assert!(matches!(parse(""), Err(Error::Parse { .. })));
        assert!(matches!(parse("T + "), Err(Error::Parse { .. })));
        assert!(matches!(parse("T ) "), Err(Error::Parse { .. })));
    }

    #[test]
    fn format_examples() {
        assert_eq!(format(&E::compose([t(), t().adjoint()])), "T T'");
        assert_eq!(format(&p().scale(2.0)), "2 P");
        assert_eq!(format(&E::tensor([t(), t().adjoint()])), "T # T'");
        assert_eq!(
            format(&parse("T(I-P)T'").unwrap()),
            "T (I - P) T'"
        );
        assert_eq!(
            format(&parse("(T T') # (T (I-P) T')").unwrap()),
            "(T T') # (T (I - P) T')"
        );
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift(&t(), 3).unwrap(), E::tensor([t(), t(), t()]));
        let ip = parse("I - P").unwrap();
        assert_eq!(
            lift(&ip, 2).unwrap(),
            E::sum([(1.0, E::tensor([i(), i()])), (-1.0, E::tensor([p(), p()]))])
        );
        assert_eq!(lift(&ip, 1).unwrap(), ip);
        let pinned = lift(&parse("T(I-P)T'").unwrap(), 2).unwrap();
        assert_eq!(format(&pinned), "(T # T) (I # I - P # P) (T # T)'");
        assert!(matches!(
            lift(&E::tensor([t(), t()]), 2),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn normalization() {
        assert_eq!(t().adjoint().adjoint().normalize(), t());
        assert_eq!(
            E::Atom(Atom::IntegrateRight).normalize(),
            t().adjoint()
        );
        let nested = E::compose([t(), E::compose([p(), t()])]);
        assert_eq!(nested.normalize(), E::compose([t(), p(), t()]));
        let s = p().scale(2.0).scale(3.0);
        assert_eq!(s.normalize(), p().scale(6.0));
        assert_eq!(p().scale(1.0).normalize(), p());
        let d = E::sum([(2.0, E::sum([(1.0, i()), (-1.0, p())]))]);
        assert_eq!(d.normalize(), E::sum([(2.0, i()), (-2.0, p())]));
    }

    #[test]
    fn dims() {
        assert_eq!(parse("T # T # T").unwrap().dim().unwrap(), 3);
        assert!(matches!(
            parse("T (T # T)").unwrap().dim(),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn weights() {
        let w = Weight::named("sqrtx").unwrap();
        assert_eq!(w.eval(0.25), 0.5);
        assert_eq!(Weight::named("1-x").unwrap().eval(0.25), 0.75);
        assert!(Weight::named("cos").is_err());
        let c = Weight::custom("sq", |x| x * x);
        assert_eq!(c.eval(3.0), 9.0);
    }
}
