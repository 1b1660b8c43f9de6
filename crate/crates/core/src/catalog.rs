//! Named Gaussian processes and fields, and the registry of spectral
//! equivalences to verify.
//!
//! Covariances are built from the left-integration operator `T`, the constant
//! projector `P` and friends; multivariate versions replace every atom by its
//! tensor power. Process names follow a small grammar:
//!
//! ```text
//! process := wrapper '(' process ')' | base
//! wrapper := "int-left" | "int-right" | "centered" | "detrended[" n "]"
//! base    := ident [ '[' arg ']' ]
//! ```

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::opexpr::{format, lift, parse, Atom, OperatorExpr as E, Weight};

/// Base process names understood by [`covariance_expr`].
pub const BASE_NAMES: [&str; 14] = [
    "wiener",
    "brownian-sheet",
    "inverted-sheet",
    "bridge",
    "pinned-sheet",
    "pillow",
    "kiefer",
    "rl",
    "rl-bridge",
    "pinned-a",
    "centered-a",
    "weighted",
    "stoch-int",
    "bridged-int-wiener",
];

pub const WRAPPER_NAMES: [&str; 4] = ["int-left", "int-right", "centered", "detrended"];

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub dim: usize,
    pub covariance: E,
}

impl ProcessSpec {
    fn new(name: impl Into<String>, dim: usize, covariance: E) -> Self {
        ProcessSpec {
            name: name.into(),
            params: BTreeMap::new(),
            dim,
            covariance,
        }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

fn param<'a>(params: &'a BTreeMap<String, String>, key: &str, name: &str) -> Result<&'a str> {
    params
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Argument(format!("`{name}` needs the parameter `{key}`")))
}

fn real_param(params: &BTreeMap<String, String>, key: &str, name: &str) -> Result<f64> {
    let raw = param(params, key, name)?;
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Argument(format!("`{key}` of `{name}` is not a real number: {raw}")))
}

fn order_param(params: &BTreeMap<String, String>, key: &str, name: &str) -> Result<usize> {
    let raw = param(params, key, name)?;
    raw.trim()
        .parse::<usize>()
        .map_err(|_| Error::Argument(format!("`{key}` of `{name}` is not an order: {raw}")))
}

fn one_dimensional(name: &str, d: usize) -> Result<()> {
    if d != 1 {
        return Err(Error::Dimension(format!("`{name}` is only defined for d = 1, got d = {d}")));
    }
    Ok(())
}

fn t() -> E {
    E::t()
}

fn tt() -> E {
    E::t().adjoint()
}

fn centered_by(q: E) -> E {
    E::identity().minus(q)
}

/// `I - a P`
fn one_minus_ap(a: f64) -> E {
    centered_by(E::p().scale(a))
}

fn rl_atom(alpha: f64) -> Result<E> {
    Ok(E::Atom(Atom::rl(alpha)?))
}

fn weight(name: &str) -> Result<E> {
    Ok(E::Atom(Atom::Multiplier(Weight::named(name)?)))
}

fn lifted(e: E, d: usize) -> Result<E> {
    lift(&e, d)
}

/// Covariance of a base process with explicit parameters.
///
/// Parameter keys: `alpha` for `rl` and `rl-bridge`, `a` for `pinned-a` and
/// `centered-a`, `f` (a built-in weight name) for `weighted` and `stoch-int`,
/// `n` for `bridged-int-wiener`.
pub fn covariance_expr(name: &str, params: &BTreeMap<String, String>, d: usize) -> Result<ProcessSpec> {
    if d == 0 {
        return Err(Error::Argument("dimension must be positive".into()));
    }
    let spec = match name {
        "wiener" | "brownian-sheet" => {
            ProcessSpec::new(name, d, lifted(E::compose([t(), tt()]), d)?)
        }
        "inverted-sheet" => ProcessSpec::new(name, d, lifted(E::compose([tt(), t()]), d)?),
        "bridge" => {
            one_dimensional(name, d)?;
            ProcessSpec::new(name, d, parse("T(I-P)T'")?)
        }
        "pinned-sheet" => ProcessSpec::new(name, d, lifted(parse("T(I-P)T'")?, d)?),
        "pillow" => {
            let bridge = E::tensor(vec![centered_by(E::p()); d]);
            let cov = if d == 1 {
                parse("T(I-P)T'")?
            } else {
                E::compose([lifted(t(), d)?, bridge, lifted(tt(), d)?])
            };
            ProcessSpec::new(name, d, cov)
        }
        "kiefer" => {
            if d != 2 {
                return Err(Error::Dimension(format!("`kiefer` is a field on [0,1]^2, got d = {d}")));
            }
            ProcessSpec::new(name, d, E::tensor([parse("T T'")?, parse("T(I-P)T'")?]))
        }
        "rl" | "rl-bridge" => {
            let alpha = real_param(params, "alpha", name)?;
            let ta = rl_atom(alpha)?;
            let middle = if name == "rl" {
                vec![ta.clone(), ta.adjoint()]
            } else {
                vec![ta.clone(), centered_by(E::p()), ta.adjoint()]
            };
            ProcessSpec::new(name, d, lifted(E::compose(middle), d)?).with("alpha", alpha)
        }
        "pinned-a" | "centered-a" => {
            let a = real_param(params, "a", name)?;
            let q = one_minus_ap(a);
            let cov = if name == "pinned-a" {
                E::compose([t(), q.clone(), q, tt()])
            } else {
                E::compose([q.clone(), t(), tt(), q])
            };
            ProcessSpec::new(name, d, lifted(cov, d)?).with("a", a)
        }
        "weighted" | "stoch-int" => {
            let f = param(params, "f", name)?;
            let s = weight(f)?;
            let cov = if name == "weighted" {
                E::compose([s.clone(), tt(), centered_by(E::p()), t(), s])
            } else {
                E::compose([t(), s.clone(), s, tt()])
            };
            ProcessSpec::new(name, d, lifted(cov, d)?).with("f", f)
        }
        "bridged-int-wiener" => {
            one_dimensional(name, d)?;
            let n = order_param(params, "n", name)?;
            let cov = E::compose([
                t().pow(n + 1),
                centered_by(E::Atom(Atom::PolyProjector(n))),
                tt().pow(n + 1),
            ]);
            ProcessSpec::new(name, d, cov).with("n", n)
        }
        _ => return Err(Error::UnknownName(format!("process `{name}`"))),
    };
    Ok(ProcessSpec {
        covariance: spec.covariance.normalize(),
        ..spec
    })
}

/// Wraps a covariance `K` into `T K T'`.
pub fn integrate_left(inner: &ProcessSpec) -> Result<ProcessSpec> {
    let d = inner.dim;
    let cov = E::compose([lifted(t(), d)?, inner.covariance.clone(), lifted(tt(), d)?]);
    Ok(ProcessSpec::new(format!("int-left({})", inner.name), d, cov.normalize()))
}

/// Wraps a covariance `K` into `T' K T`.
pub fn integrate_right(inner: &ProcessSpec) -> Result<ProcessSpec> {
    let d = inner.dim;
    let cov = E::compose([lifted(tt(), d)?, inner.covariance.clone(), lifted(t(), d)?]);
    Ok(ProcessSpec::new(format!("int-right({})", inner.name), d, cov.normalize()))
}

/// Wraps a covariance `K` into `(I - P) K (I - P)`.
pub fn centered(inner: &ProcessSpec) -> Result<ProcessSpec> {
    let d = inner.dim;
    let q = lifted(centered_by(E::p()), d)?;
    let cov = E::compose([q.clone(), inner.covariance.clone(), q]);
    Ok(ProcessSpec::new(format!("centered({})", inner.name), d, cov.normalize()))
}

/// Removes the `L₂` projection onto polynomials of degree `<= n`.
pub fn detrended(inner: &ProcessSpec, n: usize) -> Result<ProcessSpec> {
    one_dimensional("detrended", inner.dim)?;
    let q = centered_by(E::Atom(Atom::PolyProjector(n)));
    let cov = E::compose([q.clone(), inner.covariance.clone(), q]);
    Ok(ProcessSpec::new(format!("detrended[{n}]({})", inner.name), 1, cov.normalize()).with("n", n))
}

fn split_bracket(text: &str) -> Result<(&str, Option<&str>, &str)> {
    match text.find('[') {
        None => Ok((text, None, "")),
        Some(open) => {
            let close = text[open..]
                .find(']')
                .map(|c| open + c)
                .ok_or_else(|| Error::Parse {
                    pos: open,
                    msg: "unclosed `[`".into(),
                })?;
            Ok((&text[..open], Some(&text[open + 1..close]), &text[close + 1..]))
        }
    }
}

fn base_param_key(name: &str) -> Option<&'static str> {
    match name {
        "rl" | "rl-bridge" => Some("alpha"),
        "pinned-a" | "centered-a" => Some("a"),
        "weighted" | "stoch-int" => Some("f"),
        "bridged-int-wiener" => Some("n"),
        _ => None,
    }
}

/// Resolves a process name such as `int-left(pinned-sheet)` or `rl[0.75]`.
pub fn process(text: &str, d: usize) -> Result<ProcessSpec> {
    let text = text.trim();
    if let Some(open) = text.find('(') {
        if !text.ends_with(')') {
            return Err(Error::Parse {
                pos: text.len(),
                msg: "expected `)` closing the wrapped process".into(),
            });
        }
        let inner = process(&text[open + 1..text.len() - 1], d)?;
        let (wrapper, arg, rest) = split_bracket(text[..open].trim())?;
        if !rest.trim().is_empty() {
            return Err(Error::Parse {
                pos: open,
                msg: format!("unexpected `{rest}` before `(`"),
            });
        }
        return match (wrapper, arg) {
            ("int-left", None) => integrate_left(&inner),
            ("int-right", None) => integrate_right(&inner),
            ("centered", None) => centered(&inner),
            ("detrended", Some(n)) => {
                let n = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::Argument(format!("detrending order `{n}` is not an integer")))?;
                detrended(&inner, n)
            }
            ("detrended", None) => Err(Error::Argument("`detrended` needs an order, e.g. detrended[1](...)".into())),
            _ => Err(Error::UnknownName(format!("wrapper `{}`", &text[..open]))),
        };
    }
    let (name, arg, rest) = split_bracket(text)?;
    if !rest.trim().is_empty() {
        return Err(Error::Parse {
            pos: text.len() - rest.len(),
            msg: format!("unexpected `{rest}`"),
        });
    }
    let mut params = BTreeMap::new();
    match (base_param_key(name), arg) {
        (Some(key), Some(v)) => {
            params.insert(key.to_string(), v.trim().to_string());
        }
        (None, Some(_)) if BASE_NAMES.contains(&name) => {
            return Err(Error::Argument(format!("`{name}` takes no parameter")))
        }
        _ => {}
    }
    let mut spec = covariance_expr(name, &params, d)?;
    spec.name = text.to_string();
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exactness {
    MatrixExact,
    ContinuumOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremPair {
    /// Unique label, e.g. `thm3` or `rel-a[0.5]`.
    pub id: String,
    pub lhs: ProcessSpec,
    pub rhs: ProcessSpec,
    pub expected: bool,
    pub exactness: Exactness,
    /// The rhs covariance is conjugated by the flip `x -> 1 - x`.
    pub flipped: bool,
}

impl TheoremPair {
    pub fn dim(&self) -> usize {
        self.lhs.dim
    }

    /// The id without its bracketed parameter.
    pub fn family(&self) -> &str {
        self.id.split('[').next().unwrap_or(&self.id)
    }
}

fn pair_of(
    id: String,
    d: usize,
    (lhs_name, lhs): (&str, E),
    (rhs_name, rhs): (&str, E),
    flipped: bool,
) -> Result<TheoremPair> {
    let (lhs, rhs) = if lhs.contains_tensor() || rhs.contains_tensor() {
        (lhs, rhs)
    } else {
        (lifted(lhs, d)?, lifted(rhs, d)?)
    };
    let rhs = if flipped {
        let r = lifted(E::flip(), d)?;
        E::compose([r.clone(), rhs, r])
    } else {
        rhs
    };
    Ok(TheoremPair {
        id,
        lhs: ProcessSpec::new(lhs_name, d, lhs.normalize()),
        rhs: ProcessSpec::new(rhs_name, d, rhs.normalize()),
        expected: true,
        exactness: Exactness::MatrixExact,
        flipped,
    })
}

/// Families of [`theorem_pairs`], each with its parameter values and the
/// dimensions of the default suite.
pub const FAMILIES: [(&str, &[&str], &[usize]); 16] = [
    ("eq1", &[], &[1]),
    ("thm1", &["x", "sqrtx", "1-x"], &[1]),
    ("thm2", &["0.75", "1.5", "2.5"], &[1]),
    ("thm3", &[], &[1, 2, 3]),
    ("rel-a", &["-1", "0.5", "1", "2"], &[1, 2]),
    ("pillow", &[], &[2, 3]),
    ("kiefer", &[], &[2]),
    ("rem1", &["x", "sqrtx"], &[2]),
    ("thm4-left", &[], &[1, 2]),
    ("thm4-right", &[], &[1, 2]),
    ("rem3", &["2", "3"], &[1, 2]),
    ("thm5-left", &[], &[1, 2]),
    ("thm5-right", &[], &[1, 2]),
    ("rem4", &["2", "3"], &[1, 2]),
    ("thm6", &[], &[1, 2]),
    ("thm7", &["0", "1", "2", "3"], &[1]),
];

/// One instance of a family at dimension `d`; `arg` is the bracketed
/// parameter for parameterized families.
pub fn theorem_pair(family: &str, arg: Option<&str>, d: usize) -> Result<TheoremPair> {
    if d == 0 {
        return Err(Error::Argument("dimension must be positive".into()));
    }
    let id = match arg {
        Some(a) => format!("{family}[{a}]"),
        None => family.to_string(),
    };
    let needs_arg = |what: &str| -> Result<&str> {
        arg.ok_or_else(|| Error::Argument(format!("`{family}` needs a parameter ({what})")))
    };
    let order = |what: &str| -> Result<usize> {
        let raw = needs_arg(what)?;
        raw.trim()
            .parse()
            .map_err(|_| Error::Argument(format!("`{family}` order `{raw}` is not an integer")))
    };
    let q = || centered_by(E::p());
    let flat = |d_req: usize| -> Result<()> {
        if d != d_req {
            return Err(Error::Dimension(format!("`{family}` is stated for d = {d_req}, got d = {d}")));
        }
        Ok(())
    };
    if arg.is_some() && !FAMILIES.iter().any(|(f, args, _)| *f == family && !args.is_empty()) {
        return Err(Error::Argument(format!("`{family}` takes no parameter")));
    }
    match family {
        "eq1" => {
            flat(1)?;
            pair_of(
                id,
                d,
                ("centered(wiener)", parse("(I-P) T T' (I-P)")?),
                ("bridge", parse("T'(I-P)(I-P)T")?),
                true,
            )
        }
        "thm1" | "rem1" => {
            if family == "thm1" {
                flat(1)?;
            } else if d < 2 {
                return Err(Error::Dimension("`rem1` is the multivariate case, d >= 2".into()));
            }
            let f = needs_arg("weight name")?;
            let s = weight(f)?;
            pair_of(
                id,
                d,
                ("centered(stoch-int)", E::compose([q(), t(), s.clone(), s.clone(), tt(), q()])),
                ("weighted", E::compose([s.clone(), tt(), q(), q(), t(), s])),
                false,
            )
        }
        "thm2" => {
            flat(1)?;
            let raw = needs_arg("exponent")?;
            let alpha: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::Argument(format!("exponent `{raw}` is not a number")))?;
            let ta = rl_atom(alpha)?;
            pair_of(
                id,
                d,
                ("rl-bridge", E::compose([ta.clone(), q(), q(), ta.clone().adjoint()])),
                ("centered(rl)", E::compose([q(), ta.clone().adjoint(), ta, q()])),
                true,
            )
        }
        "thm3" => pair_of(
            id,
            d,
            ("pinned-sheet", parse("T(I-P)(I-P)T'")?),
            ("centered(brownian-sheet)", parse("(I-P)T'T(I-P)")?),
            true,
        ),
        "rel-a" => {
            let raw = needs_arg("coefficient a")?;
            let a: f64 = raw
                .trim()
                .parse()
                .ok()
                .filter(|a: &f64| a.is_finite())
                .ok_or_else(|| Error::Argument(format!("coefficient `{raw}` is not a number")))?;
            let qa = one_minus_ap(a);
            pair_of(
                id,
                d,
                ("pinned-a", E::compose([t(), qa.clone(), qa.clone(), tt()])),
                ("centered-a", E::compose([qa.clone(), tt(), t(), qa])),
                true,
            )
        }
        "pillow" => {
            if d < 2 {
                return Err(Error::Dimension("`pillow` needs d >= 2".into()));
            }
            let bridges = E::tensor(vec![q(); d]);
            let (lt, ltt) = (lifted(t(), d)?, lifted(tt(), d)?);
            pair_of(
                id,
                d,
                ("pillow", E::compose([lt.clone(), bridges.clone(), bridges.clone(), ltt.clone()])),
                ("pillow-dual", E::compose([bridges.clone(), ltt, lt, bridges])),
                true,
            )
        }
        "kiefer" => {
            flat(2)?;
            pair_of(
                id,
                d,
                ("kiefer", E::tensor([parse("T T'")?, parse("T(I-P)(I-P)T'")?])),
                ("wiener-centered-sheet", E::tensor([parse("R T T' R")?, parse("(I-P)T'T(I-P)")?])),
                true,
            )
        }
        "thm4-left" => pair_of(
            id,
            d,
            ("int-left(pinned-sheet)", parse("T T (I-P)(I-P) T' T'")?),
            ("centered(int-left(brownian-sheet))", parse("(I-P) T' T' T T (I-P)")?),
            true,
        ),
        "thm4-right" => pair_of(
            id,
            d,
            ("int-right(pinned-sheet)", parse("T' T (I-P)(I-P) T' T")?),
            ("centered(int-right(brownian-sheet))", parse("(I-P) T' T T' T (I-P)")?),
            false,
        ),
        "rem3" => {
            let n = order("number of integrations")?;
            let up = t().pow(n + 1);
            let down = tt().pow(n + 1);
            pair_of(
                id,
                d,
                ("int-left^n(pinned-sheet)", E::compose([up.clone(), q(), q(), down.clone()])),
                ("centered(int-left^n(brownian-sheet))", E::compose([q(), down, up, q()])),
                true,
            )
        }
        "thm5-left" => pair_of(
            id,
            d,
            ("int-left(centered(pinned-sheet))", parse("T(I-P)T(I-P) (I-P)T'(I-P)T'")?),
            ("centered(int-left(centered(brownian-sheet)))", parse("(I-P)T'(I-P)T' T(I-P)T(I-P)")?),
            true,
        ),
        "thm5-right" => pair_of(
            id,
            d,
            ("int-right(centered(pinned-sheet))", parse("T'(I-P)T(I-P) (I-P)T'(I-P)T")?),
            ("centered(int-right(centered(brownian-sheet)))", parse("(I-P)T'(I-P)T T'(I-P)T(I-P)")?),
            false,
        ),
        "rem4" => {
            let n = order("number of integrations")?;
            let a = E::compose([t(), q()]).pow(n + 1);
            let b = E::compose([q(), tt()]).pow(n + 1);
            pair_of(
                id,
                d,
                ("int-left^n(centered(pinned-sheet))", E::compose([a.clone(), b.clone()])),
                ("centered(int-left^n(centered(brownian-sheet)))", E::compose([b, a])),
                true,
            )
        }
        "thm6" => pair_of(
            id,
            d,
            ("centered(int-right(pinned-sheet))", parse("(I-P)T' T(I-P)T'T(I-P)")?),
            ("int-right(centered(brownian-sheet))", parse("T(I-P)T'T(I-P) (I-P)T'")?),
            true,
        ),
        "thm7" => {
            flat(1)?;
            let n = order("detrending order")?;
            let qn = centered_by(E::Atom(Atom::PolyProjector(n)));
            let up = t().pow(n + 1);
            let down = tt().pow(n + 1);
            pair_of(
                id,
                d,
                ("detrended(int-wiener)", E::compose([qn.clone(), up.clone(), down.clone(), qn.clone()])),
                ("bridged-int-wiener", E::compose([down, qn.clone(), qn, up])),
                true,
            )
        }
        _ => Err(Error::UnknownName(format!("theorem pair `{family}`"))),
    }
}

/// Every instance of every family at its default dimensions.
pub fn theorem_pairs() -> Vec<TheoremPair> {
    let mut out = Vec::new();
    for (family, args, dims) in FAMILIES {
        for &d in dims {
            if args.is_empty() {
                out.push(theorem_pair(family, None, d).expect("catalog pair"));
            }
            for arg in args {
                out.push(theorem_pair(family, Some(arg), d).expect("catalog pair"));
            }
        }
    }
    out
}

/// All instances of one family at dimension `d`.
pub fn family_pairs(family: &str, d: usize) -> Result<Vec<TheoremPair>> {
    let (_, args, _) = FAMILIES
        .iter()
        .find(|(f, _, _)| *f == family)
        .ok_or_else(|| Error::UnknownName(format!("theorem pair `{family}`")))?;
    if args.is_empty() {
        Ok(vec![theorem_pair(family, None, d)?])
    } else {
        args.iter().map(|a| theorem_pair(family, Some(a), d)).collect()
    }
}

/// Pairs that are not spectrally equivalent.
pub fn negative_controls() -> Vec<TheoremPair> {
    let make = |id: &str, d: usize, lhs: &str, rhs: &str| {
        let lhs = process(lhs, d).expect("catalog process");
        let rhs = process(rhs, d).expect("catalog process");
        TheoremPair {
            id: id.to_string(),
            lhs,
            rhs,
            expected: false,
            exactness: Exactness::MatrixExact,
            flipped: false,
        }
    };
    vec![
        make("wiener-vs-bridge", 1, "wiener", "bridge"),
        make("pillow-vs-pinned", 2, "pillow", "pinned-sheet"),
    ]
}

/// Printed forms of every catalog covariance, used for round-trip checks.
pub fn printed_forms() -> Vec<String> {
    let mut out = Vec::new();
    for p in theorem_pairs().iter().chain(negative_controls().iter()) {
        out.push(format(&p.lhs.covariance));
        out.push(format(&p.rhs.covariance));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::opeval::eval;
    use crate::spectral::{check_psd, sym_eigenvalues};

    fn names() -> Vec<&'static str> {
        vec![
            "wiener",
            "bridge",
            "inverted-sheet",
            "pinned-sheet",
            "pillow",
            "rl[0.75]",
            "rl-bridge[1.5]",
            "pinned-a[-1]",
            "centered-a[2]",
            "weighted[sqrtx]",
            "stoch-int[x]",
            "bridged-int-wiener[2]",
            "int-left(pinned-sheet)",
            "int-right(centered(wiener))",
            "detrended[1](int-left(wiener))",
        ]
    }

    #[test]
    fn examples() {
        let w = covariance_expr("wiener", &BTreeMap::new(), 1).unwrap();
        assert_eq!(format(&w.covariance), "T T'");
        let b = process("pinned-sheet", 2).unwrap();
        assert_eq!(b.covariance, parse("(T#T)((I#I)-(P#P))(T#T)'").unwrap());
        let bn = process("bridged-int-wiener[1]", 1).unwrap();
        assert_eq!(bn.covariance, parse("T T (I - Pn[1]) T' T'").unwrap());
        assert_eq!(bn.params["n"], "1");
    }

    #[test]
    fn errors() {
        assert!(matches!(process("brownian-motion", 1), Err(Error::UnknownName(_))));
        assert!(matches!(process("rl[0.5]", 1), Err(Error::Argument(_))));
        assert!(matches!(process("rl", 1), Err(Error::Argument(_))));
        assert!(matches!(process("weighted[cos]", 1), Err(Error::UnknownName(_))));
        assert!(matches!(process("bridge", 2), Err(Error::Dimension(_))));
        assert!(matches!(process("kiefer", 3), Err(Error::Dimension(_))));
        assert!(matches!(process("wiener[2]", 1), Err(Error::Argument(_))));
        assert!(matches!(process("int-left(wiener", 1), Err(Error::Parse { .. })));
        assert!(matches!(process("twice(wiener)", 1), Err(Error::UnknownName(_))));
        assert!(matches!(theorem_pair("thm9", None, 1), Err(Error::UnknownName(_))));
        assert!(matches!(theorem_pair("thm3", Some("2"), 1), Err(Error::Argument(_))));
        assert!(matches!(theorem_pair("kiefer", None, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn wrappers_compose() {
        let k = process("centered(int-left(pinned-sheet))", 2).unwrap();
        assert_eq!(k.dim, 2);
        let expected = parse(
            "(I#I - P#P) (T#T) (T#T) (I#I - P#P) (T#T)' (T#T)' (I#I - P#P)",
        )
        .unwrap();
        assert_eq!(k.covariance, expected);
        assert_eq!(k.name, "centered(int-left(pinned-sheet))");
    }

    #[test]
    fn registry_shape() {
        let pairs = theorem_pairs();
        let families: std::collections::BTreeSet<&str> = pairs.iter().map(|p| p.family()).collect();
        assert!(families.len() >= 16);
        let mut seen = std::collections::BTreeSet::new();
        for p in &pairs {
            assert!(seen.insert((p.id.clone(), p.dim())), "duplicate {}", p.id);
            assert_eq!(p.lhs.dim, p.rhs.dim);
            assert_eq!(p.lhs.covariance.dim().unwrap_or(p.dim()), p.dim());
            assert!(p.expected);
        }
        assert!(negative_controls().iter().all(|p| !p.expected));
        assert_eq!(family_pairs("rel-a", 2).unwrap().len(), 4);
    }

    #[test]
    fn printed_forms_parse_back() {
        for p in theorem_pairs() {
            for side in [&p.lhs, &p.rhs] {
                let text = format(&side.covariance);
                assert_eq!(parse(&text).unwrap(), side.covariance, "{}: {text}", p.id);
            }
        }
    }

    #[test]
    fn covariances_are_psd() {
        for name in names() {
            let dims: &[usize] = if ["bridge", "bridged-int-wiener[2]", "detrended[1](int-left(wiener))"].contains(&name) {
                &[1]
            } else {
                &[1, 2]
            };
            for &d in dims {
                let spec = process(name, d).unwrap();
                let ns: &[usize] = if d == 1 { &[16, 32, 64] } else { &[12, 24] };
                for &n in ns {
                    let op = eval(&spec.covariance, &Grid::new(n, d).unwrap()).unwrap();
                    assert!(op.asymmetry() <= 1e-12 * op.max_abs(), "{name} d={d} n={n}");
                    let values = sym_eigenvalues(&op.matrix).unwrap();
                    check_psd(&values, &spec.covariance).unwrap();
                }
            }
        }
        let k = process("kiefer", 2).unwrap();
        let op = eval(&k.covariance, &Grid::new(12, 2).unwrap()).unwrap();
        check_psd(&sym_eigenvalues(&op.matrix).unwrap(), &k.covariance).unwrap();
    }

    #[test]
    fn pillow_self_dual() {
        let g = Grid::new(12, 2).unwrap();
        let a = parse("(T#T)((I-P)#(I-P))(T#T)'").unwrap();
        let b = parse("(T#T)'((I-P)#(I-P))(T#T)").unwrap();
        let la = sym_eigenvalues(&eval(&a, &g).unwrap().matrix).unwrap();
        let lb = sym_eigenvalues(&eval(&b, &g).unwrap().matrix).unwrap();
        for j in 0..20 {
            assert!((la[j] - lb[j]).abs() <= 1e-12 * la[0]);
        }
    }

    #[test]
    fn traces_approach_diagonal_integrals() {
        // the discrete traces are first-order accurate in h
        let cases = [("wiener", 1, 0.5), ("bridge", 1, 1.0 / 6.0), ("pinned-sheet", 2, 5.0 / 36.0)];
        for (name, d, exact) in cases {
            let spec = process(name, d).unwrap();
            let err = |n| (eval(&spec.covariance, &Grid::new(n, d).unwrap()).unwrap().trace() - exact).abs();
            let (coarse, fine) = if d == 1 { (err(32), err(64)) } else { (err(12), err(24)) };
            assert!(fine < coarse && fine < 0.02, "{name}: {coarse} {fine}");
        }
    }
}
