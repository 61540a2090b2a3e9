//! Covariance functions and their composition.
//!
//! A [`Kernel`] is an expression tree of base kernels joined by sums and
//! products. Expressions parse from and print to a compact text form:
//!
//! ```text
//! linear + rbf(0.5)
//! const(4) * exp(2) + linear
//! periodic(0.63, 0.179)
//! ```
//!
//! Base kernels, with `d = x - x'`:
//!
//! | text              | value                              |
//! |-------------------|------------------------------------|
//! | `linear`          | `x . x'`                           |
//! | `const(c)`        | `c`                                |
//! | `rbf(t)`          | `exp(-|d|_2^2 / t)`                |
//! | `exp(t)`          | `exp(-|d|_1 / t)`                  |
//! | `periodic(a, t)`  | `exp(a cos(|d|_2^2 / t))`          |
//! | `cosper(a, t)`    | `exp(a cos(|d|_2 / t))`            |
//!
//! `periodic` keeps the squared distance inside the cosine and is not
//! positive semi-definite in general; Gram matrices built from it may need
//! jitter or noise before they factorize. `cosper` is the positive
//! semi-definite variant for one-dimensional inputs.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Linear,
    Constant { variance: f64 },
    Rbf { theta: f64 },
    Exponential { theta: f64 },
    Periodic { theta1: f64, theta2: f64 },
    CosinePeriodic { theta1: f64, theta2: f64 },
    Sum(Box<Kernel>, Box<Kernel>),
    Product(Box<Kernel>, Box<Kernel>),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn l1_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl Kernel {
    pub fn rbf(theta: f64) -> Result<Self> {
        positive("rbf theta", theta)?;
        Ok(Kernel::Rbf { theta })
    }

    pub fn exponential(theta: f64) -> Result<Self> {
        positive("exp theta", theta)?;
        Ok(Kernel::Exponential { theta })
    }

    pub fn constant(variance: f64) -> Result<Self> {
        positive("const variance", variance)?;
        Ok(Kernel::Constant { variance })
    }

    pub fn periodic(theta1: f64, theta2: f64) -> Result<Self> {
        finite("periodic theta1", theta1)?;
        positive("periodic theta2", theta2)?;
        Ok(Kernel::Periodic { theta1, theta2 })
    }

    pub fn cosine_periodic(theta1: f64, theta2: f64) -> Result<Self> {
        finite("cosper theta1", theta1)?;
        positive("cosper theta2", theta2)?;
        Ok(Kernel::CosinePeriodic { theta1, theta2 })
    }

    pub fn sum(a: Kernel, b: Kernel) -> Self {
        Kernel::Sum(Box::new(a), Box::new(b))
    }

    pub fn product(a: Kernel, b: Kernel) -> Self {
        Kernel::Product(Box::new(a), Box::new(b))
    }

    /// Checks every hyperparameter in the tree.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Linear => Ok(()),
            Kernel::Constant { variance } => positive("const variance", variance),
            Kernel::Rbf { theta } => positive("rbf theta", theta),
            Kernel::Exponential { theta } => positive("exp theta", theta),
            Kernel::Periodic { theta1, theta2 } => {
                finite("periodic theta1", theta1)?;
                positive("periodic theta2", theta2)
            }
            Kernel::CosinePeriodic { theta1, theta2 } => {
                finite("cosper theta1", theta1)?;
                positive("cosper theta2", theta2)
            }
            Kernel::Sum(ref a, ref b) | Kernel::Product(ref a, ref b) => {
                a.validate()?;
                b.validate()
            }
        }
    }

    /// True if the tree contains the squared-distance periodic kernel.
    pub fn contains_periodic(&self) -> bool {
        match self {
            Kernel::Periodic { .. } => true,
            Kernel::Sum(a, b) | Kernel::Product(a, b) => {
                a.contains_periodic() || b.contains_periodic()
            }
            _ => false,
        }
    }

    /// `k(x, x2)` without dimension checks.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(x, x2),
            Kernel::Constant { variance } => variance,
            Kernel::Rbf { theta } => (-sq_dist(x, x2) / theta).exp(),
            Kernel::Exponential { theta } => (-l1_dist(x, x2) / theta).exp(),
            Kernel::Periodic { theta1, theta2 } => (theta1 * (sq_dist(x, x2) / theta2).cos()).exp(),
            Kernel::CosinePeriodic { theta1, theta2 } => {
                (theta1 * (sq_dist(x, x2).sqrt() / theta2).cos()).exp()
            }
            Kernel::Sum(ref a, ref b) => a.eval_unchecked(x, x2) + b.eval_unchecked(x, x2),
            Kernel::Product(ref a, ref b) => a.eval_unchecked(x, x2) * b.eval_unchecked(x, x2),
        }
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_point(x)?;
        if x.len() != x2.len() {
            return Err(Error::Dimension(format!(
                "kernel inputs have dimensions {} and {}",
                x.len(),
                x2.len()
            )));
        }
        self.validate()?;
        Ok(self.eval_unchecked(x, x2))
    }

    /// Gram matrix `K[i][j] = k(xs[i], xs[j])`, each unordered pair evaluated once.
    pub fn gram(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        uniform_dim(xs)?;
        self.validate()?;
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = self.eval_unchecked(&xs[i], &xs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Cross-covariances `k_*[i] = k(xs[i], x)` together with `k_** = k(x, x)`.
    pub fn cross(&self, xs: &[Vec<f64>], x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let dim = uniform_dim(xs)?;
        if x.len() != dim {
            return Err(Error::Dimension(format!(
                "query has dimension {}, training inputs {}",
                x.len(),
                dim
            )));
        }
        check_point(x)?;
        self.validate()?;
        let ks = xs.iter().map(|xi| self.eval_unchecked(xi, x)).collect();
        Ok((ks, self.eval_unchecked(x, x)))
    }

    /// Hyperparameters in unconstrained coordinates: logs of the positive
    /// ones, the periodic `theta1` as is. Ordered depth-first, left to right.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut Vec<f64>) {
        match *self {
            Kernel::Linear => {}
            Kernel::Constant { variance } => out.push(variance.ln()),
            Kernel::Rbf { theta } | Kernel::Exponential { theta } => out.push(theta.ln()),
            Kernel::Periodic { theta1, theta2 } | Kernel::CosinePeriodic { theta1, theta2 } => {
                out.push(theta1);
                out.push(theta2.ln());
            }
            Kernel::Sum(ref a, ref b) | Kernel::Product(ref a, ref b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
        }
    }

    /// Names matching [`Kernel::params`], e.g. `rbf.log_theta`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut Vec<String>) {
        match self {
            Kernel::Linear => {}
            Kernel::Constant { .. } => out.push("const.log_variance".into()),
            Kernel::Rbf { .. } => out.push("rbf.log_theta".into()),
            Kernel::Exponential { .. } => out.push("exp.log_theta".into()),
            Kernel::Periodic { .. } => {
                out.push("periodic.theta1".into());
                out.push("periodic.log_theta2".into());
            }
            Kernel::CosinePeriodic { .. } => {
                out.push("cosper.theta1".into());
                out.push("cosper.log_theta2".into());
            }
            Kernel::Sum(a, b) | Kernel::Product(a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    /// Same structure with hyperparameters replaced from unconstrained coordinates.
    pub fn with_params(&self, params: &[f64]) -> Result<Kernel> {
        let mut it = params.iter().copied();
        let k = self.rebuild(&mut it)?;
        if it.next().is_some() {
            return Err(Error::Dimension(format!(
                "kernel takes {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        k.validate()?;
        Ok(k)
    }

    fn rebuild(&self, it: &mut impl Iterator<Item = f64>) -> Result<Kernel> {
        let mut next = || {
            it.next()
                .ok_or_else(|| Error::Dimension("too few kernel parameters".into()))
        };
        Ok(match self {
            Kernel::Linear => Kernel::Linear,
            Kernel::Constant { .. } => Kernel::Constant { variance: next()?.exp() },
            Kernel::Rbf { .. } => Kernel::Rbf { theta: next()?.exp() },
            Kernel::Exponential { .. } => Kernel::Exponential { theta: next()?.exp() },
            Kernel::Periodic { .. } => {
                let theta1 = next()?;
                Kernel::Periodic { theta1, theta2: next()?.exp() }
            }
            Kernel::CosinePeriodic { .. } => {
                let theta1 = next()?;
                Kernel::CosinePeriodic { theta1, theta2: next()?.exp() }
            }
            Kernel::Sum(a, b) => {
                let a = a.rebuild(it)?;
                Kernel::sum(a, b.rebuild(it)?)
            }
            Kernel::Product(a, b) => {
                let a = a.rebuild(it)?;
                Kernel::product(a, b.rebuild(it)?)
            }
        })
    }
}

fn check_point(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Dimension("input point has no coordinates".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("input point has non-finite coordinates".into()));
    }
    Ok(())
}

/// Common dimension of a nonempty point set.
pub(crate) fn uniform_dim(xs: &[Vec<f64>]) -> Result<usize> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Dimension("empty input set".into()))?;
    let d = first.len();
    for (i, x) in xs.iter().enumerate() {
        if x.len() != d {
            return Err(Error::Dimension(format!(
                "input {i} has dimension {}, expected {d}",
                x.len()
            )));
        }
        check_point(x)?;
    }
    Ok(d)
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Linear => write!(f, "linear"),
            Kernel::Constant { variance } => write!(f, "const({variance:?})"),
            Kernel::Rbf { theta } => write!(f, "rbf({theta:?})"),
            Kernel::Exponential { theta } => write!(f, "exp({theta:?})"),
            Kernel::Periodic { theta1, theta2 } => write!(f, "periodic({theta1:?}, {theta2:?})"),
            Kernel::CosinePeriodic { theta1, theta2 } => {
                write!(f, "cosper({theta1:?}, {theta2:?})")
            }
            Kernel::Sum(a, b) => write!(f, "{a} + {b}"),
            Kernel::Product(a, b) => {
                let wrap = |k: &Kernel| match k {
                    Kernel::Sum(..) => format!("({k})"),
                    _ => k.to_string(),
                };
                write!(f, "{} * {}", wrap(a), wrap(b))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Plus,
    Star,
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect::<String>().to_lowercase()));
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' => {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number '{text}'")))?;
                out.push(Token::Number(v));
            }
            other => return Err(Error::Parse(format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(Error::Parse(format!("expected {want:?}, found {t:?}"))),
            None => Err(Error::Parse(format!("expected {want:?}, found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Kernel> {
        let mut k = self.term()?;
        while self.peek() == Some(&Token::Plus) {
            self.bump();
            k = Kernel::sum(k, self.term()?);
        }
        Ok(k)
    }

    fn term(&mut self) -> Result<Kernel> {
        let mut k = self.factor()?;
        while self.peek() == Some(&Token::Star) {
            self.bump();
            k = Kernel::product(k, self.factor()?);
        }
        Ok(k)
    }

    fn args(&mut self) -> Result<Vec<f64>> {
        self.expect(Token::LParen)?;
        let mut out = Vec::new();
        loop {
            match self.bump() {
                Some(Token::Number(v)) => out.push(v),
                other => return Err(Error::Parse(format!("expected number, found {other:?}"))),
            }
            match self.bump() {
                Some(Token::Comma) => continue,
                Some(Token::RParen) => return Ok(out),
                other => return Err(Error::Parse(format!("expected ',' or ')', found {other:?}"))),
            }
        }
    }

    fn factor(&mut self) -> Result<Kernel> {
        match self.bump() {
            Some(Token::LParen) => {
                let k = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(k)
            }
            Some(Token::Ident(name)) => {
                let arity = |args: &[f64], n: usize| -> Result<()> {
                    if args.len() == n {
                        Ok(())
                    } else {
                        Err(Error::Parse(format!("{name} takes {n} argument(s), got {}", args.len())))
                    }
                };
                match name.as_str() {
                    "linear" => {
                        if self.peek() == Some(&Token::LParen) {
                            let a = self.args()?;
                            arity(&a, 0)?;
                        }
                        Ok(Kernel::Linear)
                    }
                    "const" | "constant" => {
                        let a = self.args()?;
                        arity(&a, 1)?;
                        Kernel::constant(a[0])
                    }
                    "rbf" => {
                        let a = self.args()?;
                        arity(&a, 1)?;
                        Kernel::rbf(a[0])
                    }
                    "exp" | "exponential" => {
                        let a = self.args()?;
                        arity(&a, 1)?;
                        Kernel::exponential(a[0])
                    }
                    "periodic" => {
                        let a = self.args()?;
                        arity(&a, 2)?;
                        Kernel::periodic(a[0], a[1])
                    }
                    "cosper" => {
                        let a = self.args()?;
                        arity(&a, 2)?;
                        Kernel::cosine_periodic(a[0], a[1])
                    }
                    other => Err(Error::Parse(format!("unknown kernel '{other}'"))),
                }
            }
            Some(t) => Err(Error::Parse(format!("unexpected token {t:?}"))),
            None => Err(Error::Parse("empty kernel expression".into())),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser { tokens: tokenize(s)?, pos: 0 };
        let k = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(Error::Parse(format!("trailing input at {t:?}")));
        }
        Ok(k)
    }
}

impl Serialize for Kernel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Kernel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn k(s: &str) -> Kernel {
        s.parse().unwrap()
    }

    #[test]
    fn base_values() {
        assert_eq!(Kernel::Linear.eval(&[2.0], &[3.0]).unwrap(), 6.0);
        assert_eq!(k("rbf(1)").eval(&[0.7], &[0.7]).unwrap(), 1.0);
        assert_eq!(k("linear + rbf(2)").eval(&[1.0], &[1.0]).unwrap(), 2.0);
        assert_abs_diff_eq!(k("exp(2)").eval(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), (-1.0f64).exp());
        assert_abs_diff_eq!(
            k("periodic(0.5, 2)").eval(&[1.0], &[3.0]).unwrap(),
            (0.5 * 2.0f64.cos()).exp()
        );
        assert_abs_diff_eq!(
            k("cosper(0.5, 2)").eval(&[1.0], &[4.0]).unwrap(),
            (0.5 * 1.5f64.cos()).exp()
        );
    }

    #[test]
    fn gram_and_cross_examples() {
        let xs = vec![vec![1.0], vec![2.0], vec![3.0]];
        let g = Kernel::Linear.gram(&xs).unwrap();
        let want = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [3.0, 6.0, 9.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g[(i, j)], want[i][j]);
            }
        }
        let g = k("rbf(1)").gram(&[vec![0.0], vec![0.0]]).unwrap();
        assert!(g.iter().all(|&v| v == 1.0));
        let g = k("rbf(1)").gram(&[vec![0.0], vec![1.0]]).unwrap();
        assert_abs_diff_eq!(g[(0, 1)], (-1.0f64).exp());

        let (ks, _) = Kernel::Linear.cross(&[vec![1.0], vec![2.0]], &[3.0]).unwrap();
        assert_eq!(ks, vec![3.0, 6.0]);
        let (ks, kss) = k("rbf(2)").cross(&[vec![0.0]], &[2.0]).unwrap();
        assert_abs_diff_eq!(ks[0], (-2.0f64).exp());
        assert_eq!(kss, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(Kernel::Linear.eval(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
        assert!(Kernel::rbf(0.0).is_err());
        assert!(Kernel::Rbf { theta: -1.0 }.eval(&[0.0], &[0.0]).is_err());
        assert!(Kernel::Linear.gram(&[]).is_err());
        assert!(Kernel::Linear.cross(&[vec![1.0]], &[1.0, 2.0]).is_err());
        for bad in ["", "rbf", "rbf(1,2)", "foo(1)", "linear +", "rbf(1))", "rbf(-1)"] {
            assert!(bad.parse::<Kernel>().is_err(), "{bad}");
        }
    }

    #[test]
    fn parse_precedence_and_display() {
        let e = k("linear + const(2) * rbf(0.5)");
        assert_eq!(
            e,
            Kernel::sum(
                Kernel::Linear,
                Kernel::product(Kernel::Constant { variance: 2.0 }, Kernel::Rbf { theta: 0.5 })
            )
        );
        let e2 = k("(linear + exp(1e-2)) * periodic(-0.3, 4)");
        assert_eq!(k(&e2.to_string()), e2);
        assert_eq!(k(&e.to_string()), e);
    }

    #[test]
    fn params_round_trip() {
        let e = k("linear + rbf(0.5) * periodic(-0.3, 4)");
        assert_eq!(e.param_names(), ["rbf.log_theta", "periodic.theta1", "periodic.log_theta2"]);
        let p = e.params();
        let back = e.with_params(&p).unwrap();
        assert_abs_diff_eq!(back.eval(&[0.3], &[1.1]).unwrap(), e.eval(&[0.3], &[1.1]).unwrap(), epsilon = 1e-14);
        assert!(e.with_params(&p[..2]).is_err());
    }

    fn psd_family() -> Vec<Kernel> {
        ["linear", "rbf(0.7)", "exp(1.3)", "linear + rbf(2)", "rbf(0.5) * exp(3)", "linear * rbf(1) + exp(0.4)"]
            .iter()
            .map(|s| k(s))
            .collect()
    }

    fn all_kernels() -> Vec<Kernel> {
        let mut v = psd_family();
        v.push(k("periodic(0.6, 0.2)"));
        v.push(k("cosper(0.6, 2)"));
        v
    }

    #[test]
    fn symmetry_on_random_pairs() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(1);
        for kern in all_kernels() {
            for _ in 0..1000 {
                let d = rng.random_range(1..4);
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
                let y: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
                assert_eq!(kern.eval_unchecked(&x, &y), kern.eval_unchecked(&y, &x));
            }
        }
    }

    #[test]
    fn psd_on_random_sets() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(2);
        for kern in psd_family() {
            for _ in 0..20 {
                let n = rng.random_range(1..=30);
                let d = rng.random_range(1..3);
                let xs: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
                    .collect();
                let g = kern.gram(&xs).unwrap();
                let min = g.symmetric_eigenvalues().min();
                assert!(min >= -1e-8, "{kern}: min eigenvalue {min}");
            }
        }
    }

    proptest! {
        #[test]
        fn cross_matches_gram_column(xs in prop::collection::vec(-4.0f64..4.0, 1..12), i in 0usize..12) {
            let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
            let i = i % pts.len();
            for kern in all_kernels() {
                let g = kern.gram(&pts).unwrap();
                let (ks, kss) = kern.cross(&pts, &pts[i]).unwrap();
                for (r, v) in ks.iter().enumerate() {
                    prop_assert_eq!(*v, g[(r, i)]);
                }
                prop_assert_eq!(kss, g[(i, i)]);
            }
        }

        #[test]
        fn composition_is_elementwise(xs in prop::collection::vec(-4.0f64..4.0, 1..10)) {
            let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
            let a = k("linear");
            let b = k("rbf(0.8)");
            let ga = a.gram(&pts).unwrap();
            let gb = b.gram(&pts).unwrap();
            let gs = Kernel::sum(a.clone(), b.clone()).gram(&pts).unwrap();
            let gp = Kernel::product(a, b).gram(&pts).unwrap();
            prop_assert_eq!(gs, &ga + &gb);
            prop_assert_eq!(gp, ga.component_mul(&gb));
        }
    }
}
