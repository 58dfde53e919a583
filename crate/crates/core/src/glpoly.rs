//! Sparse polynomials in the gl(N) coordinates g_ij with the linear Poisson bracket.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{GaussRat, PiScalar};

/// The coordinate g_{i,j}, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlVar {
    pub i: u8,
    pub j: u8,
}

impl GlVar {
    pub fn new(i: usize, j: usize) -> Self {
        GlVar { i: i as u8, j: j as u8 }
    }
}

impl fmt::Display for GlVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}{}", self.i, self.j)
    }
}

/// Monomial as a sorted list of (variable, exponent) with positive exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Mono(Vec<(GlVar, u32)>);

impl Mono {
    pub fn one() -> Self {
        Mono(Vec::new())
    }

    pub fn var(v: GlVar) -> Self {
        Mono(vec![(v, 1)])
    }

    pub fn from_pairs(mut p: Vec<(GlVar, u32)>) -> Self {
        p.retain(|(_, e)| *e > 0);
        p.sort();
        let mut out: Vec<(GlVar, u32)> = Vec::with_capacity(p.len());
        for (v, e) in p {
            match out.last_mut() {
                Some((w, f)) if *w == v => *f += e,
                _ => out.push((v, e)),
            }
        }
        Mono(out)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn vars(&self) -> &[(GlVar, u32)] {
        &self.0
    }

    pub fn exp(&self, v: GlVar) -> u32 {
        self.0.iter().find(|(w, _)| *w == v).map(|(_, e)| *e).unwrap_or(0)
    }

    pub fn mul(&self, o: &Mono) -> Mono {
        let (a, b) = (&self.0, &o.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut p, mut q) = (0, 0);
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                Ordering::Less => {
                    out.push(a[p]);
                    p += 1;
                }
                Ordering::Greater => {
                    out.push(b[q]);
                    q += 1;
                }
                Ordering::Equal => {
                    out.push((a[p].0, a[p].1 + b[q].1));
                    p += 1;
                    q += 1;
                }
            }
        }
        out.extend_from_slice(&a[p..]);
        out.extend_from_slice(&b[q..]);
        Mono(out)
    }

    /// Divide by one power of `v` (assumed present).
    fn drop_one(&self, v: GlVar) -> Mono {
        let mut out = self.0.clone();
        if let Some(pos) = out.iter().position(|(w, _)| *w == v) {
            if out[pos].1 == 1 {
                out.remove(pos);
            } else {
                out[pos].1 -= 1;
            }
        }
        Mono(out)
    }

    fn times_var(&self, v: GlVar) -> Mono {
        self.mul(&Mono::var(v))
    }

    pub fn max_index(&self) -> usize {
        self.0.iter().map(|(v, _)| v.i.max(v.j) as usize).max().unwrap_or(0)
    }
}

// graded lex: total degree, then exponent vector compared lexicographically in (i,j) order
impl Ord for Mono {
    fn cmp(&self, o: &Self) -> Ordering {
        let d = self.degree().cmp(&o.degree());
        if d != Ordering::Equal {
            return d;
        }
        for (x, y) in self.0.iter().zip(o.0.iter()) {
            if x.0 != y.0 {
                return if x.0 < y.0 { Ordering::Greater } else { Ordering::Less };
            }
            if x.1 != y.1 {
                return x.1.cmp(&y.1);
            }
        }
        self.0.len().cmp(&o.0.len())
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for Mono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(v, e)| if *e == 1 { v.to_string() } else { format!("{v}^{e}") })
            .collect();
        write!(f, "{}", parts.join("·"))
    }
}

/// Polynomial in g_ij with [`PiScalar`] coefficients. Rank 0 marks a rank-free constant.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GlPoly {
    n: usize,
    terms: BTreeMap<Mono, PiScalar>,
}

fn join_rank(a: usize, b: usize) -> Result<usize> {
    match (a, b) {
        (0, b) => Ok(b),
        (a, 0) => Ok(a),
        (a, b) if a == b => Ok(a),
        (a, b) => Err(Error::RankMismatch(a, b)),
    }
}

impl GlPoly {
    pub fn zero(n: usize) -> Self {
        GlPoly { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: PiScalar) -> Self {
        let mut p = Self::zero(n);
        if !c.is_zero() {
            p.terms.insert(Mono::one(), c);
        }
        p
    }

    pub fn var(n: usize, i: usize, j: usize) -> Self {
        assert!(i >= 1 && j >= 1 && i <= n && j <= n, "g_{i},{j} outside gl({n})");
        let mut p = Self::zero(n);
        p.terms.insert(Mono::var(GlVar::new(i, j)), PiScalar::one());
        p
    }

    pub fn from_terms(n: usize, it: impl IntoIterator<Item = (Mono, PiScalar)>) -> Self {
        let mut p = Self::zero(n);
        for (m, c) in it {
            p.add_term(m, &c);
        }
        p
    }

    /// tr(g^k) expanded.
    pub fn trace_power(n: usize, k: u32) -> Self {
        let g: Vec<Vec<GlPoly>> = (1..=n).map(|i| (1..=n).map(|j| GlPoly::var(n, i, j)).collect()).collect();
        let mut p = g.clone();
        for _ in 1..k {
            let mut q = vec![vec![GlPoly::zero(n); n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = GlPoly::zero(n);
                    for l in 0..n {
                        acc = &acc + &(&p[i][l] * &g[l][j]);
                    }
                    q[i][j] = acc;
                }
            }
            p = q;
        }
        let mut t = GlPoly::zero(n);
        for (i, row) in p.iter().enumerate() {
            t = &t + &row[i];
        }
        t
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn with_rank(mut self, n: usize) -> Result<Self> {
        self.n = join_rank(self.n, n)?;
        Ok(self)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Mono, &PiScalar)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Mono) -> PiScalar {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// Constant term if the polynomial has no variables.
    pub fn as_constant(&self) -> Option<PiScalar> {
        match self.terms.len() {
            0 => Some(PiScalar::zero()),
            1 => self.terms.get(&Mono::one()).cloned(),
            _ => None,
        }
    }

    fn add_term(&mut self, m: Mono, c: &PiScalar) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c.clone());
            }
        }
    }

    pub fn try_add(&self, o: &GlPoly) -> Result<GlPoly> {
        let n = join_rank(self.n, o.n)?;
        let mut out = self.clone();
        out.n = n;
        for (m, c) in &o.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn try_mul(&self, o: &GlPoly) -> Result<GlPoly> {
        let n = join_rank(self.n, o.n)?;
        let mut acc: HashMap<Mono, PiScalar> = HashMap::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                let c = c1 * c2;
                let e = acc.entry(m1.mul(m2)).or_default();
                *e += &c;
            }
        }
        Ok(Self::from_terms(n, acc.into_iter().filter(|(_, c)| !c.is_zero())))
    }

    pub fn scalar_mul(&self, c: &PiScalar) -> GlPoly {
        if c.is_zero() {
            return GlPoly::zero(self.n);
        }
        GlPoly { n: self.n, terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect() }
    }

    pub fn scale_gauss(&self, c: &GaussRat) -> GlPoly {
        GlPoly {
            n: self.n,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v.scale(c))).filter(|(_, v)| !v.is_zero()).collect(),
        }
    }

    pub fn partial(&self, v: GlVar) -> GlPoly {
        let mut out = GlPoly::zero(self.n);
        for (m, c) in &self.terms {
            let e = m.exp(v);
            if e > 0 {
                out.add_term(m.drop_one(v), &c.scale(&GaussRat::int(e as i64)));
            }
        }
        out
    }

    /// Bracket by bilinear expansion over monomials with
    /// {g_ij, g_km} = δ_jk g_im − δ_im g_kj and Leibniz.
    pub fn poisson(&self, o: &GlPoly) -> Result<GlPoly> {
        let n = join_rank(self.n, o.n)?;
        let a: Vec<(&Mono, &PiScalar)> = self.terms.iter().collect();
        let acc = a
            .par_iter()
            .fold(HashMap::<Mono, PiScalar>::new, |mut acc, (m1, c1)| {
                for (m2, c2) in &o.terms {
                    let local = mono_bracket(m1, m2);
                    if local.is_empty() {
                        continue;
                    }
                    let c = *c1 * c2;
                    for (m, k) in local {
                        let e = acc.entry(m).or_default();
                        *e += &c.scale(&GaussRat::int(k));
                    }
                }
                acc
            })
            .reduce(HashMap::new, |mut x, y| {
                for (m, c) in y {
                    let e = x.entry(m).or_default();
                    *e += &c;
                }
                x
            });
        Ok(Self::from_terms(n, acc.into_iter().filter(|(_, c)| !c.is_zero())))
    }

    /// Σ_{i,j,k} (∂A/∂g_ij ∂B/∂g_jk − ∂B/∂g_ij ∂A/∂g_jk) g_ik, kept as an independent check of [`poisson`].
    pub fn poisson_partials(&self, o: &GlPoly) -> Result<GlPoly> {
        let n = join_rank(self.n, o.n)?;
        let n = n.max(self.max_index()).max(o.max_index());
        let da: Vec<Vec<GlPoly>> =
            (1..=n).map(|i| (1..=n).map(|j| self.partial(GlVar::new(i, j))).collect()).collect();
        let db: Vec<Vec<GlPoly>> = (1..=n).map(|i| (1..=n).map(|j| o.partial(GlVar::new(i, j))).collect()).collect();
        let mut out = GlPoly::zero(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let t = &(&da[i][j] * &db[j][k]) - &(&db[i][j] * &da[j][k]);
                    if !t.is_zero() {
                        out = &out + &(&t * &GlPoly::var(n, i + 1, k + 1));
                    }
                }
            }
        }
        Ok(out)
    }

    fn max_index(&self) -> usize {
        self.terms.keys().map(|m| m.max_index()).max().unwrap_or(0)
    }

    /// Substitute g_ij ← G[i-1][j-1]; π is evaluated numerically.
    pub fn evaluate(&self, g: &DMatrix<Complex64>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, c) in &self.terms {
            let mut t = c.eval();
            for (v, e) in m.vars() {
                t *= g[(v.i as usize - 1, v.j as usize - 1)].powu(*e);
            }
            acc += t;
        }
        acc
    }

    pub fn is_central(&self) -> bool {
        let n = self.n.max(self.max_index());
        if n == 0 {
            return true;
        }
        (1..=n).all(|i| {
            (1..=n).all(|j| self.poisson(&GlPoly::var(n, i, j)).map(|p| p.is_zero()).unwrap_or(false))
        })
    }

    pub fn map_coeffs(&self, f: impl Fn(&PiScalar) -> PiScalar) -> GlPoly {
        GlPoly::from_terms(self.n, self.terms.iter().map(|(m, c)| (m.clone(), f(c))))
    }

    /// Leading term in graded-lex order.
    pub fn leading(&self) -> Option<(&Mono, &PiScalar)> {
        self.terms.iter().next_back()
    }

    pub fn to_json(&self) -> PolyJson {
        PolyJson {
            n: self.n,
            terms: self
                .terms
                .iter()
                .rev()
                .map(|(m, c)| TermJson {
                    coeff: c.clone(),
                    monomial: m.vars().iter().map(|(v, e)| [v.i as u32, v.j as u32, *e]).collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(p: &PolyJson) -> Result<GlPoly> {
        let mut out = GlPoly::zero(p.n);
        for t in &p.terms {
            let mut pairs = Vec::new();
            for [i, j, e] in &t.monomial {
                if *i < 1 || *j < 1 || *i as usize > p.n || *j as usize > p.n {
                    return Err(Error::Parse(format!("variable g_{i},{j} outside gl({})", p.n)));
                }
                pairs.push((GlVar::new(*i as usize, *j as usize), *e));
            }
            out.add_term(Mono::from_pairs(pairs), &t.coeff);
        }
        Ok(out)
    }
}

/// {m1, m2} for monomials, with integer multiplicities.
fn mono_bracket(m1: &Mono, m2: &Mono) -> Vec<(Mono, i64)> {
    let mut out: Vec<(Mono, i64)> = Vec::new();
    for (x, e) in m1.vars() {
        for (y, f) in m2.vars() {
            // {g_ij, g_km} = δ_jk g_im − δ_im g_kj
            let mut gens: [(Option<GlVar>, i64); 2] = [(None, 0), (None, 0)];
            if x.j == y.i {
                gens[0] = (Some(GlVar { i: x.i, j: y.j }), 1);
            }
            if x.i == y.j {
                gens[1] = (Some(GlVar { i: y.i, j: x.j }), -1);
            }
            if gens[0].0.is_none() && gens[1].0.is_none() {
                continue;
            }
            let base = m1.drop_one(*x).mul(&m2.drop_one(*y));
            let mult = (*e as i64) * (*f as i64);
            for (g, s) in gens.iter() {
                if let Some(g) = g {
                    let m = base.times_var(*g);
                    let k = mult * s;
                    match out.iter_mut().find(|(w, _)| *w == m) {
                        Some((_, c)) => *c += k,
                        None => out.push((m, k)),
                    }
                }
            }
        }
    }
    out.retain(|(_, k)| *k != 0);
    out
}

impl<'a> Add<&'a GlPoly> for &'a GlPoly {
    type Output = GlPoly;
    fn add(self, o: &GlPoly) -> GlPoly {
        self.try_add(o).expect("rank mismatch")
    }
}

impl<'a> Sub<&'a GlPoly> for &'a GlPoly {
    type Output = GlPoly;
    fn sub(self, o: &GlPoly) -> GlPoly {
        self.try_add(&-o).expect("rank mismatch")
    }
}

impl<'a> Mul<&'a GlPoly> for &'a GlPoly {
    type Output = GlPoly;
    fn mul(self, o: &GlPoly) -> GlPoly {
        self.try_mul(o).expect("rank mismatch")
    }
}

impl Neg for &GlPoly {
    type Output = GlPoly;
    fn neg(self) -> GlPoly {
        GlPoly { n: self.n, terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }
}

impl fmt::Display for GlPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .rev()
            .map(|(m, c)| {
                if m.vars().is_empty() {
                    format!("({c})")
                } else if c.is_one() {
                    m.to_string()
                } else {
                    format!("({c})·{m}")
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Polynomial JSON record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyJson {
    #[serde(rename = "N")]
    pub n: usize,
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub coeff: PiScalar,
    pub monomial: Vec<[u32; 3]>,
}

impl Serialize for GlPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GlPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = PolyJson::deserialize(d)?;
        GlPoly::from_json(&p).map_err(serde::de::Error::custom)
    }
}

pub fn poisson(a: &GlPoly, b: &GlPoly) -> Result<GlPoly> {
    a.poisson(b)
}

pub fn partial(a: &GlPoly, v: GlVar) -> GlPoly {
    a.partial(v)
}

pub fn evaluate(a: &GlPoly, g: &DMatrix<Complex64>) -> Complex64 {
    a.evaluate(g)
}

pub fn is_central(a: &GlPoly) -> bool {
    a.is_central()
}
