//! Truncated Laurent series in z, finite exponential (phase) sums, and matrix helpers.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glpoly::GlPoly;
use crate::scalar::{GaussRat, PiScalar};

/// Coefficient ring used by the series engine.
pub trait Ring: Clone + Send + Sync + PartialEq {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn from_pis(c: &PiScalar) -> Self;
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
}

impl Ring for PiScalar {
    fn zero() -> Self {
        PiScalar::zero()
    }
    fn one() -> Self {
        PiScalar::one()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        PiScalar::is_zero(self)
    }
    fn from_pis(c: &PiScalar) -> Self {
        c.clone()
    }
}

impl Ring for GlPoly {
    fn zero() -> Self {
        GlPoly::zero(0)
    }
    fn one() -> Self {
        GlPoly::constant(0, PiScalar::one())
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        GlPoly::is_zero(self)
    }
    fn from_pis(c: &PiScalar) -> Self {
        GlPoly::constant(0, c.clone())
    }
}

impl Ring for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        *self == Complex64::new(0.0, 0.0)
    }
    fn from_pis(c: &PiScalar) -> Self {
        c.eval()
    }
}

/// Σ_{k=min_deg}^{trunc} c_k z^k. `trunc == None` marks an exact Laurent polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct ZSeries<R> {
    min_deg: i32,
    coeffs: Vec<R>,
    trunc: Option<i32>,
}

impl<R: Ring> ZSeries<R> {
    pub fn new(min_deg: i32, coeffs: Vec<R>, trunc: Option<i32>) -> Self {
        let mut s = ZSeries { min_deg, coeffs, trunc };
        s.normalize();
        s
    }

    pub fn exact(min_deg: i32, coeffs: Vec<R>) -> Self {
        Self::new(min_deg, coeffs, None)
    }

    pub fn zero() -> Self {
        ZSeries { min_deg: 0, coeffs: Vec::new(), trunc: None }
    }

    pub fn constant(c: R) -> Self {
        Self::exact(0, vec![c])
    }

    pub fn monomial(c: R, k: i32) -> Self {
        Self::exact(k, vec![c])
    }

    fn normalize(&mut self) {
        if let Some(t) = self.trunc {
            let keep = (t - self.min_deg + 1).max(0) as usize;
            self.coeffs.truncate(keep);
        }
        let lead = self.coeffs.iter().take_while(|c| c.is_zero()).count();
        if lead == self.coeffs.len() {
            self.coeffs.clear();
            self.min_deg = 0;
            return;
        }
        self.coeffs.drain(..lead);
        self.min_deg += lead as i32;
        while self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn is_exact(&self) -> bool {
        self.trunc.is_none()
    }

    pub fn trunc(&self) -> Option<i32> {
        self.trunc
    }

    pub fn min_deg(&self) -> i32 {
        self.min_deg
    }

    pub fn max_deg(&self) -> i32 {
        self.min_deg + self.coeffs.len() as i32 - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Lower bound of the valuation; `None` for the exact zero series.
    fn valuation(&self) -> Option<i32> {
        if self.coeffs.is_empty() {
            self.trunc.map(|t| t + 1)
        } else {
            Some(self.min_deg)
        }
    }

    pub fn coeff(&self, j: i32) -> Result<R> {
        if let Some(t) = self.trunc {
            if j > t {
                return Err(Error::Truncation { want: j, trunc: t });
            }
        }
        if j < self.min_deg || j > self.max_deg() {
            return Ok(R::zero());
        }
        Ok(self.coeffs[(j - self.min_deg) as usize].clone())
    }

    /// Nonzero coefficients in increasing degree.
    pub fn iter(&self) -> impl Iterator<Item = (i32, &R)> {
        self.coeffs.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(move |(k, c)| (self.min_deg + k as i32, c))
    }

    pub fn truncate(&self, t: i32) -> Self {
        let trunc = Some(self.trunc.map_or(t, |s| s.min(t)));
        Self::new(self.min_deg, self.coeffs.clone(), trunc)
    }

    pub fn add(&self, o: &Self) -> Self {
        let trunc = match (self.trunc, o.trunc) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        if self.coeffs.is_empty() {
            return Self::new(o.min_deg, o.coeffs.clone(), trunc);
        }
        if o.coeffs.is_empty() {
            return Self::new(self.min_deg, self.coeffs.clone(), trunc);
        }
        let lo = self.min_deg.min(o.min_deg);
        let hi = self.max_deg().max(o.max_deg());
        let mut c = vec![R::zero(); (hi - lo + 1) as usize];
        for (k, v) in self.coeffs.iter().enumerate() {
            let p = (self.min_deg - lo) as usize + k;
            c[p] = c[p].add(v);
        }
        for (k, v) in o.coeffs.iter().enumerate() {
            let p = (o.min_deg - lo) as usize + k;
            c[p] = c[p].add(v);
        }
        Self::new(lo, c, trunc)
    }

    pub fn neg(&self) -> Self {
        ZSeries { min_deg: self.min_deg, coeffs: self.coeffs.iter().map(|c| c.neg()).collect(), trunc: self.trunc }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let (va, vb) = (self.valuation(), o.valuation());
        let trunc = match (self.trunc, o.trunc) {
            (None, None) => None,
            (Some(ta), None) => vb.map(|v| ta + v),
            (None, Some(tb)) => va.map(|v| tb + v),
            (Some(ta), Some(tb)) => match (va, vb) {
                (Some(a), Some(b)) => Some((ta + b).min(tb + a)),
                _ => unreachable!(),
            },
        };
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return ZSeries { min_deg: 0, coeffs: Vec::new(), trunc };
        }
        let lo = self.min_deg + o.min_deg;
        let mut hi = self.max_deg() + o.max_deg();
        if let Some(t) = trunc {
            hi = hi.min(t);
        }
        if hi < lo {
            return ZSeries { min_deg: 0, coeffs: Vec::new(), trunc };
        }
        let len = (hi - lo + 1) as usize;
        let mut c = vec![R::zero(); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                let p = i + j;
                if p >= len {
                    break;
                }
                if b.is_zero() {
                    continue;
                }
                c[p] = c[p].add(&a.mul(b));
            }
        }
        Self::new(lo, c, trunc)
    }

    pub fn scale(&self, r: &R) -> Self {
        Self::new(self.min_deg, self.coeffs.iter().map(|c| c.mul(r)).collect(), self.trunc)
    }

    /// Multiply by z^s.
    pub fn shift(&self, s: i32) -> Self {
        ZSeries { min_deg: self.min_deg + s, coeffs: self.coeffs.clone(), trunc: self.trunc.map(|t| t + s) }
    }

    pub fn map<S: Ring>(&self, f: impl Fn(&R) -> S) -> ZSeries<S> {
        ZSeries::new(self.min_deg, self.coeffs.iter().map(f).collect(), self.trunc)
    }

    /// Evaluate the retained terms at `z`.
    pub fn eval_with(&self, z: Complex64, f: impl Fn(&R) -> Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in self.iter() {
            acc += f(c) * z.powi(k);
        }
        acc
    }
}

impl<R: Ring> Ring for ZSeries<R> {
    fn zero() -> Self {
        ZSeries::zero()
    }
    fn one() -> Self {
        ZSeries::constant(R::one())
    }
    fn add(&self, o: &Self) -> Self {
        ZSeries::add(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        ZSeries::mul(self, o)
    }
    fn neg(&self) -> Self {
        ZSeries::neg(self)
    }
    fn is_zero(&self) -> bool {
        self.coeffs.is_empty() && self.trunc.is_none()
    }
    fn from_pis(c: &PiScalar) -> Self {
        ZSeries::constant(R::from_pis(c))
    }
}

impl<R: Ring + fmt::Display> fmt::Display for ZSeries<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, c)| format!("[{c}]z^{k}")).collect();
        let body = if parts.is_empty() { "0".to_string() } else { parts.join(" + ") };
        match self.trunc {
            Some(t) => write!(f, "{body} + O(z^{})", t + 1),
            None => write!(f, "{body}"),
        }
    }
}

fn factorial(k: u32) -> BigRational {
    let mut acc = BigRational::one();
    for i in 2..=k {
        acc *= BigRational::from_integer(i.into());
    }
    acc
}

/// exp(c z) = Σ_{k ≤ order} c^k z^k / k!
pub fn series_exp_linear(c: &PiScalar, order: i32) -> ZSeries<PiScalar> {
    let mut coeffs = Vec::new();
    let mut p = PiScalar::one();
    for k in 0..=order.max(0) {
        let inv_fact = GaussRat::from_rational(BigRational::one() / factorial(k as u32));
        coeffs.push(p.scale(&inv_fact));
        p = &p * c;
    }
    ZSeries::new(0, coeffs, Some(order))
}

/// Power-series coefficients r_k of 1/(sin w / w) = Σ r_k w^{2k}, k = 0..=m.
fn inv_sinc_coeffs(m: usize) -> Vec<BigRational> {
    let s: Vec<BigRational> = (0..=m)
        .map(|k| {
            let sign = if k % 2 == 0 { BigRational::one() } else { -BigRational::one() };
            sign / factorial(2 * k as u32 + 1)
        })
        .collect();
    let mut r = vec![BigRational::zero(); m + 1];
    r[0] = BigRational::one();
    for k in 1..=m {
        let mut acc = BigRational::zero();
        for j in 1..=k {
            acc += &s[j] * &r[k - j];
        }
        r[k] = -acc;
    }
    r
}

/// Laurent series of sin(πz), exact coefficients, truncated at z^order.
pub fn series_sin(order: i32) -> ZSeries<PiScalar> {
    let mut coeffs = Vec::new();
    for k in 0..=order.max(0) {
        if k % 2 == 1 {
            let sign = if (k / 2) % 2 == 0 { 1 } else { -1 };
            let c = BigRational::from_integer(sign.into()) / factorial(k as u32);
            coeffs.push(PiScalar::term(GaussRat::from_rational(c), k));
        } else {
            coeffs.push(PiScalar::zero());
        }
    }
    ZSeries::new(0, coeffs, Some(order))
}

/// cos(πz) truncated at z^order.
pub fn series_cos(order: i32) -> ZSeries<PiScalar> {
    let mut coeffs = Vec::new();
    for k in 0..=order.max(0) {
        if k % 2 == 0 {
            let sign = if (k / 2) % 2 == 0 { 1 } else { -1 };
            let c = BigRational::from_integer(sign.into()) / factorial(k as u32);
            coeffs.push(PiScalar::term(GaussRat::from_rational(c), k));
        } else {
            coeffs.push(PiScalar::zero());
        }
    }
    ZSeries::new(0, coeffs, Some(order))
}

/// 1/sin(πz) = π⁻¹z⁻¹ + (π/6)z + (7π³/360)z³ + …, truncated at z^order (order ≥ −1).
pub fn series_inv_sin(order: i32) -> Result<ZSeries<PiScalar>> {
    if order < -1 {
        return Err(Error::Invalid(format!("series_inv_sin order {order} < -1")));
    }
    let m = ((order + 1) / 2) as usize;
    let r = inv_sinc_coeffs(m);
    let mut coeffs = Vec::new();
    for k in -1..=order {
        if (k + 1) % 2 == 0 {
            let idx = ((k + 1) / 2) as usize;
            coeffs.push(PiScalar::term(GaussRat::from_rational(r[idx].clone()), k));
        } else {
            coeffs.push(PiScalar::zero());
        }
    }
    Ok(ZSeries::new(-1, coeffs, Some(order)))
}

/// cot(πz) = π⁻¹z⁻¹ − (π/3)z − (π³/45)z³ − …, truncated at z^order (order ≥ −1).
pub fn series_cot(order: i32) -> Result<ZSeries<PiScalar>> {
    let inv = series_inv_sin(order)?;
    Ok(inv.mul(&series_cos(order + 1)).truncate(order))
}

/// Matrix product over any ring; entries computed in parallel.
pub fn mat_mul<T: Ring>(a: &[Vec<T>], b: &[Vec<T>]) -> Vec<Vec<T>> {
    let n = a.len();
    let m = b.first().map_or(0, |r| r.len());
    let k = b.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = T::zero();
                    for l in 0..k {
                        if a[i][l].is_zero() || b[l][j].is_zero() {
                            continue;
                        }
                        acc = acc.add(&a[i][l].mul(&b[l][j]));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn mat_trace<T: Ring>(a: &[Vec<T>]) -> T {
    let mut acc = T::zero();
    for (i, row) in a.iter().enumerate() {
        acc = acc.add(&row[i]);
    }
    acc
}

/// tr(M^k) for k = 1..=kmax.
pub fn mat_trace_powers<T: Ring>(m: &[Vec<T>], kmax: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(kmax);
    let mut p = m.to_vec();
    for k in 1..=kmax {
        if k > 1 {
            p = mat_mul(&p, m);
        }
        out.push(mat_trace(&p));
    }
    out
}

/// tr(M^k) for a matrix of series.
pub fn mat_series_trace_power<R: Ring>(m: &[Vec<ZSeries<R>>], k: usize) -> Result<ZSeries<R>> {
    if k == 0 {
        return Err(Error::Invalid("trace power k must be ≥ 1".into()));
    }
    if m.iter().any(|r| r.len() != m.len()) {
        return Err(Error::Invalid("matrix is not square".into()));
    }
    Ok(mat_trace_powers(m, k).pop().unwrap())
}

/// Coefficient extraction with explicit truncation errors.
pub fn coeff<R: Ring>(s: &ZSeries<R>, j: i32) -> Result<R> {
    s.coeff(j)
}

/// Finite sum Σ_r P_r exp(iπ r z) with rational phases r.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSum<R> {
    terms: BTreeMap<Rational64, R>,
}

impl<R: Ring> PhaseSum<R> {
    pub fn zero() -> Self {
        PhaseSum { terms: BTreeMap::new() }
    }

    pub fn term(r: Rational64, c: R) -> Self {
        let mut s = Self::zero();
        s.add_term(r, &c);
        s
    }

    pub fn add_term(&mut self, r: Rational64, c: &R) {
        if c.is_zero() {
            return;
        }
        let v = match self.terms.remove(&r) {
            Some(v) => v.add(c),
            None => c.clone(),
        };
        if !v.is_zero() {
            self.terms.insert(r, v);
        }
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (&Rational64, &R)> {
        self.terms.iter()
    }

    pub fn component(&self, r: Rational64) -> R {
        self.terms.get(&r).cloned().unwrap_or_else(R::zero)
    }

    pub fn max_phase(&self) -> Option<Rational64> {
        self.terms.keys().next_back().copied()
    }

    pub fn scale(&self, c: &R) -> Self {
        let mut out = Self::zero();
        for (r, v) in &self.terms {
            out.add_term(*r, &v.mul(c));
        }
        out
    }

    pub fn map<S: Ring>(&self, f: impl Fn(&R) -> S) -> PhaseSum<S> {
        let mut out = PhaseSum::zero();
        for (r, v) in &self.terms {
            out.add_term(*r, &f(v));
        }
        out
    }

    /// Taylor expansion at z = 0 through z^order.
    pub fn to_zseries(&self, order: i32) -> ZSeries<R> {
        let mut acc = ZSeries::new(0, Vec::new(), Some(order));
        for (r, c) in &self.terms {
            let phase = PiScalar::term(GaussRat::from_parts(0, 1, *r.numer(), *r.denom()), 1);
            let e = series_exp_linear(&phase, order).map(R::from_pis);
            acc = acc.add(&e.scale(c));
        }
        acc
    }

    pub fn eval_with(&self, z: Complex64, f: impl Fn(&R) -> Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (r, c) in &self.terms {
            let ph = Complex64::new(0.0, std::f64::consts::PI * (*r.numer() as f64) / (*r.denom() as f64));
            acc += f(c) * (ph * z).exp();
        }
        acc
    }
}

impl<R: Ring> Ring for PhaseSum<R> {
    fn zero() -> Self {
        PhaseSum::zero()
    }
    fn one() -> Self {
        PhaseSum::term(Rational64::zero(), R::one())
    }
    fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (r, c) in &o.terms {
            out.add_term(*r, c);
        }
        out
    }
    fn mul(&self, o: &Self) -> Self {
        let mut out = PhaseSum::zero();
        for (r1, c1) in &self.terms {
            for (r2, c2) in &o.terms {
                out.add_term(r1 + r2, &c1.mul(c2));
            }
        }
        out
    }
    fn neg(&self) -> Self {
        PhaseSum { terms: self.terms.iter().map(|(r, c)| (*r, c.neg())).collect() }
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn from_pis(c: &PiScalar) -> Self {
        PhaseSum::term(Rational64::zero(), R::from_pis(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glpoly::GlPoly;

    fn pis(a: i64, b: i64, k: i32) -> PiScalar {
        PiScalar::term(GaussRat::ratio(a, b), k)
    }

    #[test]
    fn exp_examples() {
        let e0 = series_exp_linear(&PiScalar::zero(), 4);
        assert_eq!(e0.coeff(0).unwrap(), PiScalar::one());
        assert!(e0.coeff(1).unwrap().is_zero());
        let ipi = PiScalar::term(GaussRat::i(), 1);
        let e = series_exp_linear(&ipi, 2);
        assert_eq!(e.coeff(1).unwrap(), ipi);
        assert_eq!(e.coeff(2).unwrap(), pis(-1, 2, 2));
        assert!(e.coeff(3).is_err());
        let c = PiScalar::term(GaussRat::from_parts(1, 3, 2, 1), 1);
        let p = series_exp_linear(&c, 6).mul(&series_exp_linear(&-&c, 6));
        assert_eq!(p.trunc(), Some(6));
        assert_eq!(p.coeff(0).unwrap(), PiScalar::one());
        for k in 1..=6 {
            assert!(p.coeff(k).unwrap().is_zero());
        }
    }

    #[test]
    fn inv_sin_examples() {
        let s = series_inv_sin(5).unwrap();
        assert_eq!(s.coeff(-1).unwrap(), PiScalar::pi_pow(-1));
        assert!(s.coeff(0).unwrap().is_zero());
        assert_eq!(s.coeff(1).unwrap(), pis(1, 6, 1));
        assert_eq!(s.coeff(3).unwrap(), pis(7, 360, 3));
        let prod = s.mul(&series_sin(7));
        assert_eq!(prod.coeff(0).unwrap(), PiScalar::one());
        for k in 1..=prod.trunc().unwrap() {
            assert!(prod.coeff(k).unwrap().is_zero(), "z^{k}");
        }
    }

    #[test]
    fn cot_examples() {
        let c = series_cot(5).unwrap();
        assert_eq!(c.coeff(-1).unwrap(), PiScalar::pi_pow(-1));
        assert!(c.coeff(0).unwrap().is_zero());
        assert_eq!(c.coeff(1).unwrap(), pis(-1, 3, 1));
        assert_eq!(c.coeff(3).unwrap(), pis(-1, 45, 3));
        // cot · sin = cos
        let lhs = c.mul(&series_sin(7));
        let cos = series_cos(8);
        for k in 0..=lhs.trunc().unwrap() {
            assert_eq!(lhs.coeff(k).unwrap(), cos.coeff(k).unwrap());
        }
    }

    #[test]
    fn trace_power_examples() {
        let one = PiScalar::one();
        let d = vec![
            vec![ZSeries::monomial(one.clone(), 1), ZSeries::zero()],
            vec![ZSeries::zero(), ZSeries::monomial(one.clone(), -1)],
        ];
        let t = mat_series_trace_power(&d, 2).unwrap();
        assert_eq!(t, ZSeries::exact(-2, vec![one.clone(), PiScalar::zero(), PiScalar::zero(), PiScalar::zero(), one.clone()]));
        let a = GlPoly::var(2, 1, 2);
        let b = GlPoly::var(2, 2, 1);
        let m = vec![
            vec![ZSeries::zero(), ZSeries::constant(a.clone())],
            vec![ZSeries::constant(b.clone()), ZSeries::zero()],
        ];
        let t = mat_series_trace_power(&m, 2).unwrap();
        assert_eq!(t.coeff(0).unwrap(), (&a * &b).scale_gauss(&GaussRat::int(2)));
    }

    #[test]
    fn truncation_tracking() {
        let a = series_inv_sin(3).unwrap();
        let b = series_exp_linear(&PiScalar::pi(), 4);
        let p = a.mul(&b);
        assert_eq!(p.trunc(), Some(3));
        assert!(p.coeff(4).is_err());
        let q = a.mul(&a);
        assert_eq!(q.trunc(), Some(2));
    }

    #[test]
    fn numeric_consistency_small_z() {
        let z = Complex64::new(0.05, 0.03);
        let s = series_inv_sin(13).unwrap();
        let direct = 1.0 / (z * std::f64::consts::PI).sin();
        let approx = s.eval_with(z, |c| c.eval());
        assert!(((approx - direct) / direct).norm() < 1e-9);
        let c = series_cot(13).unwrap();
        let direct = 1.0 / (z * std::f64::consts::PI).tan();
        assert!(((c.eval_with(z, |c| c.eval()) - direct) / direct).norm() < 1e-9);
    }

    #[test]
    fn phase_sum_expansion() {
        let mut p = PhaseSum::<PiScalar>::zero();
        p.add_term(Rational64::new(1, 3), &PiScalar::int(2));
        p.add_term(Rational64::new(-5, 3), &PiScalar::i());
        let z = Complex64::new(0.04, -0.02);
        let s = p.to_zseries(14);
        let a = s.eval_with(z, |c| c.eval());
        let b = p.eval_with(z, |c| c.eval());
        assert!((a - b).norm() < 1e-12);
    }
}
