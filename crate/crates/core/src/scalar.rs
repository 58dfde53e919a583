//! Exact scalars: Gaussian rationals and finite Laurent sums in a formal π.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Gaussian rational `re + i·im`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GaussRat {
    pub re: BigRational,
    pub im: BigRational,
}

impl GaussRat {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        GaussRat { re, im }
    }

    pub fn zero() -> Self {
        GaussRat { re: BigRational::zero(), im: BigRational::zero() }
    }

    pub fn one() -> Self {
        Self::int(1)
    }

    pub fn i() -> Self {
        GaussRat { re: BigRational::zero(), im: BigRational::one() }
    }

    pub fn int(n: i64) -> Self {
        GaussRat { re: BigRational::from_integer(BigInt::from(n)), im: BigRational::zero() }
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        GaussRat { re: BigRational::new(BigInt::from(n), BigInt::from(d)), im: BigRational::zero() }
    }

    /// `(a/b) + i (c/d)` from small integers.
    pub fn from_parts(a: i64, b: i64, c: i64, d: i64) -> Self {
        GaussRat {
            re: BigRational::new(BigInt::from(a), BigInt::from(b)),
            im: BigRational::new(BigInt::from(c), BigInt::from(d)),
        }
    }

    pub fn from_rational(r: BigRational) -> Self {
        GaussRat { re: r, im: BigRational::zero() }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        GaussRat { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn norm_sqr(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn inv(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(GaussRat { re: &self.re / &n, im: -(&self.im / &n) })
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = GaussRat::one();
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(rat_to_f64(&self.re), rat_to_f64(&self.im))
    }
}

pub(crate) fn rat_to_f64(r: &BigRational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // scale huge numerators/denominators down before dividing
    let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
    let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
    n / d
}

impl Default for GaussRat {
    fn default() -> Self {
        GaussRat::zero()
    }
}

impl fmt::Display for GaussRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => write!(f, "{}", self.re),
            (true, false) => write!(f, "{}i", self.im),
            (false, false) => {
                if self.im.is_negative() {
                    write!(f, "({}-{}i)", self.re, -self.im.clone())
                } else {
                    write!(f, "({}+{}i)", self.re, self.im)
                }
            }
        }
    }
}

impl<'a> Add<&'a GaussRat> for &'a GaussRat {
    type Output = GaussRat;
    fn add(self, o: &GaussRat) -> GaussRat {
        GaussRat { re: &self.re + &o.re, im: &self.im + &o.im }
    }
}

impl<'a> Sub<&'a GaussRat> for &'a GaussRat {
    type Output = GaussRat;
    fn sub(self, o: &GaussRat) -> GaussRat {
        GaussRat { re: &self.re - &o.re, im: &self.im - &o.im }
    }
}

impl<'a> Mul<&'a GaussRat> for &'a GaussRat {
    type Output = GaussRat;
    fn mul(self, o: &GaussRat) -> GaussRat {
        if self.im.is_zero() && o.im.is_zero() {
            return GaussRat { re: &self.re * &o.re, im: BigRational::zero() };
        }
        GaussRat {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }
}

impl Neg for GaussRat {
    type Output = GaussRat;
    fn neg(self) -> GaussRat {
        GaussRat { re: -self.re, im: -self.im }
    }
}

impl Neg for &GaussRat {
    type Output = GaussRat;
    fn neg(self) -> GaussRat {
        GaussRat { re: -self.re.clone(), im: -self.im.clone() }
    }
}

impl Add for GaussRat {
    type Output = GaussRat;
    fn add(self, o: GaussRat) -> GaussRat {
        &self + &o
    }
}

impl Sub for GaussRat {
    type Output = GaussRat;
    fn sub(self, o: GaussRat) -> GaussRat {
        &self - &o
    }
}

impl Mul for GaussRat {
    type Output = GaussRat;
    fn mul(self, o: GaussRat) -> GaussRat {
        &self * &o
    }
}

impl Div for GaussRat {
    type Output = GaussRat;
    fn div(self, o: GaussRat) -> GaussRat {
        &self * &o.inv().expect("division by zero GaussRat")
    }
}

impl AddAssign<&GaussRat> for GaussRat {
    fn add_assign(&mut self, o: &GaussRat) {
        self.re += &o.re;
        self.im += &o.im;
    }
}

/// Element of ℚ(i)[π, π⁻¹]: a finite sum of `c_k π^k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct PiScalar {
    terms: BTreeMap<i32, GaussRat>,
}

/// One serialized term of a [`PiScalar`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiRecord {
    pub pi_pow: i32,
    pub re_num: String,
    pub re_den: String,
    pub im_num: String,
    pub im_den: String,
}

impl PiScalar {
    pub fn zero() -> Self {
        PiScalar { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::from_gauss(GaussRat::one())
    }

    pub fn int(n: i64) -> Self {
        Self::from_gauss(GaussRat::int(n))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Self::from_gauss(GaussRat::ratio(n, d))
    }

    pub fn i() -> Self {
        Self::from_gauss(GaussRat::i())
    }

    pub fn from_gauss(c: GaussRat) -> Self {
        Self::term(c, 0)
    }

    /// `c·π^k`
    pub fn term(c: GaussRat, k: i32) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(k, c);
        }
        PiScalar { terms }
    }

    pub fn pi() -> Self {
        Self::term(GaussRat::one(), 1)
    }

    pub fn pi_pow(k: i32) -> Self {
        Self::term(GaussRat::one(), k)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&0).is_some_and(|c| c.is_one())
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, &GaussRat)> {
        self.terms.iter().map(|(k, c)| (*k, c))
    }

    pub fn coeff(&self, k: i32) -> GaussRat {
        self.terms.get(&k).cloned().unwrap_or_default()
    }

    /// The single Gaussian rational if this is `c·π⁰`.
    pub fn as_gauss(&self) -> Option<GaussRat> {
        match self.terms.len() {
            0 => Some(GaussRat::zero()),
            1 => self.terms.get(&0).cloned(),
            _ => None,
        }
    }

    pub fn scale(&self, c: &GaussRat) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        PiScalar { terms: self.terms.iter().map(|(k, v)| (*k, v * c)).collect() }
    }

    /// Multiply by π^s.
    pub fn shift_pi(&self, s: i32) -> Self {
        PiScalar { terms: self.terms.iter().map(|(k, v)| (k + s, v.clone())).collect() }
    }

    /// Inverse, available only for monomials `c·π^k`.
    pub fn inv(&self) -> Result<Self> {
        if self.terms.len() != 1 {
            return Err(Error::NotInvertible(self.to_string()));
        }
        let (k, c) = self.terms.iter().next().unwrap();
        Ok(Self::term(c.inv()?, -k))
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    pub fn conj(&self) -> Self {
        PiScalar { terms: self.terms.iter().map(|(k, v)| (*k, v.conj())).collect() }
    }

    /// Numeric value with π = `std::f64::consts::PI` (correctly rounded double).
    pub fn eval(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in &self.terms {
            acc += c.to_c64() * std::f64::consts::PI.powi(*k);
        }
        acc
    }

    fn add_term(&mut self, k: i32, c: &GaussRat) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&k) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.terms.remove(&k);
                }
            }
            None => {
                self.terms.insert(k, c.clone());
            }
        }
    }

    pub fn to_records(&self) -> Vec<PiRecord> {
        self.terms
            .iter()
            .map(|(k, c)| PiRecord {
                pi_pow: *k,
                re_num: c.re.numer().to_string(),
                re_den: c.re.denom().to_string(),
                im_num: c.im.numer().to_string(),
                im_den: c.im.denom().to_string(),
            })
            .collect()
    }

    pub fn from_records(recs: &[PiRecord]) -> Result<Self> {
        let mut out = PiScalar::zero();
        for r in recs {
            let p = |s: &str| -> Result<BigInt> {
                s.trim().parse::<BigInt>().map_err(|_| Error::Parse(format!("bad integer {s:?}")))
            };
            let (rd, id) = (p(&r.re_den)?, p(&r.im_den)?);
            if rd.is_zero() || id.is_zero() {
                return Err(Error::Parse("zero denominator".into()));
            }
            let c = GaussRat::new(BigRational::new(p(&r.re_num)?, rd), BigRational::new(p(&r.im_num)?, id));
            out.add_term(r.pi_pow, &c);
        }
        Ok(out)
    }
}

impl Serialize for PiScalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_records().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PiScalar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let recs = Vec::<PiRecord>::deserialize(d)?;
        PiScalar::from_records(&recs).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for PiScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}·π")?,
                _ => write!(f, "{c}·π^{k}")?,
            }
        }
        Ok(())
    }
}

impl<'a> Add<&'a PiScalar> for &'a PiScalar {
    type Output = PiScalar;
    fn add(self, o: &PiScalar) -> PiScalar {
        let mut out = self.clone();
        for (k, c) in &o.terms {
            out.add_term(*k, c);
        }
        out
    }
}

impl<'a> Sub<&'a PiScalar> for &'a PiScalar {
    type Output = PiScalar;
    fn sub(self, o: &PiScalar) -> PiScalar {
        let mut out = self.clone();
        for (k, c) in &o.terms {
            out.add_term(*k, &-c);
        }
        out
    }
}

impl<'a> Mul<&'a PiScalar> for &'a PiScalar {
    type Output = PiScalar;
    fn mul(self, o: &PiScalar) -> PiScalar {
        let mut out = PiScalar::zero();
        for (k1, c1) in &self.terms {
            for (k2, c2) in &o.terms {
                out.add_term(k1 + k2, &(c1 * c2));
            }
        }
        out
    }
}

impl Neg for &PiScalar {
    type Output = PiScalar;
    fn neg(self) -> PiScalar {
        PiScalar { terms: self.terms.iter().map(|(k, v)| (*k, -v)).collect() }
    }
}

impl Neg for PiScalar {
    type Output = PiScalar;
    fn neg(self) -> PiScalar {
        -&self
    }
}

impl Add for PiScalar {
    type Output = PiScalar;
    fn add(self, o: PiScalar) -> PiScalar {
        &self + &o
    }
}

impl Sub for PiScalar {
    type Output = PiScalar;
    fn sub(self, o: PiScalar) -> PiScalar {
        &self - &o
    }
}

impl Mul for PiScalar {
    type Output = PiScalar;
    fn mul(self, o: PiScalar) -> PiScalar {
        &self * &o
    }
}

impl AddAssign<&PiScalar> for PiScalar {
    fn add_assign(&mut self, o: &PiScalar) {
        for (k, c) in &o.terms {
            self.add_term(*k, c);
        }
    }
}

impl From<GaussRat> for PiScalar {
    fn from(c: GaussRat) -> Self {
        PiScalar::from_gauss(c)
    }
}

pub fn pis_add(a: &PiScalar, b: &PiScalar) -> PiScalar {
    a + b
}

pub fn pis_mul(a: &PiScalar, b: &PiScalar) -> PiScalar {
    a * b
}

pub fn pis_eval(a: &PiScalar) -> Complex64 {
    a.eval()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_leaves_empty_map() {
        let a = PiScalar::term(GaussRat::int(2), 2);
        let b = PiScalar::term(GaussRat::int(-2), 2);
        let s = pis_add(&a, &b);
        assert!(s.is_zero());
        assert_eq!(s.terms().count(), 0);
    }

    #[test]
    fn disjoint_exponents() {
        let s = pis_add(&PiScalar::one(), &PiScalar::term(GaussRat::i(), 1));
        assert_eq!(s.coeff(0), GaussRat::one());
        assert_eq!(s.coeff(1), GaussRat::i());
        assert_eq!(s.terms().count(), 2);
    }

    #[test]
    fn rational_addition() {
        let s = pis_add(&PiScalar::term(GaussRat::ratio(1, 2), 2), &PiScalar::term(GaussRat::ratio(1, 3), 2));
        assert_eq!(s, PiScalar::term(GaussRat::ratio(5, 6), 2));
    }

    #[test]
    fn products() {
        let p = pis_mul(&PiScalar::pi(), &PiScalar::term(GaussRat::i(), -1));
        assert_eq!(p, PiScalar::i());
        let a = PiScalar::term(GaussRat::from_parts(1, 1, 1, 1), 1);
        let b = PiScalar::term(GaussRat::from_parts(1, 1, -1, 1), 1);
        assert_eq!(pis_mul(&a, &b), PiScalar::term(GaussRat::int(2), 2));
        let c = pis_mul(&PiScalar::term(GaussRat::int(3), 2), &PiScalar::term(GaussRat::int(2), 2));
        assert_eq!(c, PiScalar::term(GaussRat::int(6), 4));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn eval_values() {
        assert_eq!(pis_eval(&PiScalar::one()), Complex64::new(1.0, 0.0));
        // oracle: 30-digit π as an exact rational
        let pi30 = BigRational::new(
            "314159265358979323846264338328".parse().unwrap(),
            BigInt::from(10).pow(29),
        );
        let want = rat_to_f64(&(&pi30 * &pi30 / BigRational::from_integer(BigInt::from(2))));
        let half_pi2 = pis_eval(&PiScalar::term(GaussRat::ratio(1, 2), 2));
        assert!((half_pi2.re - want).abs() < 1e-14);
        assert!((half_pi2.re - 4.934802200544679).abs() < 1e-14);
        let want = rat_to_f64(&(BigRational::one() / &pi30));
        let ipi = pis_eval(&PiScalar::term(GaussRat::i(), -1));
        assert!(ipi.re == 0.0 && (ipi.im - want).abs() < 1e-16);
        assert!((ipi.im - 0.3183098861837907).abs() < 1e-16);
    }

    #[test]
    fn json_round_trip() {
        let a = &PiScalar::term(GaussRat::from_parts(-7, 3, 5, 11), -2) + &PiScalar::term(GaussRat::ratio(128, 729), 4);
        let s = serde_json::to_string(&a).unwrap();
        let b: PiScalar = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&b).unwrap(), s);
    }

    #[test]
    fn gauss_inverse() {
        let a = GaussRat::from_parts(3, 2, -1, 5);
        assert!((&a * &a.inv().unwrap()).is_one());
        assert!(GaussRat::zero().inv().is_err());
    }
}
