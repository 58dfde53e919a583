//! Exact x → 0 expansion of A(x) L^TT[π→x](z; A⁻¹GA) A(x)⁻¹ over ℚ(i).
//!
//! With w = xz the trigonometric operator reads (N/z)(w/sin w) Σ_r P_r e^{irw}, so every
//! entry of the conjugated matrix is a double series in x and z whose coefficients are
//! linear forms in g.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::glpoly::GlPoly;
use crate::lax::{linear_coeff, load_appendix, trig_top_lax, w1, AppendixFamily, DiagReading, Family, LaxMatrix, Payload, W1Reading};
use crate::linalg::{c, CMat, C64};
use crate::scalar::{GaussRat, PiScalar};
use crate::zseries::ZSeries;

/// Coefficients of g_pq, row-major.
pub type LinForm = Vec<GaussRat>;

#[derive(Clone, Debug)]
pub struct XSeries {
    pub n: usize,
    pub h: Vec<i64>,
    pub reading: W1Reading,
    /// every x power ≤ emax is complete
    pub emax: i32,
    /// (x power, z power) → N² entries (row-major), each a linear form in g
    pub terms: BTreeMap<(i32, i32), Vec<LinForm>>,
}

fn gr(r: &BigRational) -> GaussRat {
    GaussRat::from_rational(r.clone())
}

/// Inverse of a lower unitriangular rational matrix.
fn unitri_inverse(m: &[Vec<BigRational>]) -> Result<Vec<Vec<BigRational>>> {
    let n = m.len();
    for (i, row) in m.iter().enumerate() {
        if !row[i].is_one() || row.iter().skip(i + 1).any(|x| !x.is_zero()) {
            return Err(Error::Invalid("W₁ is not lower unitriangular".into()));
        }
    }
    let mut inv = vec![vec![BigRational::zero(); n]; n];
    for j in 0..n {
        inv[j][j] = BigRational::one();
        for i in j + 1..n {
            let mut acc = BigRational::zero();
            for k in j..i {
                acc += &m[i][k] * &inv[k][j];
            }
            inv[i][j] = -acc;
        }
    }
    Ok(inv)
}

/// Taylor coefficients of w/sin w through w^amax.
fn w_over_sin(amax: usize) -> Vec<GaussRat> {
    // sin w / w = Σ (−1)^k w^{2k}/(2k+1)!
    let mut s = vec![GaussRat::zero(); amax + 1];
    let mut fact = BigRational::one();
    for a in 0..=amax {
        if a > 0 {
            fact = fact * BigRational::from_integer(((a + 1) as i64).into());
        }
        if a % 2 == 0 {
            let v = BigRational::one() / &fact;
            s[a] = GaussRat::from_rational(if (a / 2) % 2 == 0 { v } else { -v });
        }
    }
    let mut inv = vec![GaussRat::zero(); amax + 1];
    inv[0] = GaussRat::one();
    for a in 1..=amax {
        let mut acc = GaussRat::zero();
        for k in 1..=a {
            acc += &(&s[k] * &inv[a - k]);
        }
        inv[a] = -acc;
    }
    inv
}

/// Taylor coefficients of (w/sin w) e^{irw}.
fn phase_series(r: &num_rational::Rational64, base: &[GaussRat]) -> Vec<GaussRat> {
    let amax = base.len() - 1;
    let ir = GaussRat::from_parts(0, 1, *r.numer(), *r.denom());
    let mut e = vec![GaussRat::one(); amax + 1];
    for a in 1..=amax {
        e[a] = &(&e[a - 1] * &ir) * &GaussRat::ratio(1, a as i64);
    }
    (0..=amax)
        .map(|a| {
            let mut acc = GaussRat::zero();
            for k in 0..=a {
                acc += &(&base[k] * &e[a - k]);
            }
            acc
        })
        .collect()
}

impl XSeries {
    /// Expansion with gauge A(x) = diag(x^{−h}) W₁, complete through x^emax.
    pub fn build(n: usize, h: &[i64], reading: W1Reading, emax: i32) -> Result<XSeries> {
        if h.len() != n {
            return Err(Error::Invalid(format!("need {n} exponents, got {}", h.len())));
        }
        let lax = trig_top_lax(n, DiagReading::Cyclic)?;
        let pe = lax.phase_entries().expect("phase payload");
        let wm = w1(n, reading);
        let wi = unitri_inverse(&wm)?;
        let (hmin, hmax) = (*h.iter().min().unwrap(), *h.iter().max().unwrap());
        let smin = -2 * (hmax - hmin) as i32;
        let amax = (emax - smin).max(0) as usize;
        let base = w_over_sin(amax);
        let nn = n * n;

        let mut phases: Vec<num_rational::Rational64> = Vec::new();
        for row in pe {
            for e in row {
                for (r, _) in e.iter() {
                    if !phases.contains(r) {
                        phases.push(*r);
                    }
                }
            }
        }
        phases.sort();

        let mut terms: BTreeMap<(i32, i32), Vec<LinForm>> = BTreeMap::new();
        let nf = GaussRat::int(n as i64);
        for r in &phases {
            // C[ab][kl]: coefficient of g′_kl in P_r,ab
            let mut cm = vec![vec![GaussRat::zero(); nn]; nn];
            for a in 0..n {
                for b in 0..n {
                    let p = pe[a][b].component(*r);
                    for k in 0..n {
                        for l in 0..n {
                            let v = linear_coeff(&p, k + 1, l + 1);
                            if v.is_zero() {
                                continue;
                            }
                            cm[a * n + b][k * n + l] = v
                                .as_gauss()
                                .ok_or_else(|| Error::Invalid("constructor coefficient carries π".into()))?;
                        }
                    }
                }
            }
            // g′_kl = Σ_pq W⁻¹_kp W_ql x^{h_p − h_q} g_pq; the x power is added below
            let mut d = vec![vec![GaussRat::zero(); nn]; nn];
            for ab in 0..nn {
                for k in 0..n {
                    for l in 0..n {
                        let cv = &cm[ab][k * n + l];
                        if cv.is_zero() {
                            continue;
                        }
                        for p in 0..n {
                            if wi[k][p].is_zero() {
                                continue;
                            }
                            for q in 0..n {
                                if wm[q][l].is_zero() {
                                    continue;
                                }
                                let t = &(cv * &gr(&wi[k][p])) * &gr(&wm[q][l]);
                                d[ab][p * n + q] += &t;
                            }
                        }
                    }
                }
            }
            // K[ij][pq] = Σ_ab W_ia D[ab][pq] W⁻¹_bj
            let mut kk = vec![vec![GaussRat::zero(); nn]; nn];
            for i in 0..n {
                for j in 0..n {
                    for a in 0..n {
                        if wm[i][a].is_zero() {
                            continue;
                        }
                        for b in 0..n {
                            if wi[b][j].is_zero() {
                                continue;
                            }
                            let f = &gr(&wm[i][a]) * &gr(&wi[b][j]);
                            for pq in 0..nn {
                                if d[a * n + b][pq].is_zero() {
                                    continue;
                                }
                                let t = &f * &d[a * n + b][pq];
                                kk[i * n + j][pq] += &t;
                            }
                        }
                    }
                }
            }
            let fr = phase_series(r, &base);
            for i in 0..n {
                for j in 0..n {
                    for p in 0..n {
                        for q in 0..n {
                            let kv = &kk[i * n + j][p * n + q];
                            if kv.is_zero() {
                                continue;
                            }
                            let s = (h[j] - h[i] + h[p] - h[q]) as i32;
                            for (a, f) in fr.iter().enumerate() {
                                let e = a as i32 + s;
                                if e > emax || f.is_zero() {
                                    continue;
                                }
                                let v = &(&nf * f) * kv;
                                let slot = terms
                                    .entry((e, a as i32 - 1))
                                    .or_insert_with(|| vec![vec![GaussRat::zero(); nn]; nn]);
                                slot[i * n + j][p * n + q] += &v;
                            }
                        }
                    }
                }
            }
        }
        terms.retain(|_, m| m.iter().any(|f| f.iter().any(|x| !x.is_zero())));
        Ok(XSeries { n, h: h.to_vec(), reading, emax, terms })
    }

    /// Lowest x power with a nonzero coefficient.
    pub fn valuation(&self) -> Option<i32> {
        self.terms.keys().map(|k| k.0).min()
    }

    pub fn diverges(&self) -> bool {
        self.valuation().is_some_and(|v| v < 0)
    }

    /// Count of nonzero linear forms at negative x powers.
    pub fn divergent_terms(&self) -> usize {
        self.terms
            .iter()
            .filter(|(k, _)| k.0 < 0)
            .map(|(_, m)| m.iter().filter(|f| f.iter().any(|x| !x.is_zero())).count())
            .sum()
    }

    /// The x⁰ coefficient as a symbolic Laurent Lax matrix.
    pub fn limit(&self) -> LaxMatrix {
        let n = self.n;
        let mut rows = vec![vec![ZSeries::<GlPoly>::zero(); n]; n];
        for ((e, zp), m) in &self.terms {
            if *e != 0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    let p = linform_poly(n, &m[i * n + j]);
                    if !p.is_zero() {
                        rows[i][j] = rows[i][j].add(&ZSeries::monomial(p, *zp));
                    }
                }
            }
        }
        LaxMatrix { n, family: Family::RatTop, payload: Payload::Laurent(rows) }
    }

    /// Σ_{e ∈ range} x^e M_e(z; G).
    pub fn eval(&self, x: f64, z: C64, g: &CMat, lo: i32, hi: i32) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(n, n);
        for ((e, zp), m) in &self.terms {
            if *e < lo || *e > hi {
                continue;
            }
            let w = c(x.powi(*e), 0.0) * z.powi(*zp);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = c(0.0, 0.0);
                    for (k, f) in m[i * n + j].iter().enumerate() {
                        if !f.is_zero() {
                            acc += f.to_c64() * g[(k / n, k % n)];
                        }
                    }
                    out[(i, j)] += acc * w;
                }
            }
        }
        out
    }
}

pub fn linform_poly(n: usize, f: &[GaussRat]) -> GlPoly {
    let mut p = GlPoly::zero(n);
    for (k, v) in f.iter().enumerate() {
        if !v.is_zero() {
            p = &p + &GlPoly::var(n, k / n + 1, k % n + 1).scalar_mul(&PiScalar::from_gauss(v.clone()));
        }
    }
    p
}

/// Entry-by-entry exact difference of two symbolic Laurent matrices; empty when equal.
pub fn laurent_diff(a: &LaxMatrix, b: &LaxMatrix) -> Result<Vec<(usize, usize, i32, GlPoly)>> {
    let (Payload::Laurent(la), Payload::Laurent(lb)) = (&a.payload, &b.payload) else {
        return Err(Error::Invalid("exact comparison needs Laurent payloads".into()));
    };
    if a.n != b.n {
        return Err(Error::RankMismatch(a.n, b.n));
    }
    let mut out = Vec::new();
    for i in 0..a.n {
        for j in 0..a.n {
            let d = la[i][j].sub(&lb[i][j]);
            for (k, p) in d.iter() {
                if !p.is_zero() {
                    out.push((i + 1, j + 1, k, p.clone().with_rank(a.n)?));
                }
            }
        }
    }
    Ok(out)
}

/// Rational top family for general N: the exact limit with h = (0, 1, …, N−2, N) and the binomial W₁.
pub fn rational_top_lax(n: usize) -> Result<LaxMatrix> {
    let xs = XSeries::build(n, &crate::lax::h_vector(n), W1Reading::Binomial, 0)?;
    if xs.diverges() {
        return Err(Error::Invalid(format!("rational limit diverges for N = {n}")));
    }
    Ok(xs.limit())
}

/// Exact comparison of the limit with the bundled Appendix R matrix.
pub fn limit_vs_appendix(n: usize) -> Result<Vec<(usize, usize, i32, GlPoly)>> {
    laurent_diff(&rational_top_lax(n)?, &load_appendix(AppendixFamily::R, n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lax::h_vector;

    #[test]
    fn w_over_sin_coefficients() {
        // w/sin w = 1 + w²/6 + 7w⁴/360 + …
        let s = w_over_sin(4);
        assert_eq!(s[0], GaussRat::one());
        assert!(s[1].is_zero());
        assert_eq!(s[2], GaussRat::ratio(1, 6));
        assert_eq!(s[4], GaussRat::ratio(7, 360));
    }

    #[test]
    fn unitriangular_inverse() {
        let m = w1(4, W1Reading::Binomial);
        let inv = unitri_inverse(&m).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = BigRational::zero();
                for k in 0..4 {
                    acc += &m[i][k] * &inv[k][j];
                }
                assert_eq!(acc, if i == j { BigRational::one() } else { BigRational::zero() });
            }
        }
    }

    #[test]
    fn n2_limit_closed_form() {
        let xs = XSeries::build(2, &h_vector(2), W1Reading::Binomial, 0).unwrap();
        assert!(!xs.diverges());
        let l = xs.limit();
        let g = |i, j| GlPoly::var(2, i, j);
        let a = (&g(1, 1) - &g(2, 2)).scale_gauss(&GaussRat::ratio(1, 2));
        let two = GaussRat::int(2);
        let m = |p: GlPoly, k| ZSeries::monomial(p.scale_gauss(&two), k);
        let want = vec![
            vec![m(a.clone(), -1).add(&m(-&g(1, 2), 1)), m(g(1, 2), -1)],
            vec![m(g(2, 1), -1).add(&m(a.scale_gauss(&GaussRat::int(-2)), 1)).add(&m(-&g(1, 2), 3)), m(-&a, -1).add(&m(g(1, 2), 1))],
        ];
        let want = LaxMatrix { n: 2, family: Family::RatTop, payload: Payload::Laurent(want) };
        assert!(laurent_diff(&l, &want).unwrap().is_empty());
    }

    #[test]
    fn literal_w1_diverges() {
        for n in 3..=4 {
            let xs = XSeries::build(n, &h_vector(n), W1Reading::Literal, 0).unwrap();
            assert!(xs.diverges(), "N = {n}");
        }
    }

    #[test]
    fn limit_equals_appendix_r_for_n3_n4() {
        for n in 3..=4 {
            let d = limit_vs_appendix(n).unwrap();
            assert!(d.is_empty(), "N = {n}: {} differing coefficients", d.len());
        }
        assert!(!limit_vs_appendix(2).unwrap().is_empty());
    }
}
