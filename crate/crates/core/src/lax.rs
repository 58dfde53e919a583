//! Lax matrices of the tops and of the CM systems, gauge matrices, bundled appendix data.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::glpoly::{GlPoly, PolyJson};
use crate::linalg::{c, CMat, C64};
use crate::scalar::{GaussRat, PiScalar};
use crate::zseries::{series_inv_sin, PhaseSum, ZSeries};

pub type SMap = BTreeMap<(usize, usize), C64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    EllipticTop,
    EllipticCm,
    TrigTop,
    TrigCm,
    RatTop,
    RatCm,
    AppendixT,
    AppendixR,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::EllipticTop => "elliptic-top",
            Family::EllipticCm => "elliptic-cm",
            Family::TrigTop => "trig-top",
            Family::TrigCm => "trig-cm",
            Family::RatTop => "rat-top",
            Family::RatCm => "rat-cm",
            Family::AppendixT => "appendix-T",
            Family::AppendixR => "appendix-R",
        };
        f.write_str(s)
    }
}

type Evaluator = Arc<dyn Fn(C64) -> Result<CMat> + Send + Sync>;

#[derive(Clone)]
pub enum Payload {
    /// (πN / sin πz) · Σ_r P_r e^{iπrz}; the P_r are stored.
    Phase(Vec<Vec<PhaseSum<GlPoly>>>),
    /// Exact Laurent polynomials, normalization included.
    Laurent(Vec<Vec<ZSeries<GlPoly>>>),
    Numeric { params: String, eval: Evaluator },
}

#[derive(Clone)]
pub struct LaxMatrix {
    pub n: usize,
    pub family: Family,
    pub payload: Payload,
}

impl fmt::Debug for LaxMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.payload {
            Payload::Phase(_) => "phase".to_string(),
            Payload::Laurent(_) => "laurent".to_string(),
            Payload::Numeric { params, .. } => format!("numeric({params})"),
        };
        write!(f, "LaxMatrix {{ n: {}, family: {}, payload: {kind} }}", self.n, self.family)
    }
}

impl LaxMatrix {
    pub fn is_symbolic(&self) -> bool {
        !matches!(self.payload, Payload::Numeric { .. })
    }

    /// Entries as Laurent series at z = 0, each known through z^order.
    pub fn laurent_entries(&self, order: i32) -> Result<Vec<Vec<ZSeries<GlPoly>>>> {
        match &self.payload {
            Payload::Phase(p) => {
                let pref = series_inv_sin(order + 1)?
                    .scale(&PiScalar::term(GaussRat::int(self.n as i64), 1))
                    .map(|c| GlPoly::constant(0, c.clone()));
                Ok(p.iter()
                    .map(|row| row.iter().map(|e| pref.mul(&e.to_zseries(order + 1)).truncate(order)).collect())
                    .collect())
            }
            Payload::Laurent(l) => Ok(l.clone()),
            Payload::Numeric { .. } => Err(Error::Invalid("numeric Lax matrix has no symbolic entries".into())),
        }
    }

    pub fn phase_entries(&self) -> Option<&Vec<Vec<PhaseSum<GlPoly>>>> {
        match &self.payload {
            Payload::Phase(p) => Some(p),
            _ => None,
        }
    }

    /// Numeric value at z; symbolic payloads substitute g_ij = G.
    pub fn evaluate(&self, z: C64, g: Option<&CMat>) -> Result<CMat> {
        let n = self.n;
        match &self.payload {
            Payload::Numeric { eval, .. } => eval(z),
            Payload::Phase(p) => {
                let g = g.ok_or_else(|| Error::Invalid("symbolic Lax matrix needs G".into()))?;
                check_square(g, n)?;
                let s = (z * PI).sin();
                if s.norm() < 1e-300 {
                    return Err(Error::Singular(format!("sin(πz) = 0 at z = {z}")));
                }
                let pref = c(PI * n as f64, 0.0) / s;
                Ok(CMat::from_fn(n, n, |i, j| pref * p[i][j].eval_with(z, |q| q.evaluate(g))))
            }
            Payload::Laurent(l) => {
                let g = g.ok_or_else(|| Error::Invalid("symbolic Lax matrix needs G".into()))?;
                check_square(g, n)?;
                if z.norm() == 0.0 {
                    return Err(Error::Singular("z = 0".into()));
                }
                Ok(CMat::from_fn(n, n, |i, j| l[i][j].eval_with(z, |q| q.evaluate(g))))
            }
        }
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        let mut entries = Vec::new();
        match &self.payload {
            Payload::Phase(p) => {
                for (i, row) in p.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        let terms: Vec<_> = e
                            .iter()
                            .map(|(r, q)| json!({"phase": [r.numer(), r.denom()], "poly": q.to_json()}))
                            .collect();
                        entries.push(json!({"row": i + 1, "col": j + 1, "terms": terms}));
                    }
                }
                Ok(json!({
                    "family": self.family.to_string(),
                    "N": self.n,
                    "form": "phase",
                    "prefactor": "pi*N/sin(pi*z)",
                    "entries": entries,
                }))
            }
            Payload::Laurent(l) => {
                // rational tops are written as (N/z) · polynomial, matching the appendix layout
                let factored = matches!(self.family, Family::AppendixR | Family::RatTop);
                let inv_n = PiScalar::ratio(1, self.n as i64);
                for (i, row) in l.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        let terms: Vec<_> = e
                            .iter()
                            .filter(|(_, q)| !q.is_zero())
                            .map(|(k, q)| {
                                if factored {
                                    json!({"z_pow": k + 1, "poly": q.scalar_mul(&inv_n).to_json()})
                                } else {
                                    json!({"z_pow": k, "poly": q.to_json()})
                                }
                            })
                            .collect();
                        entries.push(json!({"row": i + 1, "col": j + 1, "terms": terms}));
                    }
                }
                Ok(json!({
                    "family": self.family.to_string(),
                    "N": self.n,
                    "form": "laurent",
                    "prefactor": if factored { "N/z" } else { "1" },
                    "entries": entries,
                }))
            }
            Payload::Numeric { params, .. } => Err(Error::Invalid(format!("numeric Lax matrix ({params}) has no JSON form"))),
        }
    }
}

fn check_square(g: &CMat, n: usize) -> Result<()> {
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::RankMismatch(n, g.nrows()));
    }
    Ok(())
}

// ---------------------------------------------------------------- sin basis

/// e^{πiab/N} Q^a Λ^b for arbitrary integers a, b (quasi-periodic in both).
pub fn sin_basis_ext(n: usize, a: i64, b: i64) -> CMat {
    let nf = n as f64;
    let ph = c(0.0, PI * (a as f64) * (b as f64) / nf).exp();
    let mut t = CMat::zeros(n, n);
    let shift = b.rem_euclid(n as i64) as usize;
    for i in 0..n {
        let q = c(0.0, 2.0 * PI * (a as f64) * ((i + 1) as f64) / nf).exp();
        t[(i, (i + shift) % n)] = ph * q;
    }
    t
}

pub fn sin_basis(n: usize, m: usize, k: usize) -> Result<CMat> {
    if n < 2 || m >= n || k >= n || (m, k) == (0, 0) {
        return Err(Error::Index(format!("T_({m},{k}) for N = {n}")));
    }
    Ok(sin_basis_ext(n, m as i64, k as i64))
}

/// All (m, n) ∈ [0, N)² except (0, 0).
pub fn s_indices(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|m| (0..n).map(move |k| (m, k))).filter(|p| *p != (0, 0)).collect()
}

/// S_{a,b} for arbitrary integers, using T_{a+pN,b+qN} = (−1)^{a₀q+pb₀+pqN} T_{a₀,b₀}.
pub fn s_ext(s: &SMap, n: usize, a: i64, b: i64) -> C64 {
    let ni = n as i64;
    let (a0, b0) = (a.rem_euclid(ni), b.rem_euclid(ni));
    if (a0, b0) == (0, 0) {
        return c(0.0, 0.0);
    }
    let (p, q) = ((a - a0) / ni, (b - b0) / ni);
    let v = s.get(&(a0 as usize, b0 as usize)).copied().unwrap_or_default();
    if (a0 * q + p * b0 + p * q * ni).rem_euclid(2) == 0 {
        v
    } else {
        -v
    }
}

// ---------------------------------------------------------------- states

/// Top phase point stored as the g-matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TopState {
    n: usize,
    g: CMat,
}

impl TopState {
    pub fn from_g(g: CMat) -> Result<Self> {
        if g.nrows() != g.ncols() || g.nrows() < 2 {
            return Err(Error::Invalid(format!("g must be square of size ≥ 2, got {}×{}", g.nrows(), g.ncols())));
        }
        Ok(TopState { n: g.nrows(), g })
    }

    /// G = Σ S_mn T_mn (traceless).
    pub fn from_s(n: usize, s: &SMap) -> Result<Self> {
        let mut g = CMat::zeros(n, n);
        for (&(m, k), v) in s {
            g += sin_basis(n, m, k)? * *v;
        }
        TopState::from_g(g)
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn g(&self) -> &CMat {
        &self.g
    }

    /// S_mn = Tr(G T_mn†)/N.
    pub fn s(&self) -> SMap {
        let nf = self.n as f64;
        s_indices(self.n)
            .into_iter()
            .map(|(m, k)| {
                let t = sin_basis_ext(self.n, m as i64, k as i64);
                ((m, k), (&self.g * t.adjoint()).trace() / nf)
            })
            .collect()
    }

    pub fn trace_part(&self) -> C64 {
        self.g.trace() / self.n as f64
    }
}

/// Literal index form of the trigonometric basis change:
/// S_{n,m} = Σ_{|b−a|=n} exp(−πim(|b−a|+2|a|)/N) g_ab with |x| ∈ 1..N.
/// It does not reproduce the trigonometric limit; kept for the negative control.
pub fn s_printed(g: &CMat) -> SMap {
    let n = g.nrows();
    let mut out = SMap::new();
    for d in 0..n {
        for m in 0..n {
            let mut acc = c(0.0, 0.0);
            for a in 1..=n {
                for b in 1..=n {
                    let diff = (b as i64 - a as i64).rem_euclid(n as i64) as usize;
                    if diff != d {
                        continue;
                    }
                    let dd = if diff == 0 { n } else { diff };
                    acc += c(0.0, -PI * (m * (dd + 2 * a)) as f64 / n as f64).exp() * g[(a - 1, b - 1)];
                }
            }
            if (d, m) != (0, 0) {
                out.insert((d, m), acc);
            }
        }
    }
    out
}

/// CM phase point (u_i, v_i, ν).
#[derive(Clone, Debug, PartialEq)]
pub struct CMState {
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub nu: C64,
}

impl CMState {
    pub fn new(u: Vec<C64>, v: Vec<C64>, nu: C64) -> Result<Self> {
        let s = CMState { u, v, nu };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.len() != self.v.len() || self.u.len() < 2 {
            return Err(Error::Invalid(format!("need N ≥ 2 coordinates and momenta, got {} and {}", self.u.len(), self.v.len())));
        }
        for i in 0..self.u.len() {
            for j in 0..i {
                if (self.u[i] - self.u[j]).norm() < 1e-12 {
                    return Err(Error::Singular(format!("coincident particles u_{} = u_{}", j + 1, i + 1)));
                }
            }
        }
        Ok(())
    }

    /// Center-of-mass frame: Σu = 0, Σv = 0.
    pub fn centered(&self) -> CMState {
        let nf = self.n() as f64;
        let mu: C64 = self.u.iter().sum::<C64>() / nf;
        let mv: C64 = self.v.iter().sum::<C64>() / nf;
        CMState { u: self.u.iter().map(|x| x - mu).collect(), v: self.v.iter().map(|x| x - mv).collect(), nu: self.nu }
    }

    pub fn flipped(&self) -> CMState {
        CMState { u: self.u.iter().map(|x| -x).collect(), v: self.v.clone(), nu: -self.nu }
    }
}

// ---------------------------------------------------------------- trig top

/// How the diagonal coefficients A_a, B_a of the trigonometric constructor are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagReading {
    /// weights N−1−2((k−a) mod N) and N−1−2((a−k) mod N)
    Cyclic,
    /// |k−a| as ordinary absolute value in both
    PrintedAbs,
    /// |x| as the residue in 1..N
    PrintedBars,
}

/// x mod N in 1..N.
pub fn bars(x: i64, n: usize) -> usize {
    let r = x.rem_euclid(n as i64) as usize;
    if r == 0 {
        n
    } else {
        r
    }
}

fn r64(p: i64, q: i64) -> Rational64 {
    Rational64::new(p, q)
}

/// (e^{iπz} − e^{−iπz}) e^{iπsz} · p added to acc.
fn add_two_i_sin(acc: &mut PhaseSum<GlPoly>, s: Rational64, p: &GlPoly, sign: i64) {
    let one = Rational64::one();
    acc.add_term(s + one, &p.scale_gauss(&GaussRat::int(sign)));
    acc.add_term(s - one, &p.scale_gauss(&GaussRat::int(-sign)));
}

/// The general-N trigonometric top L-operator, stored as sin(πz)/(πN) · L^TT.
pub fn trig_top_lax(n: usize, reading: DiagReading) -> Result<LaxMatrix> {
    if n < 2 {
        return Err(Error::Invalid(format!("N = {n} < 2")));
    }
    let ni = n as i64;
    let g = |a: usize, b: usize| GlPoly::var(n, a, b);
    let sum_g = |pairs: Vec<(usize, usize)>| {
        let mut acc = GlPoly::zero(n);
        for (a, b) in pairs {
            acc = &acc + &g(a, b);
        }
        acc
    };
    let mut rows = vec![vec![PhaseSum::<GlPoly>::zero(); n]; n];
    for a in 1..=n {
        for b in 1..=n {
            let (ai, bi) = (a as i64, b as i64);
            let mut e = PhaseSum::zero();
            if a < b {
                e.add_term(r64(-(ni - 2 * bi + 2 * ai), ni), &g(a, b));
                let s = sum_g((1..=n - b).map(|k| (a + k, b + k)).collect());
                add_two_i_sin(&mut e, r64(2 * (bi - ai), ni), &s, -1);
            } else if a > b && a != n {
                e.add_term(r64(-(-ni - 2 * bi + 2 * ai), ni), &g(a, b));
                let s = sum_g((1..=b).map(|k| (a - k, bars(bi - k as i64, n))).collect());
                add_two_i_sin(&mut e, r64(-2 * (ai - bi), ni), &s, 1);
            } else if a == n && b < n {
                e.add_term(r64(-(ni - 2 * bi), ni), &g(n, b));
                let s1 = sum_g((1..=n - b).map(|k| (k, b + k)).collect());
                add_two_i_sin(&mut e, r64(2 * bi, ni), &s1, -1);
                let s2 = sum_g((0..b).map(|k| (bars(ni - bi + k as i64, n), bars(ni + k as i64, n))).collect());
                add_two_i_sin(&mut e, r64(2 * (bi - ni), ni), &s2, 1);
            } else {
                let (wa, wb): (Vec<i64>, Vec<i64>) = (1..=n)
                    .map(|k| {
                        let ki = k as i64;
                        match reading {
                            DiagReading::Cyclic => {
                                (ni - 1 - 2 * (ki - ai).rem_euclid(ni), ni - 1 - 2 * (ai - ki).rem_euclid(ni))
                            }
                            DiagReading::PrintedAbs => (ni - 1 - 2 * (ki - ai).abs(), ni - 1 - 2 * (ai - ki).abs()),
                            DiagReading::PrintedBars => {
                                (ni - 1 - 2 * bars(ki - ai, n) as i64, ni - 1 - 2 * bars(ai - ki, n) as i64)
                            }
                        }
                    })
                    .unzip();
                let mut pa = GlPoly::zero(n);
                let mut pb = GlPoly::zero(n);
                for k in 1..=n {
                    pa = &pa + &g(k, k).scale_gauss(&GaussRat::ratio(wa[k - 1], 2 * ni));
                    pb = &pb + &g(k, k).scale_gauss(&GaussRat::ratio(wb[k - 1], 2 * ni));
                }
                e.add_term(r64(-1, 1), &pa);
                e.add_term(r64(1, 1), &pb);
            }
            rows[a - 1][b - 1] = e;
        }
    }
    Ok(LaxMatrix { n, family: Family::TrigTop, payload: Payload::Phase(rows) })
}

/// The sl(2) rational top operator [[S₃/z, 2S⁺/z], [2S⁻/z + zS₃, −S₃/z]] written in g
/// via S₃ = (g₁₁−g₂₂)/2, S⁺ = g₁₂/2, S⁻ = g₂₁/2.
pub fn rational_top_lax_sl2() -> LaxMatrix {
    let g = |a, b| GlPoly::var(2, a, b);
    let a = (&g(1, 1) - &g(2, 2)).scale_gauss(&GaussRat::ratio(1, 2));
    let m = |p: &GlPoly, k| ZSeries::monomial(p.clone(), k);
    let rows = vec![
        vec![m(&a, -1), m(&g(1, 2), -1)],
        vec![m(&g(2, 1), -1).add(&m(&a, 1)), m(&(-&a), -1)],
    ];
    LaxMatrix { n: 2, family: Family::RatTop, payload: Payload::Laurent(rows) }
}

// ---------------------------------------------------------------- CM side

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CmKind {
    Trig,
    Rational,
}

fn cot(w: C64) -> C64 {
    w.cos() / w.sin()
}

/// v_iδ_ij + (1−δ_ij) ν x (cot(xz) + cot(x(u_i − u_j))); x = π gives L^TCM.
pub fn trig_cm_matrix_scaled(st: &CMState, z: C64, x: f64) -> Result<CMat> {
    let n = st.n();
    if (z * x).sin().norm() < 1e-300 {
        return Err(Error::Singular(format!("cot pole at z = {z}")));
    }
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = if i == j { st.v[i] } else { st.nu * x * (cot(z * x) + cot((st.u[i] - st.u[j]) * x)) };
        }
    }
    Ok(m)
}

pub fn trig_cm_matrix(st: &CMState, z: C64) -> Result<CMat> {
    trig_cm_matrix_scaled(st, z, PI)
}

/// v_iδ_ij + (1−δ_ij) ν (1/z + 1/(u_i − u_j)).
pub fn rational_cm_matrix(st: &CMState, z: C64) -> Result<CMat> {
    let n = st.n();
    if z.norm() == 0.0 {
        return Err(Error::Singular("z = 0".into()));
    }
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = if i == j { st.v[i] } else { st.nu * (z.inv() + (st.u[i] - st.u[j]).inv()) };
        }
    }
    Ok(m)
}

pub fn cm_lax(kind: CmKind, state: &CMState) -> Result<LaxMatrix> {
    state.validate()?;
    let st = state.clone();
    let n = st.n();
    let params = format!("u={:?}, v={:?}, nu={}", st.u, st.v, st.nu);
    let (family, eval): (Family, Evaluator) = match kind {
        CmKind::Trig => (Family::TrigCm, Arc::new(move |z| trig_cm_matrix(&st, z))),
        CmKind::Rational => (Family::RatCm, Arc::new(move |z| rational_cm_matrix(&st, z))),
    };
    Ok(LaxMatrix { n, family, payload: Payload::Numeric { params, eval } })
}

// ---------------------------------------------------------------- gauges

/// a_i = −(N/2 (i²/N² − i/N) + (N²−1)/(12N)), i = 1..N.
pub fn trig_exponent(n: usize, i: usize) -> BigRational {
    let nn = BigRational::from_integer(BigInt::from(n));
    let ii = BigRational::from_integer(BigInt::from(i));
    let half = BigRational::new(1.into(), 2.into());
    let t = &nn * &half * (&ii * &ii / (&nn * &nn) - &ii / &nn);
    let cst = (&nn * &nn - BigRational::one()) / (BigRational::from_integer(12.into()) * &nn);
    -(t + cst)
}

fn rpow(base: C64, e: &BigRational) -> C64 {
    if base == c(1.0, 0.0) {
        return base;
    }
    (base.ln() * e.to_f64().unwrap_or(f64::NAN)).exp()
}

/// diag(q^{a_1}, …, q^{a_N}), principal branch of ln q.
pub fn gauge_trig(n: usize, q: C64) -> Result<CMat> {
    if q.norm() == 0.0 {
        return Err(Error::Invalid("q = 0".into()));
    }
    Ok(CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, (1..=n).map(|i| rpow(q, &trig_exponent(n, i))))))
}

/// Exponents b_i as printed: −N(N−1)/(2N) + (1 − (i−1)N)/N.
pub fn b_printed(n: usize, i: usize) -> BigRational {
    let nn = BigInt::from(n);
    let ii = BigInt::from(i);
    BigRational::new(-(&nn * (&nn - BigInt::one())), BigInt::from(2) * &nn)
        + BigRational::new(BigInt::one() - (&ii - BigInt::one()) * &nn, nn.clone())
}

/// h_i = (0, 1, …, N−2, N); the exponents −h_i give a finite x → 0 limit.
pub fn h_vector(n: usize) -> Vec<i64> {
    (0..n as i64 - 1).chain(std::iter::once(n as i64)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatExponents {
    Printed,
    Shifted,
}

pub fn rational_exponents(n: usize, which: RatExponents) -> Vec<BigRational> {
    match which {
        RatExponents::Printed => (1..=n).map(|i| b_printed(n, i)).collect(),
        RatExponents::Shifted => h_vector(n).into_iter().map(|h| BigRational::from_integer((-h).into())).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum W1Reading {
    /// W₁[i][j] = C(i−1, j−1) for i < N, W₁[N][j] = C(N, j)
    Binomial,
    /// (i−1)!/((j−i)!(j−1)!) with the undefined (j−i)! taken as 1, last row N!/(N!·0!) = 1
    Literal,
}

fn binom(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for t in 0..k {
        acc = acc * BigInt::from(n - t) / BigInt::from(t + 1);
    }
    acc
}

fn fact(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |a, k| a * BigInt::from(k))
}

pub fn w1(n: usize, reading: W1Reading) -> Vec<Vec<BigRational>> {
    let mut w = vec![vec![BigRational::zero(); n]; n];
    for i in 1..=n {
        for j in 1..=i {
            let v = match reading {
                W1Reading::Binomial if i < n => BigRational::from_integer(binom(i as u64 - 1, j as u64 - 1)),
                W1Reading::Binomial => BigRational::from_integer(binom(n as u64, j as u64)),
                W1Reading::Literal if i < n => BigRational::new(fact(i as u64 - 1), fact(j as u64 - 1)),
                W1Reading::Literal => BigRational::one(),
            };
            w[i - 1][j - 1] = v;
        }
    }
    w
}

pub fn rat_matrix(m: &[Vec<BigRational>]) -> CMat {
    let n = m.len();
    CMat::from_fn(n, n, |i, j| c(m[i][j].to_f64().unwrap_or(f64::NAN), 0.0))
}

/// A^R(x) = diag(x^{b_i}) W₁.
pub fn gauge_rational(n: usize, x: f64, exps: RatExponents, reading: W1Reading) -> Result<CMat> {
    if x == 0.0 {
        return Err(Error::Invalid("x = 0".into()));
    }
    let b = rational_exponents(n, exps);
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, b.iter().map(|e| rpow(c(x, 0.0), e))));
    Ok(d * rat_matrix(&w1(n, reading)))
}

// ---------------------------------------------------------------- appendix data

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AppendixFamily {
    T,
    R,
}

impl AppendixFamily {
    fn tag(self) -> &'static str {
        match self {
            AppendixFamily::T => "T",
            AppendixFamily::R => "R",
        }
    }
}

const SHA256SUMS: &str = include_str!("../data/SHA256SUMS");

fn bundled(name: &str) -> Option<&'static str> {
    Some(match name {
        "appendix_T_N2.json" => include_str!("../data/appendix_T_N2.json"),
        "appendix_T_N3.json" => include_str!("../data/appendix_T_N3.json"),
        "appendix_T_N4.json" => include_str!("../data/appendix_T_N4.json"),
        "appendix_R_N2.json" => include_str!("../data/appendix_R_N2.json"),
        "appendix_R_N3.json" => include_str!("../data/appendix_R_N3.json"),
        "appendix_R_N4.json" => include_str!("../data/appendix_R_N4.json"),
        "hamiltonians_T_N2.json" => include_str!("../data/hamiltonians_T_N2.json"),
        "hamiltonians_T_N3.json" => include_str!("../data/hamiltonians_T_N3.json"),
        "hamiltonians_T_N4.json" => include_str!("../data/hamiltonians_T_N4.json"),
        "hamiltonians_R_N2.json" => include_str!("../data/hamiltonians_R_N2.json"),
        "hamiltonians_R_N3.json" => include_str!("../data/hamiltonians_R_N3.json"),
        "hamiltonians_R_N4.json" => include_str!("../data/hamiltonians_R_N4.json"),
        _ => return None,
    })
}

fn pinned_sum(name: &str) -> Option<&'static str> {
    SHA256SUMS.lines().find_map(|l| {
        let mut it = l.split_whitespace();
        let h = it.next()?;
        (it.next()? == name).then_some(h)
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn verified(name: &str, text: &str) -> Result<()> {
    let want = pinned_sum(name).ok_or_else(|| Error::Data { name: name.into(), msg: "no pinned checksum".into() })?;
    let got = sha256_hex(text.as_bytes());
    if got != want {
        return Err(Error::Data { name: name.into(), msg: format!("checksum mismatch: {got} != {want}") });
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if !(2..=4).contains(&n) {
        return Err(Error::Invalid(format!("appendix data exists for N = 2, 3, 4 only (got {n})")));
    }
    Ok(())
}

#[derive(Deserialize)]
struct AppendixFile {
    family: String,
    #[serde(rename = "N")]
    n: usize,
    entries: Vec<EntryRec>,
}

#[derive(Deserialize)]
struct EntryRec {
    row: usize,
    col: usize,
    terms: Vec<TermRec>,
}

#[derive(Deserialize)]
struct TermRec {
    coeff: PiScalar,
    phase: [i64; 2],
    z_pow: i32,
    gvar: [usize; 2],
}

#[derive(Deserialize)]
struct HamFile {
    family: String,
    #[serde(rename = "N")]
    n: usize,
    hamiltonians: BTreeMap<String, PolyJson>,
}

fn data_err(name: &str, msg: impl Into<String>) -> Error {
    Error::Data { name: name.into(), msg: msg.into() }
}

fn parse_appendix(name: &str, text: &str, fam: AppendixFamily, n: usize) -> Result<LaxMatrix> {
    let f: AppendixFile = serde_json::from_str(text).map_err(|e| data_err(name, e.to_string()))?;
    if f.family != fam.tag() || f.n != n {
        return Err(data_err(name, format!("header says family {} N {}", f.family, f.n)));
    }
    let mut phase = vec![vec![PhaseSum::<GlPoly>::zero(); n]; n];
    let mut laurent = vec![vec![ZSeries::<GlPoly>::zero(); n]; n];
    for e in &f.entries {
        if e.row < 1 || e.row > n || e.col < 1 || e.col > n {
            return Err(data_err(name, format!("entry ({}, {}) out of range", e.row, e.col)));
        }
        for t in &e.terms {
            let [i, j] = t.gvar;
            if i < 1 || j < 1 || i > n || j > n || t.phase[1] == 0 {
                return Err(data_err(name, "bad term"));
            }
            let p = GlPoly::var(n, i, j).scalar_mul(&t.coeff);
            match fam {
                AppendixFamily::T => {
                    if t.z_pow != 0 {
                        return Err(data_err(name, "trigonometric entries carry no z powers"));
                    }
                    phase[e.row - 1][e.col - 1].add_term(Rational64::new(t.phase[0], t.phase[1]), &p);
                }
                AppendixFamily::R => {
                    if t.phase[0] != 0 || t.z_pow < 0 {
                        return Err(data_err(name, "rational entries are polynomials in z"));
                    }
                    let cell = &mut laurent[e.row - 1][e.col - 1];
                    *cell = cell.add(&ZSeries::monomial(p, t.z_pow));
                }
            }
        }
    }
    Ok(match fam {
        AppendixFamily::T => LaxMatrix { n, family: Family::AppendixT, payload: Payload::Phase(phase) },
        AppendixFamily::R => {
            let pref = GlPoly::constant(0, PiScalar::int(n as i64));
            let rows = laurent.into_iter().map(|r| r.into_iter().map(|e| e.scale(&pref).shift(-1)).collect()).collect();
            LaxMatrix { n, family: Family::AppendixR, payload: Payload::Laurent(rows) }
        }
    })
}

fn parse_hams(name: &str, text: &str, fam: AppendixFamily, n: usize) -> Result<BTreeMap<u32, GlPoly>> {
    let f: HamFile = serde_json::from_str(text).map_err(|e| data_err(name, e.to_string()))?;
    if f.family != fam.tag() || f.n != n {
        return Err(data_err(name, format!("header says family {} N {}", f.family, f.n)));
    }
    let mut out = BTreeMap::new();
    for (k, p) in &f.hamiltonians {
        let k: u32 = k.parse().map_err(|_| data_err(name, format!("bad key {k}")))?;
        out.insert(k, GlPoly::from_json(p)?.with_rank(n)?);
    }
    Ok(out)
}

/// Bundled Appendix matrix; T entries keep the prefactor πN/sin πz implicit
/// in the phase payload, R entries carry N/z explicitly.
pub fn load_appendix(fam: AppendixFamily, n: usize) -> Result<LaxMatrix> {
    check_n(n)?;
    let name = format!("appendix_{}_N{n}.json", fam.tag());
    let text = bundled(&name).ok_or_else(|| data_err(&name, "missing"))?;
    verified(&name, text)?;
    parse_appendix(&name, text, fam, n)
}

/// The printed H_k, keyed by k.
pub fn load_appendix_hamiltonians(fam: AppendixFamily, n: usize) -> Result<BTreeMap<u32, GlPoly>> {
    check_n(n)?;
    let name = format!("hamiltonians_{}_N{n}.json", fam.tag());
    let text = bundled(&name).ok_or_else(|| data_err(&name, "missing"))?;
    verified(&name, text)?;
    parse_hams(&name, text, fam, n)
}

/// Same as [`load_appendix`] but from a directory on disk, checked against the pinned sums.
pub fn load_appendix_from(dir: &Path, fam: AppendixFamily, n: usize) -> Result<LaxMatrix> {
    check_n(n)?;
    let name = format!("appendix_{}_N{n}.json", fam.tag());
    let text = std::fs::read_to_string(dir.join(&name)).map_err(|e| data_err(&name, e.to_string()))?;
    verified(&name, &text)?;
    parse_appendix(&name, &text, fam, n)
}

pub fn load_appendix_hamiltonians_from(dir: &Path, fam: AppendixFamily, n: usize) -> Result<BTreeMap<u32, GlPoly>> {
    check_n(n)?;
    let name = format!("hamiltonians_{}_N{n}.json", fam.tag());
    let text = std::fs::read_to_string(dir.join(&name)).map_err(|e| data_err(&name, e.to_string()))?;
    verified(&name, &text)?;
    parse_hams(&name, &text, fam, n)
}

/// Exact coefficient of a single gl variable in a linear polynomial.
pub fn linear_coeff(p: &GlPoly, i: usize, j: usize) -> PiScalar {
    p.coeff(&crate::glpoly::Mono::var(crate::glpoly::GlVar::new(i, j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zseries::mat_trace;

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        crate::linalg::fro(&(a - b)) <= tol * (1.0 + crate::linalg::fro(b))
    }

    fn test_g(n: usize, seed: u64) -> CMat {
        let mut x = seed as f64 * 0.618;
        CMat::from_fn(n, n, |_, _| {
            x = (x * 997.0 + 0.123).fract();
            let a = x - 0.5;
            x = (x * 991.0 + 0.377).fract();
            c(a, x - 0.5)
        })
    }

    #[test]
    fn sin_basis_small_cases() {
        let t01 = sin_basis(2, 0, 1).unwrap();
        assert!(close(&t01, &CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]), 1e-15));
        let t10 = sin_basis(2, 1, 0).unwrap();
        assert!(close(&t10, &crate::linalg::diag(&[c(-1., 0.), c(1., 0.)]), 1e-15));
        let tr = (sin_basis(3, 1, 2).unwrap() * sin_basis(3, 2, 1).unwrap()).trace();
        assert!((tr - c(3., 0.)).norm() < 1e-12);
        assert!(sin_basis(3, 0, 0).is_err());
        assert!(sin_basis(3, 3, 1).is_err());
    }

    #[test]
    fn s_g_round_trip() {
        for n in 2..=5 {
            let mut g = test_g(n, n as u64);
            let tp = g.trace() / n as f64;
            for i in 0..n {
                g[(i, i)] -= tp;
            }
            let st = TopState::from_g(g.clone()).unwrap();
            let back = TopState::from_s(n, &st.s()).unwrap();
            assert!(close(back.g(), &g, 1e-12));
        }
    }

    #[test]
    fn quasi_periodic_extension_matches_matrices() {
        let n = 3;
        let g = test_g(n, 5);
        let s = TopState::from_g(g).unwrap().s();
        for (a, b) in [(-1i64, 2i64), (4, -2), (-3, -5), (2, 7)] {
            let (a0, b0) = (a.rem_euclid(3), b.rem_euclid(3));
            let lhs = sin_basis_ext(n, a, b) * s_ext(&s, n, a, b);
            let rhs = sin_basis_ext(n, a0, b0) * s[&(a0 as usize, b0 as usize)];
            assert!(close(&lhs, &rhs, 1e-12));
        }
    }

    #[test]
    fn trig_exponents_n2_and_conditions() {
        assert_eq!(trig_exponent(2, 1), BigRational::new(1.into(), 8.into()));
        assert_eq!(trig_exponent(2, 2), BigRational::new((-1).into(), 8.into()));
        for n in 2..=6 {
            let s: BigRational = (1..=n).map(|i| trig_exponent(n, i)).sum();
            assert!(s.is_zero());
            let nn = BigRational::from_integer(BigInt::from(n));
            let f = |i: usize| {
                let ii = BigRational::from_integer(BigInt::from(i));
                &ii * &ii / (&nn * &nn) - &ii / &nn
            };
            for i in 1..=n {
                for j in 1..=n {
                    let rhs = &nn / BigRational::from_integer(2.into()) * (f(i) - f(j));
                    assert_eq!(trig_exponent(n, j) - trig_exponent(n, i), rhs);
                }
            }
        }
    }

    #[test]
    fn w1_readings() {
        let w = w1(2, W1Reading::Binomial);
        assert_eq!(w[1][0], BigRational::from_integer(2.into()));
        assert_eq!(w[0][0], BigRational::one());
        let w3 = w1(3, W1Reading::Binomial);
        let want = [[1, 0, 0], [1, 1, 0], [3, 3, 1]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(w3[i][j], BigRational::from_integer(want[i][j].into()));
            }
        }
        let lit = w1(3, W1Reading::Literal);
        assert_eq!(lit[2][0], BigRational::one());
    }

    #[test]
    fn printed_b_gives_unit_steps() {
        assert_eq!(b_printed(2, 1), BigRational::zero());
        assert_eq!(b_printed(2, 2), BigRational::from_integer((-1).into()));
        for n in 2..=5 {
            for i in 1..n {
                assert_eq!(b_printed(n, i) - b_printed(n, i + 1), BigRational::one());
            }
        }
    }

    #[test]
    fn gauge_rational_n2_matches_explicit_up_to_scalar() {
        // explicit sl(2) matrix [[x,0],[2/x,1/x]]
        let x = 0.37;
        let a = gauge_rational(2, x, RatExponents::Shifted, W1Reading::Binomial).unwrap();
        let want = CMat::from_row_slice(2, 2, &[c(x, 0.), c(0., 0.), c(2. / x, 0.), c(1. / x, 0.)]);
        assert!(close(&(a * c(x, 0.)), &want, 1e-14));
    }

    #[test]
    fn trig_top_n2_entries() {
        let l = trig_top_lax(2, DiagReading::Cyclic).unwrap();
        let p = l.phase_entries().unwrap();
        assert_eq!(p[0][1], PhaseSum::term(Rational64::zero(), GlPoly::var(2, 1, 2)));
        // 4 g12 sin²(πz) + g21 = g21 + 2g12 − g12 e^{2iπz} − g12 e^{−2iπz}
        let g12 = GlPoly::var(2, 1, 2);
        let mut want = PhaseSum::term(Rational64::zero(), &GlPoly::var(2, 2, 1) + &g12.scale_gauss(&GaussRat::int(2)));
        want.add_term(Rational64::from_integer(2), &-&g12);
        want.add_term(Rational64::from_integer(-2), &-&g12);
        assert_eq!(p[1][0], want);
        let ser = l.laurent_entries(2).unwrap();
        let c12 = ser[0][1].coeff(-1).unwrap();
        assert_eq!(c12, GlPoly::var(2, 1, 2).scale_gauss(&GaussRat::int(2)));
    }

    #[test]
    fn trig_top_trace_vanishes_for_traceless_g() {
        for n in 2..=5 {
            let l = trig_top_lax(n, DiagReading::Cyclic).unwrap();
            let mut g = test_g(n, 11 + n as u64);
            let tp = g.trace() / n as f64;
            for i in 0..n {
                g[(i, i)] -= tp;
            }
            for z in [c(0.23, 0.11), c(-0.31, 0.07)] {
                let m = l.evaluate(z, Some(&g)).unwrap();
                assert!(m.trace().norm() < 1e-10, "N={n}");
            }
        }
    }

    #[test]
    fn constructor_equals_appendix_t_with_cyclic_diagonal() {
        for n in 2..=4 {
            let a = load_appendix(AppendixFamily::T, n).unwrap();
            let b = trig_top_lax(n, DiagReading::Cyclic).unwrap();
            assert_eq!(a.phase_entries(), b.phase_entries(), "N={n}");
        }
    }

    #[test]
    fn appendix_examples() {
        let r2 = load_appendix(AppendixFamily::R, 2).unwrap();
        let l = r2.laurent_entries(0).unwrap();
        // N/z · (g21 + z³(g11−g22)/2)
        let want = ZSeries::monomial(GlPoly::var(2, 2, 1).scale_gauss(&GaussRat::int(2)), -1).add(&ZSeries::monomial(
            &GlPoly::var(2, 1, 1) - &GlPoly::var(2, 2, 2),
            2,
        ));
        assert_eq!(l[1][0], want);
        let t3 = load_appendix(AppendixFamily::T, 3).unwrap();
        assert_eq!(t3.phase_entries().unwrap()[0][2], PhaseSum::term(Rational64::new(1, 3), GlPoly::var(3, 1, 3)));
        let r4 = load_appendix(AppendixFamily::R, 4).unwrap();
        let e = &r4.laurent_entries(0).unwrap()[1][3];
        // 4/z · (iz/2 g14 + g24)
        assert_eq!(e.coeff(-1).unwrap(), GlPoly::var(4, 2, 4).scale_gauss(&GaussRat::int(4)));
        assert_eq!(e.coeff(0).unwrap(), GlPoly::var(4, 1, 4).scale_gauss(&GaussRat::from_parts(0, 1, 2, 1)));
    }

    #[test]
    fn corrupt_data_is_rejected() {
        let dir = std::env::temp_dir().join(format!("cmtop-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        assert!(load_appendix_from(&dir, AppendixFamily::R, 3).is_err());
        let good = bundled("appendix_R_N3.json").unwrap();
        std::fs::write(dir.join("appendix_R_N3.json"), good).unwrap();
        assert!(load_appendix_from(&dir, AppendixFamily::R, 3).is_ok());
        std::fs::write(dir.join("appendix_R_N3.json"), good.replacen("\"1\"", "\"2\"", 1)).unwrap();
        match load_appendix_from(&dir, AppendixFamily::R, 3) {
            Err(Error::Data { msg, .. }) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rational_sl2_trace_square() {
        let l = rational_top_lax_sl2();
        let e = l.laurent_entries(0).unwrap();
        let sq = crate::zseries::mat_mul(&e, &e);
        let tr = mat_trace(&sq);
        let g = |a, b| GlPoly::var(2, a, b);
        let a = (&g(1, 1) - &g(2, 2)).scale_gauss(&GaussRat::ratio(1, 2));
        // 2Ω/z² with Ω = S₃² + 4S⁺S⁻ = a² + g12 g21, and constant 4S⁺S₃ = 2 a g12
        let omega = &(&a * &a) + &(&g(1, 2) * &g(2, 1));
        assert_eq!(tr.coeff(-2).unwrap(), omega.scale_gauss(&GaussRat::int(2)));
        assert_eq!(tr.coeff(0).unwrap(), (&a * &g(1, 2)).scale_gauss(&GaussRat::int(2)));
        let m = l.evaluate(c(1.0, 0.0), Some(&crate::linalg::diag(&[c(2.0, 0.0), c(-2.0, 0.0)]))).unwrap();
        assert!((m[(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rational_cm_example() {
        let st = CMState::new(vec![c(0.5, 0.), c(-0.5, 0.)], vec![c(0., 0.), c(0., 0.)], c(1., 0.)).unwrap();
        let m = rational_cm_matrix(&st, c(1., 0.)).unwrap();
        assert!((m[(0, 1)] - c(2., 0.)).norm() < 1e-15);
        assert!(m[(1, 0)].norm() < 1e-15);
        assert!(CMState::new(vec![c(0.1, 0.), c(0.1, 0.)], vec![c(0., 0.); 2], c(1., 0.)).is_err());
    }

    #[test]
    fn trig_cm_nu_part_is_odd_under_swap_and_reflection() {
        let st = CMState::new(vec![c(0.13, 0.02), c(-0.21, 0.05), c(0.4, -0.1)], vec![c(0.3, 0.); 3], c(0.7, 0.2)).unwrap();
        let z = c(0.17, 0.08);
        let a = trig_cm_matrix(&st, z).unwrap();
        let b = trig_cm_matrix(&st, -z).unwrap();
        for i in 0..3 {
            assert_eq!(a[(i, i)], st.v[i]);
            for j in 0..3 {
                if i != j {
                    assert!((a[(i, j)] + b[(j, i)]).norm() < 1e-12);
                }
            }
        }
    }
}
