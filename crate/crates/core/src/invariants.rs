//! Laurent/phase coefficients of tr L^k, Poisson commutativity, comparison modulo the center.

use std::collections::BTreeMap;

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::glpoly::{GlPoly, GlVar};
use crate::lax::{Family, LaxMatrix, Payload};
use crate::linalg::{c, CMat, C64};
use crate::scalar::{GaussRat, PiScalar};
use crate::zseries::{mat_mul, mat_trace, PhaseSum, ZSeries};

/// Where a coefficient sits: a Laurent power of z, or an exp(iπrz) component of the
/// unnormalized trigonometric trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Index {
    Laurent(i32),
    Phase(i64, i64),
}

impl std::fmt::Display for Index {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Index::Laurent(j) => write!(f, "z^{j}"),
            Index::Phase(p, 1) => write!(f, "phase {p}"),
            Index::Phase(p, q) => write!(f, "phase {p}/{q}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InvariantFamily {
    pub family: Family,
    pub n: usize,
    pub kmax: usize,
    /// Highest z power known for every k (None: exact Laurent polynomials).
    pub order: Option<i32>,
    /// tr L(z)^k / k as Laurent series.
    pub laurent: BTreeMap<usize, ZSeries<GlPoly>>,
    /// tr P(z)^k / k for phase payloads, where L = πN/sin(πz) · P.
    pub phase: BTreeMap<usize, PhaseSum<GlPoly>>,
}

fn inv_k(k: usize) -> GaussRat {
    GaussRat::ratio(1, k as i64)
}

/// tr L^k / k for k = 1..=kmax; trigonometric entries are expanded through z^order.
pub fn trace_invariants(l: &LaxMatrix, kmax: usize, order: i32) -> Result<InvariantFamily> {
    if kmax == 0 {
        return Err(Error::Invalid("kmax must be ≥ 1".into()));
    }
    let mut laurent = BTreeMap::new();
    let mut phase = BTreeMap::new();
    let exact = matches!(l.payload, Payload::Laurent(_));
    // each product of k entries of valuation −1 loses k−1 orders
    let entry_order = order + kmax as i32 - 1;
    let m = l.laurent_entries(entry_order)?;
    let mut p = m.clone();
    for k in 1..=kmax {
        if k > 1 {
            p = mat_mul(&p, &m);
        }
        let tr = mat_trace(&p).map(|q| q.scale_gauss(&inv_k(k)));
        let tr = if exact { tr } else { tr.truncate(order) };
        if let Some(t) = tr.trunc() {
            if t < order {
                return Err(Error::Truncation { want: order, trunc: t });
            }
        }
        laurent.insert(k, tr);
    }
    if let Some(pe) = l.phase_entries() {
        let mut q = pe.clone();
        for k in 1..=kmax {
            if k > 1 {
                q = mat_mul(&q, pe);
            }
            phase.insert(k, mat_trace(&q).map(|x| x.scale_gauss(&inv_k(k))));
        }
    }
    Ok(InvariantFamily { family: l.family, n: l.n, kmax, order: if exact { None } else { Some(order) }, laurent, phase })
}

impl InvariantFamily {
    pub fn coefficient(&self, k: usize, idx: Index) -> Result<GlPoly> {
        match idx {
            Index::Laurent(j) => {
                let s = self.laurent.get(&k).ok_or_else(|| Error::Index(format!("k = {k}")))?;
                Ok(s.coeff(j)?.with_rank(self.n)?)
            }
            Index::Phase(a, b) => {
                let s = self.phase.get(&k).ok_or_else(|| Error::Index(format!("no phase data for k = {k}")))?;
                Ok(s.component(Rational64::new(a, b)).with_rank(self.n)?)
            }
        }
    }

    /// Every stored Laurent coefficient, lowest power first.
    pub fn laurent_coefficients(&self, k: usize) -> Vec<(i32, GlPoly)> {
        match self.laurent.get(&k) {
            None => Vec::new(),
            Some(s) => {
                let hi = s.trunc().unwrap_or(s.max_deg());
                (s.min_deg().min(-(k as i32))..=hi)
                    .map(|j| (j, s.coeff(j).unwrap_or_else(|_| GlPoly::zero(self.n))))
                    .map(|(j, p)| (j, p.with_rank(self.n).expect("rank")))
                    .collect()
            }
        }
    }

    /// Top non-central component: highest phase (trigonometric) or highest z power (otherwise).
    /// Falls back to the highest component when all are central.
    pub fn top_component(&self, k: usize) -> Result<(Index, GlPoly, bool)> {
        let cands: Vec<(Index, GlPoly)> = if let Some(ph) = self.phase.get(&k) {
            ph.iter().rev().map(|(r, p)| (Index::Phase(*r.numer(), *r.denom()), p.clone())).collect()
        } else {
            let s = self.laurent.get(&k).ok_or_else(|| Error::Index(format!("k = {k}")))?;
            let mut v: Vec<(Index, GlPoly)> = s.iter().filter(|(_, p)| !p.is_zero()).map(|(j, p)| (Index::Laurent(j), p.clone())).collect();
            v.reverse();
            v
        };
        let first = cands.first().cloned();
        for (idx, p) in cands {
            let p = p.with_rank(self.n)?;
            if !p.is_central() {
                return Ok((idx, p, false));
            }
        }
        match first {
            Some((idx, p)) => Ok((idx, p.with_rank(self.n)?, true)),
            None => Ok((Index::Laurent(0), GlPoly::zero(self.n), true)),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut inv = Vec::new();
        for k in 1..=self.kmax {
            let coeffs: Vec<_> = self
                .laurent_coefficients(k)
                .into_iter()
                .filter(|(_, p)| !p.is_zero())
                .map(|(j, p)| json!({"z_pow": j, "central": p.is_central(), "poly": p.to_json()}))
                .collect();
            let mut entry = json!({"k": k, "laurent": coeffs});
            if let Some(ph) = self.phase.get(&k) {
                let comps: Vec<_> = ph
                    .iter()
                    .map(|(r, p)| {
                        let p = p.clone().with_rank(self.n).expect("rank");
                        json!({"phase": [r.numer(), r.denom()], "central": p.is_central(), "poly": p.to_json()})
                    })
                    .collect();
                entry["phase"] = json!(comps);
            }
            inv.push(entry);
        }
        json!({
            "family": self.family.to_string(),
            "N": self.n,
            "kmax": self.kmax,
            "order": self.order,
            "normalization": "tr L^k / k",
            "invariants": inv,
        })
    }
}

// ---------------------------------------------------------------- commutativity

#[derive(Clone, Debug, Serialize)]
pub struct PairResult {
    pub pair: (String, String),
    pub status: &'static str,
    pub residual_terms: usize,
    #[serde(skip)]
    pub residual: GlPoly,
}

#[derive(Clone, Debug, Serialize)]
pub struct CommuteReport {
    pub pairs: Vec<PairResult>,
    pub pass: bool,
}

impl CommuteReport {
    pub fn to_json(&self) -> serde_json::Value {
        let pairs: Vec<_> = self
            .pairs
            .iter()
            .map(|p| {
                json!({
                    "pair": [p.pair.0, p.pair.1],
                    "status": p.status,
                    "residual_terms": p.residual_terms,
                    "residual": if p.residual.is_zero() { serde_json::Value::Null } else { json!(p.residual.to_json()) },
                })
            })
            .collect();
        json!({"pairs": pairs, "pass": self.pass})
    }
}

/// Exact pairwise brackets (i < j), computed in parallel.
pub fn check_commute(items: &[(String, GlPoly)]) -> Result<CommuteReport> {
    let pairs: Vec<(usize, usize)> = (0..items.len()).flat_map(|i| (i + 1..items.len()).map(move |j| (i, j))).collect();
    let res: Vec<Result<PairResult>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let b = items[i].1.poisson(&items[j].1)?;
            Ok(PairResult {
                pair: (items[i].0.clone(), items[j].0.clone()),
                status: if b.is_zero() { "PASS" } else { "FAIL" },
                residual_terms: b.len(),
                residual: b,
            })
        })
        .collect();
    let pairs = res.into_iter().collect::<Result<Vec<_>>>()?;
    let pass = pairs.iter().all(|p| p.status == "PASS");
    Ok(CommuteReport { pairs, pass })
}

/// All Laurent coefficients of tr L^k / k (k ≤ kmax) as labelled polynomials.
pub fn family_items(fam: &InvariantFamily) -> Vec<(String, GlPoly)> {
    let mut out = Vec::new();
    for k in 1..=fam.kmax {
        for (j, p) in fam.laurent_coefficients(k) {
            if !p.is_zero() {
                out.push((format!("trL^{k}[z^{j}]"), p));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- modulo center

#[derive(Clone, Debug)]
pub struct CenterComparison {
    pub lambda: Option<PiScalar>,
    pub residual: GlPoly,
    pub central: bool,
}

impl CenterComparison {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "lambda": self.lambda.as_ref().map(|l| l.to_string()),
            "lambda_value": self.lambda.as_ref().map(|l| { let v = l.eval(); [v.re, v.im] }),
            "residual": self.residual.to_json(),
            "residual_text": self.residual.to_string(),
            "central": self.central,
        })
    }
}

/// Fits P ≈ λQ on a shared monomial and reports whether P − λQ lies in the Poisson center.
/// Candidate monomials are tried from the top of Q; the first central residual wins, else
/// the candidate with the fewest residual terms is reported. A central residual with λ = 0
/// is accepted only when no nonzero λ gives one.
pub fn compare_mod_center(p: &GlPoly, q: &GlPoly) -> Result<CenterComparison> {
    let n = if p.rank() != 0 { p.rank() } else { q.rank() };
    let p = p.clone().with_rank(n)?;
    let q = q.clone().with_rank(n)?;
    let mut best: Option<CenterComparison> = None;
    let mut tried: Vec<PiScalar> = Vec::new();
    for (m, qc) in q.terms().rev() {
        if m.degree() == 0 {
            continue;
        }
        let pc = p.coeff(m);
        let Ok(qi) = qc.inv() else { continue };
        let lambda = &pc * &qi;
        if tried.contains(&lambda) {
            continue;
        }
        tried.push(lambda.clone());
        let residual = p.try_add(&q.scalar_mul(&-&lambda))?;
        let central = residual.is_central();
        let zero = lambda.is_zero();
        let cand = CenterComparison { lambda: Some(lambda), residual, central };
        if central && !zero {
            return Ok(cand);
        }
        // λ = 0 only wins when nothing else leaves a central residual
        let better = match &best {
            None => true,
            Some(b) => (cand.central && !b.central) || (cand.central == b.central && cand.residual.len() < b.residual.len()),
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.unwrap_or_else(|| CenterComparison { lambda: None, central: p.is_central(), residual: p }))
}

// ---------------------------------------------------------------- numeric pre-check

#[derive(Clone, Debug, Serialize)]
pub struct NumericCommute {
    /// max |{P,Q}(G)| with the exact bracket polynomial evaluated
    pub exact_path: f64,
    /// max |Σ (∂P ∂Q − ∂Q ∂P) g| assembled from numeric partials
    pub partials_path: f64,
    /// max disagreement between the two paths
    pub disagreement: f64,
    /// max of the partials path divided by Σ |∂P||∂Q||g|, the rounding scale of the sum
    pub relative: f64,
}

fn random_g(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn numeric_bracket_from_partials(dp: &[Vec<GlPoly>], dq: &[Vec<GlPoly>], g: &CMat) -> (C64, f64) {
    let n = g.nrows();
    let ep: Vec<Vec<C64>> = dp.iter().map(|r| r.iter().map(|x| x.evaluate(g)).collect()).collect();
    let eq: Vec<Vec<C64>> = dq.iter().map(|r| r.iter().map(|x| x.evaluate(g)).collect()).collect();
    let mut acc = c(0.0, 0.0);
    let mut scale = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                acc += (ep[i][j] * eq[j][k] - eq[i][j] * ep[j][k]) * g[(i, k)];
                scale += (ep[i][j].norm() * eq[j][k].norm() + eq[i][j].norm() * ep[j][k].norm()) * g[(i, k)].norm();
            }
        }
    }
    (acc, scale)
}

fn partials(a: &GlPoly, n: usize) -> Vec<Vec<GlPoly>> {
    (1..=n).map(|i| (1..=n).map(|j| a.partial(GlVar::new(i, j))).collect()).collect()
}

/// Partials path only: max relative |{P,Q}(G)| without forming the bracket polynomial.
pub fn numeric_precheck(p: &GlPoly, q: &GlPoly, samples: usize, seed: u64) -> f64 {
    let n = p.rank().max(q.rank());
    if n == 0 {
        return 0.0;
    }
    let (dp, dq) = (partials(p, n), partials(q, n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let (b, scale) = numeric_bracket_from_partials(&dp, &dq, &random_g(n, &mut rng));
            if scale > 0.0 { b.norm() / scale } else { 0.0 }
        })
        .fold(0.0, f64::max)
}

pub fn numeric_commute(p: &GlPoly, q: &GlPoly, samples: usize, seed: u64) -> Result<NumericCommute> {
    let n = p.rank().max(q.rank());
    if n == 0 {
        return Ok(NumericCommute { exact_path: 0.0, partials_path: 0.0, disagreement: 0.0, relative: 0.0 });
    }
    let br = p.poisson(q)?;
    let (dp, dq) = (partials(p, n), partials(q, n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = NumericCommute { exact_path: 0.0, partials_path: 0.0, disagreement: 0.0, relative: 0.0 };
    for _ in 0..samples {
        let g = random_g(n, &mut rng);
        let a = br.evaluate(&g);
        let (b, scale) = numeric_bracket_from_partials(&dp, &dq, &g);
        out.relative = out.relative.max(if scale > 0.0 { b.norm() / scale } else { 0.0 });
        out.exact_path = out.exact_path.max(a.norm());
        out.partials_path = out.partials_path.max(b.norm());
        out.disagreement = out.disagreement.max((a - b).norm());
    }
    Ok(out)
}
