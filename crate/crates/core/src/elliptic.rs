//! Theta functions with characteristics, φ, ℘, the elliptic top and CM Lax operators,
//! the intertwiner Ξ, the M-matrix and the equations of motion.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lax::{s_ext, s_indices, sin_basis_ext, CMState, SMap};
use crate::linalg::{self, c, CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaParams {
    pub tau: C64,
    /// Summation stops once |term| < tol · (largest term seen).
    pub tol: f64,
    /// Fixed half-width of the summation window instead of the adaptive stop.
    pub radius: Option<usize>,
}

impl ThetaParams {
    pub fn new(tau: C64) -> Result<Self> {
        if !(tau.im > 0.0) {
            return Err(Error::Invalid(format!("Im τ must be positive, got τ = {tau}")));
        }
        Ok(ThetaParams { tau, tol: 1e-18, radius: None })
    }

    pub fn with_radius(self, r: usize) -> Self {
        ThetaParams { radius: Some(r), ..self }
    }

    pub fn scaled(self, k: f64) -> Result<Self> {
        ThetaParams::new(self.tau * k).map(|p| ThetaParams { tol: self.tol, ..p })
    }
}

const MAX_TERMS: usize = 100_000;

/// θ[a,b](z,τ) and its first three z-derivatives, plus the window half-width used.
pub fn theta_derivs(a: f64, b: f64, z: C64, p: &ThetaParams) -> Result<([C64; 4], usize)> {
    if !(p.tau.im > 0.0) {
        return Err(Error::Invalid(format!("Im τ must be positive, got τ = {}", p.tau)));
    }
    let term = |n: i64| -> [C64; 4] {
        let x = n as f64 + a;
        let e = (c(0.0, 2.0 * PI) * (x * x * p.tau / 2.0 + x * (z + b))).exp();
        let d = c(0.0, 2.0 * PI * x);
        [e, e * d, e * d * d, e * d * d * d]
    };
    // peak of |term| sits near n + a = −Im z / Im τ
    let center = (-z.im / p.tau.im - a).round() as i64;
    let mut acc = term(center);
    let mut biggest = acc.map(|v| v.norm());
    let mut used = 0usize;
    for dir in [1i64, -1] {
        let mut k = 1i64;
        loop {
            let t = term(center + dir * k);
            for q in 0..4 {
                acc[q] += t[q];
                biggest[q] = biggest[q].max(t[q].norm());
            }
            used = used.max(k as usize);
            match p.radius {
                Some(r) => {
                    if k as usize >= r {
                        break;
                    }
                }
                None => {
                    // past the Gaussian peak the terms shrink monotonically
                    let past_peak = dir as f64 * ((center + dir * k) as f64 + a + z.im / p.tau.im) > 1.0;
                    let small = (0..4).all(|q| t[q].norm() <= p.tol * biggest[q].max(f64::MIN_POSITIVE));
                    if past_peak && small {
                        break;
                    }
                }
            }
            k += 1;
            if k as usize > MAX_TERMS {
                return Err(Error::Invalid("theta series did not converge".into()));
            }
        }
    }
    Ok((acc, used))
}

/// θ[a,b](z,τ) = Σ_n exp(2πi((n+a)²τ/2 + (n+a)(z+b))); θ_{k,m} of integer labels is θ[k/2, m/2].
pub fn theta(a: f64, b: f64, z: C64, p: &ThetaParams) -> Result<C64> {
    Ok(theta_derivs(a, b, z, p)?.0[0])
}

pub fn theta_km(k: u8, m: u8, z: C64, p: &ThetaParams) -> Result<C64> {
    theta(k as f64 / 2.0, m as f64 / 2.0, z, p)
}

fn th11(z: C64, p: &ThetaParams) -> Result<[C64; 4]> {
    Ok(theta_derivs(0.5, 0.5, z, p)?.0)
}

fn lattice_check(z: C64, p: &ThetaParams, what: &str) -> Result<()> {
    // nearest lattice point m + nτ
    let n = (z.im / p.tau.im).round();
    let m = (z - p.tau * n).re.round();
    if (z - p.tau * n - m).norm() < 1e-10 {
        return Err(Error::Singular(format!("{what} at lattice point {z}")));
    }
    Ok(())
}

pub fn theta11_prime0(p: &ThetaParams) -> Result<C64> {
    Ok(th11(c(0.0, 0.0), p)?[1])
}

/// φ(u, z) = θ₁₁(u+z)θ₁₁′(0)/(θ₁₁(u)θ₁₁(z)).
pub fn phi(u: C64, z: C64, p: &ThetaParams) -> Result<C64> {
    lattice_check(u, p, "φ: u")?;
    lattice_check(z, p, "φ: z")?;
    Ok(th11(u + z, p)?[0] * theta11_prime0(p)? / (th11(u, p)?[0] * th11(z, p)?[0]))
}

/// ∂_u φ(u, z) = φ · (θ₁₁′(u+z)/θ₁₁(u+z) − θ₁₁′(u)/θ₁₁(u)).
pub fn dphi_du(u: C64, z: C64, p: &ThetaParams) -> Result<C64> {
    lattice_check(u + z, p, "∂φ: u+z")?;
    let f = phi(u, z, p)?;
    let tuz = th11(u + z, p)?;
    let tu = th11(u, p)?;
    Ok(f * (tuz[1] / tuz[0] - tu[1] / tu[0]))
}

/// φ_{m,n}(z) = e^{−2πinz/N} φ(−(m+nτ)/N, z).
pub fn phi_mn(m: i64, n: i64, z: C64, nn: usize, p: &ThetaParams) -> Result<C64> {
    let nf = nn as f64;
    let u = -(p.tau * n as f64 + m as f64) / nf;
    Ok((c(0.0, -2.0 * PI * n as f64 / nf) * z).exp() * phi(u, z, p)?)
}

/// ℘(z) = −(log θ₁₁)″(z) + θ₁₁‴(0)/(3θ₁₁′(0)); the constant removes the z⁰ Laurent term.
pub fn wp(z: C64, p: &ThetaParams) -> Result<C64> {
    lattice_check(z, p, "℘")?;
    let t = th11(z, p)?;
    let t0 = th11(c(0.0, 0.0), p)?;
    let l1 = t[1] / t[0];
    Ok(-(t[2] / t[0] - l1 * l1) + t0[3] / (t0[1] * 3.0))
}

// ---------------------------------------------------------------- elliptic top

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticTop {
    pub n: usize,
    pub s: SMap,
    pub params: ThetaParams,
}

impl EllipticTop {
    pub fn new(n: usize, s: SMap, params: ThetaParams) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("N = {n} < 2")));
        }
        for &(m, k) in s.keys() {
            if m >= n || k >= n || (m, k) == (0, 0) {
                return Err(Error::Index(format!("S_({m},{k}) for N = {n}")));
            }
        }
        let mut full = SMap::new();
        for idx in s_indices(n) {
            full.insert(idx, s.get(&idx).copied().unwrap_or_default());
        }
        Ok(EllipticTop { n, s: full, params })
    }

    pub fn get(&self, a: i64, b: i64) -> C64 {
        s_ext(&self.s, self.n, a, b)
    }

    fn with_s(&self, s: SMap) -> EllipticTop {
        EllipticTop { n: self.n, s, params: self.params }
    }
}

/// L^ET(z) = Σ S_mn φ_mn(z) T_mn.
pub fn elliptic_top_lax(top: &EllipticTop, z: C64) -> Result<CMat> {
    let mut l = CMat::zeros(top.n, top.n);
    for (&(m, k), v) in &top.s {
        if *v == c(0.0, 0.0) {
            continue;
        }
        l += sin_basis_ext(top.n, m as i64, k as i64) * (v * phi_mn(m as i64, k as i64, z, top.n, &top.params)?);
    }
    Ok(l)
}

/// L^ECM_ij = v_i δ_ij + (1−δ_ij) ν φ(u_i − u_j, z).
pub fn elliptic_cm_lax(st: &CMState, z: C64, p: &ThetaParams) -> Result<CMat> {
    st.validate()?;
    let n = st.n();
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = if i == j { st.v[i] } else { st.nu * phi(st.u[i] - st.u[j], z, p)? };
        }
    }
    Ok(m)
}

/// Ξ_ij = θ[i/N − 1/2, N/2](z − N u_j, Nτ) / Π_{k≠j} θ₁₁(u_k − u_j), with u taken in the
/// center-of-mass frame.
pub fn xi(z: C64, u: &[C64], p: &ThetaParams) -> Result<CMat> {
    let n = u.len();
    let nf = n as f64;
    let mean: C64 = u.iter().sum::<C64>() / nf;
    let u: Vec<C64> = u.iter().map(|x| x - mean).collect();
    let pn = p.scaled(nf)?;
    let mut x = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = c(1.0, 0.0);
        for k in 0..n {
            if k != j {
                d *= th11(u[k] - u[j], p)?[0];
            }
        }
        if d.norm() < 1e-300 {
            return Err(Error::Singular("coincident particles in Ξ".into()));
        }
        for i in 0..n {
            x[(i, j)] = theta((i + 1) as f64 / nf - 0.5, nf / 2.0, z - u[j] * nf, &pn)? / d;
        }
    }
    let cond = linalg::condition_number(&x);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::Singular(format!("Ξ(z) ill-conditioned at z = {z}: condition number {cond:.3e}")));
    }
    Ok(x)
}

/// Ξ L^ECM Ξ⁻¹ at z.
pub fn conjugated_cm(st: &CMState, z: C64, p: &ThetaParams) -> Result<CMat> {
    let x = xi(z, &st.u, p)?;
    let xinv = linalg::inverse(&x, "Ξ")?;
    Ok(&x * elliptic_cm_lax(st, z, p)? * xinv)
}

/// M(z) = −(iN/2π) Σ e^{−2πinz/N} ∂_uφ(−(m+nτ)/N, z) S_mn T_mn.
pub fn m_matrix(top: &EllipticTop, z: C64) -> Result<CMat> {
    let n = top.n;
    let nf = n as f64;
    let p = &top.params;
    let mut acc = CMat::zeros(n, n);
    for (&(m, k), v) in &top.s {
        if *v == c(0.0, 0.0) {
            continue;
        }
        let u = -(p.tau * k as f64 + m as f64) / nf;
        let f = (c(0.0, -2.0 * PI * k as f64 / nf) * z).exp() * dphi_du(u, z, p)?;
        acc += sin_basis_ext(n, m as i64, k as i64) * (v * f);
    }
    Ok(acc * c(0.0, -nf / (2.0 * PI)))
}

/// ℘((k + lτ)/N) for all (k,l) ≠ (0,0) in [0,N)².
fn wp_table(n: usize, p: &ThetaParams) -> Result<Vec<Vec<C64>>> {
    let nf = n as f64;
    let mut t = vec![vec![c(0.0, 0.0); n]; n];
    for (k, l) in s_indices(n) {
        t[k][l] = wp((p.tau * l as f64 + k as f64) / nf, p)?;
    }
    Ok(t)
}

/// ∂_t S_mn = (N/π) Σ_{(k,l)≠0} S_kl S_{m−k,n−l} ℘((k+lτ)/N) sin(π(kn − ml)/N).
pub fn eom_rhs(top: &EllipticTop) -> Result<SMap> {
    let wpt = wp_table(top.n, &top.params)?;
    Ok(eom_with_table(top, &wpt))
}

fn eom_with_table(top: &EllipticTop, wpt: &[Vec<C64>]) -> SMap {
    let n = top.n;
    let nf = n as f64;
    let mut out = SMap::new();
    for (m, k) in s_indices(n) {
        let (mi, ki) = (m as i64, k as i64);
        let mut acc = c(0.0, 0.0);
        for (a, b) in s_indices(n) {
            let (ai, bi) = (a as i64, b as i64);
            let sn = (PI * (ai * ki - mi * bi) as f64 / nf).sin();
            if sn.abs() < 1e-15 {
                continue;
            }
            acc += top.s[&(a, b)] * s_ext(&top.s, n, mi - ai, ki - bi) * wpt[a][b] * sn;
        }
        out.insert((m, k), acc * (nf / PI));
    }
    out
}

/// (H^E, Ω₂) with H^E = −½ Σ ℘((m+nτ)/N) S_mn S_{−m,−n} and Ω₂ = Σ S_mn S_{−m,−n}.
pub fn hamiltonian_elliptic(top: &EllipticTop) -> Result<(C64, C64)> {
    let wpt = wp_table(top.n, &top.params)?;
    Ok(ham_with_table(top, &wpt))
}

fn ham_with_table(top: &EllipticTop, wpt: &[Vec<C64>]) -> (C64, C64) {
    let mut h = c(0.0, 0.0);
    let mut om = c(0.0, 0.0);
    for (&(m, k), v) in &top.s {
        let pair = v * top.get(-(m as i64), -(k as i64));
        om += pair;
        h += wpt[m][k] * pair;
    }
    (h * -0.5, om)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub s: Vec<((usize, usize), [f64; 2])>,
    pub h: [f64; 2],
    pub omega2: [f64; 2],
    pub lax_residual: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub final_top: EllipticTop,
    pub z_probe: C64,
    pub spectrum_start: Vec<C64>,
    pub spectrum_end: Vec<C64>,
}

impl Trajectory {
    pub fn max_drift(&self, f: impl Fn(&TrajectoryRow) -> [f64; 2]) -> f64 {
        let first = f(&self.rows[0]);
        self.rows.iter().map(|r| {
            let v = f(r);
            ((v[0] - first[0]).powi(2) + (v[1] - first[1]).powi(2)).sqrt()
        }).fold(0.0, f64::max)
    }

    pub fn max_lax_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.lax_residual).fold(0.0, f64::max)
    }

    pub fn spectrum_drift(&self) -> f64 {
        linalg::spectrum_distance(&self.spectrum_start, &self.spectrum_end)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        if let Some(r) = self.rows.first() {
            for ((m, k), _) in &r.s {
                header.push(format!("re_S_{m}_{k}"));
                header.push(format!("im_S_{m}_{k}"));
            }
        }
        for h in ["re_H", "im_H", "re_Omega2", "im_Omega2", "lax_residual"] {
            header.push(h.into());
        }
        wr.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![format!("{:.17e}", r.t)];
            for (_, v) in &r.s {
                rec.push(format!("{:.17e}", v[0]));
                rec.push(format!("{:.17e}", v[1]));
            }
            for x in [r.h[0], r.h[1], r.omega2[0], r.omega2[1], r.lax_residual] {
                rec.push(format!("{x:.17e}"));
            }
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

fn axpy(s: &SMap, d: &SMap, h: f64) -> SMap {
    s.iter().map(|(k, v)| (*k, v + d[k] * h)).collect()
}

/// ‖L(∂_t S) − [M, L]‖ / ‖L‖ at z.
pub fn lax_residual(top: &EllipticTop, z: C64) -> Result<f64> {
    let ds = eom_rhs(top)?;
    let l = elliptic_top_lax(top, z)?;
    let dl = elliptic_top_lax(&top.with_s(ds), z)?;
    let m = m_matrix(top, z)?;
    Ok(linalg::fro(&(dl - linalg::commutator(&m, &l))) / linalg::fro(&l).max(f64::MIN_POSITIVE))
}

/// Classical RK4 with per-step H^E, Ω₂ and Lax residual at `z_probe`.
pub fn evolve(top: &EllipticTop, dt: f64, steps: usize, z_probe: C64) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
    }
    let wpt = wp_table(top.n, &top.params)?;
    let f = |s: &SMap| eom_with_table(&top.with_s(s.clone()), &wpt);
    let row = |t: f64, cur: &EllipticTop| -> Result<TrajectoryRow> {
        let (h, om) = ham_with_table(cur, &wpt);
        Ok(TrajectoryRow {
            t,
            s: cur.s.iter().map(|(k, v)| (*k, [v.re, v.im])).collect(),
            h: [h.re, h.im],
            omega2: [om.re, om.im],
            lax_residual: lax_residual(cur, z_probe)?,
        })
    };
    let spectrum_start = linalg::eigenvalues(&elliptic_top_lax(top, z_probe)?)?;
    let mut cur = top.clone();
    let mut rows = vec![row(0.0, &cur)?];
    for step in 1..=steps {
        let s = &cur.s;
        let k1 = f(s);
        let k2 = f(&axpy(s, &k1, dt / 2.0));
        let k3 = f(&axpy(s, &k2, dt / 2.0));
        let k4 = f(&axpy(s, &k3, dt));
        let next: SMap = s
            .iter()
            .map(|(k, v)| (*k, v + (k1[k] + k2[k] * 2.0 + k3[k] * 2.0 + k4[k]) * (dt / 6.0)))
            .collect();
        cur = cur.with_s(next);
        rows.push(row(step as f64 * dt, &cur)?);
    }
    let spectrum_end = linalg::eigenvalues(&elliptic_top_lax(&cur, z_probe)?)?;
    Ok(Trajectory { rows, final_top: cur, z_probe, spectrum_start, spectrum_end })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractReport {
    pub mean: Vec<((usize, usize), [f64; 2])>,
    pub max_deviation: f64,
    pub samples: usize,
}

/// S_mn(z) = Tr(R(z) T_mn†)/(N φ_mn(z)) at each sample; mean and spread across samples.
pub fn extract_s<F>(r: F, n: usize, p: &ThetaParams, z_samples: &[C64]) -> Result<(SMap, ExtractReport)>
where
    F: Fn(C64) -> Result<CMat> + Sync,
{
    if z_samples.len() < 3 {
        return Err(Error::Invalid("extract_S needs at least 3 z samples".into()));
    }
    let per: Vec<Result<SMap>> = z_samples
        .par_iter()
        .map(|&z| {
            let rz = r(z)?;
            let mut out = SMap::new();
            for (m, k) in s_indices(n) {
                let t = sin_basis_ext(n, m as i64, k as i64);
                let ph = phi_mn(m as i64, k as i64, z, n, p)?;
                out.insert((m, k), (&rz * t.adjoint()).trace() / (ph * n as f64));
            }
            Ok(out)
        })
        .collect();
    let good: Vec<SMap> = per.into_iter().filter_map(|x| x.ok()).collect();
    if good.len() < 3 {
        return Err(Error::Singular("fewer than 3 usable z samples".into()));
    }
    let cnt = good.len() as f64;
    let mut mean = SMap::new();
    for idx in s_indices(n) {
        mean.insert(idx, good.iter().map(|s| s[&idx]).sum::<C64>() / cnt);
    }
    let mut dev: f64 = 0.0;
    for s in &good {
        for idx in s_indices(n) {
            dev = dev.max((s[&idx] - good[0][&idx]).norm());
        }
    }
    let rep = ExtractReport {
        mean: mean.iter().map(|(k, v)| (*k, [v.re, v.im])).collect(),
        max_deviation: dev,
        samples: good.len(),
    };
    Ok((mean, rep))
}

// ---------------------------------------------------------------- sl(2), explicit

/// S₁, S₂, S₃ of the sl(2) elliptic bosonization in terms of (u, v, ν).
pub fn ebos(u: C64, v: C64, nu: C64, p: &ThetaParams) -> Result<[C64; 3]> {
    let t = |k, m, x| theta_km(k, m, x, p);
    let tp = theta11_prime0(p)?;
    let z0 = c(0.0, 0.0);
    let u2 = u * 2.0;
    let i = c(0.0, 1.0);
    let t11 = t(1, 1, u2)?;
    let s1 = -t(1, 0, z0)? * t(1, 0, u2)? / (tp * t11) * v
        + t(1, 0, z0)?.powi(2) * t(0, 0, u2)? * t(0, 1, u2)? / (t(0, 0, z0)? * t(0, 1, z0)? * t11 * t11) * nu;
    let s2 = t(0, 0, z0)? * t(0, 0, u2)? / (i * tp * t11) * v
        - t(0, 0, z0)?.powi(2) * t(1, 0, u2)? * t(0, 1, u2)? / (i * t(1, 0, z0)? * t(0, 1, z0)? * t11 * t11) * nu;
    let s3 = -t(0, 1, z0)? * t(0, 1, u2)? / (tp * t11) * v
        + t(0, 1, z0)?.powi(2) * t(0, 0, u2)? * t(1, 0, u2)? / (t(0, 0, z0)? * t(1, 0, z0)? * t11 * t11) * nu;
    Ok([s1, s2, s3])
}

/// The explicit 2×2 elliptic top matrix in its own (S₁, S₂, S₃) labels.
pub fn sl2_elliptic_top(s: [C64; 3], z: C64, p: &ThetaParams) -> Result<CMat> {
    let t = |k, m, x| theta_km(k, m, x, p);
    let tp = theta11_prime0(p)?;
    let [s1, s2, s3] = s;
    let a = -tp * t(1, 1, z - 0.5)? / (t(1, 1, z)? * t(1, 1, c(-0.5, 0.0))?) * s3;
    let pre = tp * (c(0.0, -PI) * z).exp() / t(1, 1, z)?;
    let ta = t(1, 1, z - p.tau / 2.0)? / t(1, 1, -p.tau / 2.0)?;
    let tb = t(1, 1, z - (p.tau + 1.0) / 2.0)? / t(1, 1, -(p.tau + 1.0) / 2.0)?;
    Ok(CMat::from_row_slice(2, 2, &[a, pre * (ta * s1 + tb * s2), pre * (ta * s1 - tb * s2), -a]))
}

/// sl(2) CM matrix [[v, νφ(−2u,z)], [νφ(2u,z), −v]] in the relative coordinate u.
pub fn sl2_elliptic_cm(u: C64, v: C64, nu: C64, z: C64, p: &ThetaParams) -> Result<CMat> {
    Ok(CMat::from_row_slice(2, 2, &[v, nu * phi(u * -2.0, z, p)?, nu * phi(u * 2.0, z, p)?, -v]))
}

/// [[θ₀₀(z+2u,2τ), −θ₀₀(z−2u,2τ)], [−θ₁₀(z+2u,2τ), θ₁₀(z−2u,2τ)]].
pub fn sl2_elliptic_xi(u: C64, z: C64, p: &ThetaParams) -> Result<CMat> {
    let p2 = p.scaled(2.0)?;
    let t = |k, m, x| theta_km(k, m, x, &p2);
    let (a, b) = (z + u * 2.0, z - u * 2.0);
    Ok(CMat::from_row_slice(2, 2, &[t(0, 0, a)?, -t(0, 0, b)?, -t(1, 0, a)?, t(1, 0, b)?]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ThetaParams {
        ThetaParams::new(c(0.1, 1.1)).unwrap()
    }

    #[test]
    fn theta_values() {
        let p = ThetaParams::new(c(0.0, 1.0)).unwrap();
        assert!(theta_km(1, 1, c(0.0, 0.0), &p).unwrap().norm() < 1e-15);
        // independent value: Σ e^{−πn²}
        let want: f64 = (-30i32..=30).map(|n| (-PI * (n * n) as f64).exp()).sum();
        assert!((theta_km(0, 0, c(0.0, 0.0), &p).unwrap() - want).norm() < 1e-12);
        assert!((want - 1.0864348112).abs() < 1e-9);
        assert!(ThetaParams::new(c(0.3, 0.0)).is_err());
    }

    #[test]
    fn doubling_the_window_changes_nothing() {
        let p = params();
        for z in [c(0.3, 0.2), c(-0.7, 1.4), c(2.1, -0.9)] {
            let (v, r) = theta_derivs(0.5, 0.5, z, &p).unwrap();
            let (w, _) = theta_derivs(0.5, 0.5, z, &p.with_radius(2 * r)).unwrap();
            for k in 0..4 {
                assert!((v[k] - w[k]).norm() <= 1e-13 * w[k].norm().max(1e-300), "k={k}");
            }
        }
    }

    #[test]
    fn dphi_matches_finite_difference() {
        let p = params();
        let (u, z) = (c(0.23, 0.11), c(0.17, -0.08));
        let h = 1e-5;
        let fd = (phi(u + h, z, &p).unwrap() - phi(u - h, z, &p).unwrap()) / (2.0 * h);
        let an = dphi_du(u, z, &p).unwrap();
        assert!((fd - an).norm() < 1e-7 * an.norm());
    }

    #[test]
    fn wp_identities() {
        let p = params();
        let (u, z) = (c(0.23, 0.11), c(0.17, -0.08));
        let lhs = phi(u, z, &p).unwrap() * phi(-u, z, &p).unwrap();
        let rhs = wp(z, &p).unwrap() - wp(u, &p).unwrap();
        assert!((lhs - rhs).norm() < 1e-9 * rhs.norm());
        let z0 = c(1e-3, 0.0);
        assert!((wp(z0, &p).unwrap() - 1.0 / (z0 * z0)).norm() < 1e-2);
        assert!((wp(z + 1.0, &p).unwrap() - wp(z, &p).unwrap()).norm() < 1e-10);
        assert!(wp(c(0.0, 0.0), &p).is_err());
    }

    #[test]
    fn extraction_inverts_top_lax() {
        let p = params();
        let mut s = SMap::new();
        for (i, idx) in s_indices(3).into_iter().enumerate() {
            s.insert(idx, c(0.1 * i as f64 - 0.3, 0.05 * (i * i) as f64));
        }
        let top = EllipticTop::new(3, s.clone(), p).unwrap();
        let zs = [c(0.21, 0.13), c(-0.17, 0.07), c(0.33, -0.05)];
        let (got, rep) = extract_s(|z| elliptic_top_lax(&top, z), 3, &p, &zs).unwrap();
        assert!(rep.max_deviation < 1e-10);
        for (k, v) in &s {
            assert!((got[k] - v).norm() < 1e-10);
        }
        let pert = |z: C64| -> Result<CMat> {
            let mut m = elliptic_top_lax(&top, z)?;
            m[(0, 1)] += z;
            Ok(m)
        };
        let (_, bad) = extract_s(pert, 3, &p, &zs).unwrap();
        assert!(bad.max_deviation > 1e-3);
    }

    #[test]
    fn collinear_pair_is_fixed_point() {
        let p = params();
        let mut s = SMap::new();
        s.insert((1, 1), c(0.4, 0.1));
        s.insert((2, 2), c(-0.3, 0.2));
        let top = EllipticTop::new(3, s, p).unwrap();
        let d = eom_rhs(&top).unwrap();
        assert!(d.values().all(|v| v.norm() < 1e-14));
    }
}
