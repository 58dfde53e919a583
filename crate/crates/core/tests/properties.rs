use cmtop::glpoly::{GlPoly, GlVar, Mono};
use cmtop::lax::{load_appendix, sin_basis_ext, AppendixFamily, TopState};
use cmtop::linalg::{c, fro, CMat};
use cmtop::scalar::{GaussRat, PiScalar};
use cmtop::zseries::{series_cos, series_cot, series_inv_sin, series_sin, ZSeries};
use proptest::prelude::*;

fn gauss() -> impl Strategy<Value = GaussRat> {
    (-4i64..=4, 1i64..=3, -4i64..=4, 1i64..=3).prop_map(|(a, b, c, d)| GaussRat::from_parts(a, b, c, d))
}

fn pis() -> impl Strategy<Value = PiScalar> {
    prop::collection::vec((gauss(), -2i32..=2), 0..4).prop_map(|ts| {
        let mut s = PiScalar::zero();
        for (g, k) in ts {
            s += &PiScalar::term(g, k);
        }
        s
    })
}

fn mono(n: usize, deg: usize) -> impl Strategy<Value = Mono> {
    prop::collection::vec((1..=n, 1..=n), 0..=deg)
        .prop_map(|vs| Mono::from_pairs(vs.into_iter().map(|(i, j)| (GlVar::new(i, j), 1)).collect()))
}

fn poly(n: usize, deg: usize, terms: usize) -> impl Strategy<Value = GlPoly> {
    prop::collection::vec((mono(n, deg), gauss()), 1..=terms)
        .prop_map(move |ts| GlPoly::from_terms(n, ts.into_iter().map(|(m, g)| (m, PiScalar::from_gauss(g)))))
}

fn matrix(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
        .prop_map(move |v| CMat::from_fn(n, n, |i, j| c(v[i * n + j].0, v[i * n + j].1)))
}

fn series() -> impl Strategy<Value = ZSeries<PiScalar>> {
    (-2i32..=1, prop::collection::vec(pis(), 1..5), prop::option::of(2i32..6)).prop_map(|(lo, cs, t)| {
        let hi = lo + cs.len() as i32 - 1;
        let trunc = t.map(|t| t.max(hi));
        ZSeries::new(lo, cs, trunc)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pi_scalar_ring_axioms(a in pis(), b in pis(), c3 in pis()) {
        prop_assert_eq!(&(&a * &b) * &c3, &a * &(&b * &c3));
        prop_assert_eq!(&a * &(&b + &c3), &(&a * &b) + &(&a * &c3));
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert!((&a - &a).is_zero());
    }

    #[test]
    fn pi_scalar_eval_is_multiplicative(a in pis(), b in pis()) {
        let prod = a.eval() * b.eval();
        prop_assert!(((&a * &b).eval() - prod).norm() < 1e-12 * (1.0 + prod.norm()));
        prop_assert!(((&a + &b).eval() - a.eval() - b.eval()).norm() < 1e-12 * (1.0 + a.eval().norm() + b.eval().norm()));
    }

    #[test]
    fn bracket_antisymmetry(a in poly(3, 3, 4), b in poly(3, 3, 4)) {
        let s = &a.poisson(&b).unwrap() + &b.poisson(&a).unwrap();
        prop_assert!(s.is_zero());
    }

    #[test]
    fn bracket_jacobi((a, b, c3) in (2usize..=3).prop_flat_map(|n| (poly(n, 2, 3), poly(n, 2, 3), poly(n, 2, 3)))) {
        let j1 = a.poisson(&b.poisson(&c3).unwrap()).unwrap();
        let j2 = b.poisson(&c3.poisson(&a).unwrap()).unwrap();
        let j3 = c3.poisson(&a.poisson(&b).unwrap()).unwrap();
        prop_assert!((&(&j1 + &j2) + &j3).is_zero());
    }

    #[test]
    fn bracket_leibniz(a in poly(3, 2, 3), b in poly(3, 2, 3), c3 in poly(3, 2, 3)) {
        let lhs = (&a * &b).poisson(&c3).unwrap();
        let rhs = &(&a * &b.poisson(&c3).unwrap()) + &(&a.poisson(&c3).unwrap() * &b);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn bracket_numeric_from_partials(a in poly(3, 3, 4), b in poly(3, 3, 4), g in matrix(3)) {
        let exact = a.poisson(&b).unwrap().evaluate(&g);
        // {A,B} = Σ g_im (∂_ij A ∂_jm B − ∂_jm A ∂_ij B)
        let mut num = c(0.0, 0.0);
        for i in 1..=3 {
            for j in 1..=3 {
                for m in 1..=3 {
                    let (x, y) = (GlVar::new(i, j), GlVar::new(j, m));
                    num += g[(i - 1, m - 1)]
                        * (a.partial(x).evaluate(&g) * b.partial(y).evaluate(&g)
                            - a.partial(y).evaluate(&g) * b.partial(x).evaluate(&g));
                }
            }
        }
        prop_assert!((exact - num).norm() <= 1e-10 * (1.0 + num.norm()));
    }

    #[test]
    fn series_product_associative(a in series(), b in series(), c3 in series()) {
        let l = a.mul(&b).mul(&c3);
        let r = a.mul(&b.mul(&c3));
        prop_assert_eq!(l.trunc(), r.trunc());
        let lo = l.min_deg().min(r.min_deg());
        let hi = l.trunc().unwrap_or(l.max_deg().max(r.max_deg()));
        for j in lo..=hi {
            prop_assert_eq!(l.coeff(j).unwrap(), r.coeff(j).unwrap(), "z^{}", j);
        }
    }

    #[test]
    fn series_trig_identities(order in 2i32..12) {
        // sin · (1/sin) = 1 and sin · cot = cos through the retained order
        let one = series_sin(order + 2).mul(&series_inv_sin(order).unwrap());
        let cs = series_sin(order + 2).mul(&series_cot(order).unwrap());
        let cos = series_cos(order + 2);
        for j in 0..=one.trunc().unwrap() {
            let want = if j == 0 { PiScalar::one() } else { PiScalar::zero() };
            prop_assert_eq!(one.coeff(j).unwrap(), want);
            prop_assert_eq!(cs.coeff(j).unwrap(), cos.coeff(j).unwrap());
        }
    }

    #[test]
    fn sin_basis_relations(n in 2usize..=5, s in -6i64..6, k in -6i64..6, m in -6i64..6, j in -6i64..6) {
        let nf = n as f64;
        let (a, b) = (sin_basis_ext(n, s, k), sin_basis_ext(n, m, j));
        let comm = &a * &b - &b * &a;
        let coef = c(0.0, 2.0) * (std::f64::consts::PI * ((k * m - s * j) as f64) / nf).sin();
        let want = sin_basis_ext(n, s + m, k + j) * coef;
        prop_assert!(fro(&(comm - want)) < 1e-12);
        let tr = (&a * &b).trace();
        let ni = n as i64;
        let dual = (s + m).rem_euclid(ni) == 0 && (k + j).rem_euclid(ni) == 0;
        if !dual {
            prop_assert!(tr.norm() < 1e-12);
        }
        if m == -s && j == -k && (s.rem_euclid(ni), k.rem_euclid(ni)) != (0, 0) {
            prop_assert!((tr - c(nf, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn s_g_round_trip(n in 2usize..=5, g in matrix(5)) {
        let mut g = g.view((0, 0), (n, n)).into_owned();
        let t = g.trace() / n as f64;
        for i in 0..n {
            g[(i, i)] -= t;
        }
        let st = TopState::from_g(g.clone()).unwrap();
        let back = TopState::from_s(n, &st.s()).unwrap();
        prop_assert!(fro(&(back.g() - &g)) < 1e-12 * (1.0 + fro(&g)));
    }

    #[test]
    fn appendix_t_series_matches_closed_form(n in 2usize..=4, re in -0.08f64..0.08, im in -0.08f64..0.08, g in matrix(4)) {
        prop_assume!(re.abs() + im.abs() > 0.01);
        let g = g.view((0, 0), (n, n)).into_owned();
        let l = load_appendix(AppendixFamily::T, n).unwrap();
        let z = c(re, im);
        let direct = l.evaluate(z, Some(&g)).unwrap();
        let ser = l.laurent_entries(14).unwrap();
        let approx = CMat::from_fn(n, n, |i, j| ser[i][j].eval_with(z, |p| p.evaluate(&g)));
        prop_assert!(fro(&(approx - &direct)) < 1e-9 * fro(&direct));
    }
}
