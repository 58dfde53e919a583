use cmtop::glpoly::GlPoly;
use cmtop::invariants::{
    check_commute, compare_mod_center, family_items, numeric_precheck, trace_invariants, Index, InvariantFamily,
};
use cmtop::lax::{load_appendix, load_appendix_hamiltonians, AppendixFamily};
use cmtop::scalar::{GaussRat, PiScalar};

fn family(fam: AppendixFamily, n: usize, kmax: usize) -> InvariantFamily {
    trace_invariants(&load_appendix(fam, n).unwrap(), kmax, 2).unwrap()
}

fn all_pairs_commute(fam: AppendixFamily, n: usize, kmax: usize) {
    let f = family(fam, n, kmax);
    let items = family_items(&f);
    assert!(items.len() >= 2, "{fam:?} N={n}: only {} coefficients", items.len());
    let rep = check_commute(&items).unwrap();
    let bad: Vec<_> = rep.pairs.iter().filter(|p| p.status != "PASS").map(|p| p.pair.clone()).collect();
    assert!(bad.is_empty(), "{fam:?} N={n}: {bad:?}");
}

#[test]
fn involution_rational_n2_n3() {
    all_pairs_commute(AppendixFamily::R, 2, 3);
    all_pairs_commute(AppendixFamily::R, 3, 3);
}

#[test]
fn involution_trig_n2_n3() {
    all_pairs_commute(AppendixFamily::T, 2, 3);
    all_pairs_commute(AppendixFamily::T, 3, 3);
}

#[test]
fn involution_n4_exact_to_k3_numeric_k4() {
    for fam in [AppendixFamily::R, AppendixFamily::T] {
        all_pairs_commute(fam, 4, 3);
        let f = family(fam, 4, 4);
        let items = family_items(&f);
        let k4: Vec<&(String, GlPoly)> = items.iter().filter(|(l, _)| l.starts_with("trL^4")).collect();
        for (la, a) in &k4 {
            for (lb, b) in &items {
                let r = numeric_precheck(a, b, 20, 11);
                assert!(r < 1e-8, "{{{la}, {lb}}}: {r}");
            }
        }
    }
}

#[test]
fn printed_hamiltonians_central_modulo_center() {
    for fam in [AppendixFamily::T, AppendixFamily::R] {
        for n in 2..=4 {
            let hams = load_appendix_hamiltonians(fam, n).unwrap();
            let want: Vec<u32> = if n == 4 { vec![2, 3, 4] } else if n == 3 { vec![2, 3] } else { vec![2] };
            assert_eq!(hams.keys().copied().collect::<Vec<_>>(), want);
            let f = family(fam, n, *want.last().unwrap() as usize);
            for (k, h) in &hams {
                let (_, p, central) = f.top_component(*k as usize).unwrap();
                assert!(!central);
                let cmp = compare_mod_center(&p, h).unwrap();
                assert!(cmp.central && cmp.residual.is_zero(), "{fam:?} N={n} H{k}");
            }
        }
    }
}

#[test]
fn trig_n2_z0_calibration_is_pinned() {
    // independent oracle: expand tr L² at z⁰ by hand from the N = 2 appendix matrix
    // L = (2π/sin πz)·P, P = [[a(e⁻ − e⁺)... ]] gives z⁰[tr L²/2] = −2·H₂ + (π²/3)·C
    let f = family(AppendixFamily::T, 2, 2);
    let z0 = f.coefficient(2, Index::Laurent(0)).unwrap();
    let h2 = &load_appendix_hamiltonians(AppendixFamily::T, 2).unwrap()[&2];
    let cmp = compare_mod_center(&z0, h2).unwrap();
    assert_eq!(cmp.lambda, Some(PiScalar::int(-2)));
    let g = |i, j| GlPoly::var(2, i, j);
    let d = &g(1, 1) - &g(2, 2);
    let casimir = &(&d * &d) + &(&g(1, 2) * &g(2, 1)).scale_gauss(&GaussRat::int(4));
    assert_eq!(cmp.residual, casimir.scalar_mul(&PiScalar::term(GaussRat::ratio(1, 3), 2)));
    assert!(cmp.central);
    assert_eq!(&z0 - &h2.scalar_mul(&PiScalar::int(-2)), cmp.residual);
}
