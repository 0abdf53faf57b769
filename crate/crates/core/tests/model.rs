use cnls_core::model::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn quad() -> PotentialF {
    PotentialF::parse(QUADRATIC_SYSTEM, 2).unwrap()
}

fn cubic() -> PotentialF {
    PotentialF::parse(CUBIC_SYSTEM, 2).unwrap()
}

// Hand-derived nonlinearities used as oracles.
fn quad_f(z: &[Complex64]) -> [Complex64; 2] {
    [2.0 * z[0].conj() * z[1], z[0] * z[0]]
}

fn cubic_f(z: &[Complex64]) -> [Complex64; 2] {
    let (a1, a2) = (z[0].norm_sqr(), z[1].norm_sqr());
    [
        z[0] * a1 / 9.0 + 2.0 * a2 * z[0] + z[0].conj().powi(2) * z[1] / 3.0,
        9.0 * a2 * z[1] + 2.0 * a1 * z[1] + z[0].powi(3) / 9.0,
    ]
}

fn params(d: usize, alpha: [f64; 2], gamma: [f64; 2], sigma: Option<[f64; 2]>) -> SystemParams {
    SystemParams::new(d, alpha.to_vec(), gamma.to_vec(), vec![0.0, 0.0], sigma.map(|s| s.to_vec())).unwrap()
}

#[test]
fn parses_quadratic_coupling_as_one_monomial() {
    let f = quad();
    assert_eq!(f.terms.len(), 1);
    let t = &f.terms[0];
    assert_eq!(t.coeff, c(1.0, 0.0));
    assert_eq!(t.m, vec![0, 1]);
    assert_eq!(t.n, vec![2, 0]);
    assert_eq!(f.monomials().count(), 1);
    assert_eq!(f.modulus_terms().count(), 0);
}

#[test]
fn parses_cubic_system_as_three_modulus_terms_and_one_monomial() {
    let f = cubic();
    assert_eq!(f.modulus_terms().count(), 3);
    assert_eq!(f.monomials().count(), 1);
    let mono = f.monomials().next().unwrap();
    assert!((mono.coeff - c(1.0 / 9.0, 0.0)).norm() < 1e-15);
    assert_eq!(mono.n, vec![3, 0]);
    assert_eq!(mono.m, vec![0, 1]);
}

#[test]
fn empty_expression_is_a_syntax_error() {
    let e = PotentialF::parse("", 1).unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Empty);
    let e = PotentialF::parse("   ", 1).unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Empty);
}

#[test]
fn parse_errors_carry_positions() {
    let e = PotentialF::parse("z1^2 * z3", 2).unwrap_err();
    assert!(matches!(e.kind, ParseErrorKind::ComponentOutOfRange { .. }));
    assert_eq!(e.pos, 7);
    let e = PotentialF::parse("abs(z1)^-2", 1).unwrap_err();
    assert!(matches!(
        e.kind,
        ParseErrorKind::NegativeModulusExponent(_) | ParseErrorKind::Unexpected { .. } | ParseErrorKind::UnexpectedChar(_)
    ));
    assert!(PotentialF::parse("z1 $ z1", 1).is_err());
    assert!(PotentialF::parse("z1 + ", 1).is_err());
    assert!(PotentialF::parse("foo(z1)", 1).is_err());
}

#[test]
fn parser_accepts_grammar_variants() {
    // i, decimals, rationals, parentheses and rational abs powers
    let f = PotentialF::parse("(2 + 3*i) * z1^2 * zbar2 - 0.5*abs(z1)^10/3", 2).unwrap();
    let z = [c(0.3, -0.7), c(1.1, 0.4)];
    let want = c(2.0, 3.0) * z[0] * z[0] * z[1].conj() - 0.5 * z[0].norm().powf(10.0 / 3.0);
    assert!((f.eval(&z) - want).norm() < 1e-14);
}

#[test]
fn eval_f_examples() {
    let f = quad();
    assert_eq!(eval_F(&f, &[c(1.0, 0.0), c(1.0, 0.0)]), c(1.0, 0.0));
    assert!((eval_F(&f, &[c(0.0, 1.0), c(1.0, 0.0)]) - c(-1.0, 0.0)).norm() < 1e-15);
    for g in [quad(), cubic()] {
        assert_eq!(eval_F(&g, &[c(0.0, 0.0), c(0.0, 0.0)]), c(0.0, 0.0));
    }
}

#[test]
fn derived_nonlinearities_of_quadratic_coupling() {
    let f = quad();
    let f1 = derive_fk(&f, 0);
    let f2 = derive_fk(&f, 1);
    assert!((eval_fk(&f1, &[c(1.0, 0.0), c(2.0, 0.0)]) - c(4.0, 0.0)).norm() < 1e-15);
    assert_eq!(eval_fk(&f1, &[c(0.0, 0.0), c(5.0, 0.0)]), c(0.0, 0.0));
    assert!((eval_fk(&f1, &[c(0.0, 1.0), c(1.0, 0.0)]) - c(0.0, -2.0)).norm() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let z = complex_gaussian(&mut rng, 2);
        let want = quad_f(&z);
        assert!((f1.eval(&z) - want[0]).norm() < 1e-13);
        assert!((f2.eval(&z) - want[1]).norm() < 1e-13);
    }
}

#[test]
fn derived_nonlinearities_of_cubic_system() {
    let f = cubic();
    let fk = derive_all(&f);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let z = complex_gaussian(&mut rng, 2);
        let want = cubic_f(&z);
        for k in 0..2 {
            assert!((fk[k].eval(&z) - want[k]).norm() <= 1e-12 * (1.0 + want[k].norm()));
        }
    }
}

#[test]
fn scalar_power_nonlinearity() {
    for d in 3..=6 {
        let f = PotentialF::scalar_power(d);
        let f1 = derive_fk(&f, 0);
        let e = 4.0 / (d as f64 - 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        for _ in 0..100 {
            let z = complex_gaussian(&mut rng, 1);
            let want = z[0].norm().powf(e) * z[0];
            assert!((f1.eval(&z) - want).norm() <= 1e-13 * (1.0 + want.norm()), "d={d}");
        }
        assert_eq!(f1.eval(&[c(0.0, 0.0)]), c(0.0, 0.0));
    }
}

#[test]
fn homogeneity_hypothesis_by_degree() {
    let r6 = check_hypotheses(&quad(), &params(6, [1.0, 1.0], [1.0, 0.5], Some([1.0, 2.0])), 500, 1, 1e-10);
    assert!(matches!(r6.h5, Status::Proven { .. }));
    assert!(matches!(r6.h1, Status::Proven { .. }));
    let r4 = check_hypotheses(&quad(), &params(4, [1.0, 1.0], [1.0, 0.5], Some([1.0, 2.0])), 500, 1, 1e-10);
    assert!(r4.h5.failed());
}

#[test]
fn cubic_system_conserves_charge_with_sigma_one_three() {
    // Im[f1 conj z1 + 3 f2 conj z2] vanishes identically: the monomial part gives
    // (1/3) zbar1^3 z2 + (1/3) z1^3 zbar2, which is real.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let z = complex_gaussian(&mut rng, 2);
        let f = cubic_f(&z);
        let s = f[0] * z[0].conj() + 3.0 * f[1] * z[1].conj();
        assert!(s.im.abs() < 1e-12 * (1.0 + s.norm()));
    }
    let r = check_hypotheses(&cubic(), &params(4, [1.0, 3.0], [1.0, 1.0], Some([1.0, 3.0])), 10_000, 7, 1e-10);
    match &r.h4 {
        Status::SampledPass { max_residual, .. } => assert!(*max_residual <= 1e-12),
        other => panic!("H4: {other:?}"),
    }
    assert!(r.ground_state_ready());
    assert!(r.h6.passed() && r.h7.passed() && r.h8.passed());
}

#[test]
fn missing_sigma_defaults_to_alpha_over_gamma() {
    let p = params(4, [1.0, 3.0], [1.0, 1.0], None);
    let r = check_hypotheses(&cubic(), &p, 1000, 7, 1e-10);
    assert!(r.sigma_defaulted);
    assert_eq!(r.sigma_used, vec![1.0, 3.0]);
    assert!(r.h4.passed());
    // the default sigma = alpha/gamma = (1, 1) does not balance the quadratic coupling
    let r = check_hypotheses(&quad(), &params(6, [1.0, 1.0], [1.0, 1.0], None), 1000, 7, 1e-10);
    assert!(matches!(r.h4, Status::NotCheckable { .. }));
}

#[test]
fn mass_resonance_of_quadratic_coupling() {
    let yes = check_mass_resonance(&quad(), &params(6, [1.0, 1.0], [1.0, 0.5], None), 10_000, 11, 1e-10);
    assert!(yes.holds, "residual {}", yes.max_residual);
    let no = check_mass_resonance(&quad(), &params(6, [1.0, 1.0], [1.0, 1.0], None), 10_000, 11, 1e-10);
    assert!(!no.holds);
    let w = no.witness.expect("witness");
    assert!(w.z.iter().any(|z| z.norm() > 0.0));
    // the witness reproduces the reported residual
    let fk = derive_all(&quad());
    let s: Complex64 = fk.iter().map(|g| 0.5 * g.eval(&w.z) * w.z[g.k].conj()).sum();
    assert!((s.im.abs() - no.max_residual).abs() <= 1e-12 * (1.0 + no.max_residual));
}

#[test]
fn mass_resonance_of_cubic_system() {
    let yes = check_mass_resonance(&cubic(), &params(4, [1.0, 3.0], [1.0, 1.0], None), 10_000, 5, 1e-10);
    assert!(yes.holds);
    let no = check_mass_resonance(&cubic(), &params(4, [1.0, 2.0], [1.0, 1.0], None), 10_000, 5, 1e-10);
    assert!(!no.holds);
}

#[test]
fn gauge_examples() {
    let f = quad();
    assert!(check_gauge(&f, &[1.0, 2.0], 10_000, 2, 1e-12).passed());
    assert!(check_gauge(&f, &[1.0, 1.0], 1000, 2, 1e-10).failed());
    let fk = derive_all(&f);
    let z = [c(0.4, 1.0), c(-0.2, 0.3)];
    assert_eq!(gauge_residual(&fk, &[1.0, 1.0], &z, 0.0), 0.0);
    for d in 3..=6 {
        assert!(check_gauge(&PotentialF::scalar_power(d), &[1.0], 2000, 2, 1e-12).passed());
    }
    assert!(check_gauge(&cubic(), &[1.0, 3.0], 10_000, 2, 1e-10).passed());
}

#[test]
fn euler_identity_examples() {
    let f = quad();
    let fk = derive_all(&f);
    assert!(euler_identity_residual(&f, &fk, 6, &[c(1.0, 0.0), c(1.0, 0.0)]) < 1e-15);
    assert_eq!(euler_identity_residual(&f, &fk, 6, &[c(0.0, 0.0), c(0.0, 0.0)]), 0.0);
}

#[test]
fn real_inputs_give_real_nonlinearities() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for f in [quad(), cubic()] {
        let fk = derive_all(&f);
        for _ in 0..1000 {
            let z: Vec<Complex64> = complex_gaussian(&mut rng, 2).iter().map(|w| c(w.re, 0.0)).collect();
            assert!(f.eval(&z).im.abs() <= 1e-12);
            for g in &fk {
                assert!(g.eval(&z).im.abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn params_validation() {
    assert!(SystemParams::new(2, vec![1.0], vec![1.0], vec![0.0], None).is_err());
    assert!(SystemParams::new(4, vec![-1.0], vec![1.0], vec![0.0], None).is_err());
    assert!(SystemParams::new(4, vec![1.0], vec![1.0], vec![-0.1], None).is_err());
    assert!(SystemParams::new(4, vec![1.0, 1.0], vec![1.0], vec![0.0, 0.0], None).is_err());
    let p = SystemParams::scalar(5);
    assert!((p.p_crit() - 7.0 / 3.0).abs() < 1e-15);
    assert!((p.q_crit() - 10.0 / 3.0).abs() < 1e-15);
}

fn named(idx: usize) -> (PotentialF, usize) {
    match idx {
        0 => (quad(), 6),
        1 => (cubic(), 4),
        2 => (PotentialF::scalar_power(3), 3),
        _ => (PotentialF::scalar_power(5), 5),
    }
}

fn zvec(l: usize, parts: &[f64]) -> Vec<Complex64> {
    (0..l).map(|k| c(parts[2 * k], parts[2 * k + 1])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn homogeneity_of_derived_terms(idx in 0usize..4, parts in prop::array::uniform4(-3.0f64..3.0), lambda in 0.01f64..10.0) {
        let (f, d) = named(idx);
        let z = zvec(f.l, &parts);
        let fk = derive_all(&f);
        let p = (d as f64 + 2.0) / (d as f64 - 2.0);
        let zl: f64 = z.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt() * lambda;
        let res = homogeneity_residual(&fk, d, &z, lambda);
        prop_assert!(res <= 1e-10 * (1.0 + zl).powf(p), "residual {res}");
    }

    #[test]
    fn euler_identity_holds(idx in 0usize..4, parts in prop::array::uniform4(-3.0f64..3.0)) {
        let (f, d) = named(idx);
        let z = zvec(f.l, &parts);
        let fk = derive_all(&f);
        let scale = 1.0 + z.iter().map(|w| w.norm_sqr()).sum::<f64>().powf(d as f64 / (d as f64 - 2.0));
        prop_assert!(euler_identity_residual(&f, &fk, d, &z) <= 1e-12 * scale);
    }

    #[test]
    fn derivation_is_linear(parts in prop::array::uniform4(-2.0f64..2.0), a in -3.0f64..3.0) {
        let f1 = quad();
        let f2 = PotentialF::parse(&format!("({a})*z1*zbar2^2 + abs(z1)^3"), 2).unwrap();
        let sum = f1.add(&f2);
        let z = zvec(2, &parts);
        for k in 0..2 {
            let lhs = derive_fk(&sum, k).eval(&z);
            let rhs = derive_fk(&f1, k).eval(&z) + derive_fk(&f2, k).eval(&z);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn print_then_parse_round_trips(
        coeffs in prop::collection::vec((-5i32..=5, -5i32..=5, 1u32..=4), 1..4),
        exps in prop::collection::vec((0u32..3, 0u32..3, 0u32..3, 0u32..3, 0u32..3), 4),
    ) {
        let mut src = String::new();
        for (t, (re, im, den)) in coeffs.iter().enumerate() {
            if *re == 0 && *im == 0 { continue; }
            let (m1, n1, m2, n2, a) = exps[t];
            if !src.is_empty() { src.push_str(" + "); }
            src.push_str(&format!("(({re} + {im}*i)/{den}) * z1^{} * zbar1^{} * z2^{} * zbar2^{} * abs(z2)^{}", m1 + 1, n1 + 1, m2 + 1, n2 + 1, a + 1));
        }
        prop_assume!(!src.is_empty());
        let f = match PotentialF::parse(&src, 2) { Ok(f) => f, Err(_) => return Ok(()) };
        let printed = f.to_string();
        let g = PotentialF::parse(&printed, 2).unwrap();
        prop_assert_eq!(g.terms.len(), f.terms.len());
        for (a, b) in f.terms.iter().zip(&g.terms) {
            prop_assert!(a.same_exponents(b));
            prop_assert!((a.coeff - b.coeff).norm() <= 1e-15 * (1.0 + a.coeff.norm()));
        }
    }
}
