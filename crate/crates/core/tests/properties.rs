use std::f64::consts::PI;

use liouville_core::continuation::{BranchPoint, GalerkinSystem};
use liouville_core::inversion::{solve_mode, FirstKindProfile, HomogeneousProfile, ModeSolveRequest};
use liouville_core::legendre::{
    legendre_p, legendre_p_derivs, legendre_p_normalized, LegendreIndex, SecondKind,
};
use liouville_core::plane_transfer::plane_mass;
use liouville_core::quadrature::{GaussRule, QuadratureSpec};
use liouville_core::spectral::{
    kernel_basis, linearized_apply, morse_index, mu_n, restricted_kernel_basis, Component, Isometry, SphereField,
    SymmetryClass,
};
use proptest::prelude::*;

fn class_strategy(n_max: usize) -> impl Strategy<Value = SymmetryClass> {
    (1..=n_max)
        .prop_flat_map(|n| (Just(n), 0..=n))
        .prop_map(|(n, m)| SymmetryClass::new(n, m).unwrap())
}

/// Random field with coefficients decaying in the degree.
fn field_with(class: SymmetryClass, truncation: usize, raw: &[f64], decay: f64) -> SphereField {
    let mut f = SphereField::zeros(class, truncation);
    let mut k = 0;
    for c in Component::BOTH {
        let modes = f.modes(c).to_vec();
        for (v, mode) in f.coeffs_mut(c).iter_mut().zip(&modes) {
            *v = raw[k % raw.len()] * decay.powi(mode.l as i32);
            k += 1;
        }
    }
    f
}

fn maps_for(class: &SymmetryClass) -> &'static [Isometry] {
    if class.is_radial() {
        &[Isometry::Sigma]
    } else {
        &Isometry::ALL
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn legendre_ode_residual(n in 0usize..=24, m_frac in 0.0f64..=1.0, z in -0.98f64..0.98) {
        let m = ((n as f64) * m_frac).round() as usize;
        let d = legendre_p_derivs(n, m, z);
        let w = 1.0 - z * z;
        let ll = (n * (n + 1)) as f64;
        let mm = (m * m) as f64;
        let terms = [w * d.second, 2.0 * z * d.deriv, ll * d.value, mm / w * d.value];
        let scale = terms.iter().fold(1e-300f64, |a, t| a.max(t.abs()));
        let res = w * d.second - 2.0 * z * d.deriv + (ll - mm / w) * d.value;
        prop_assert!(res.abs() <= 1e-10 * scale, "residual {res:e} scale {scale:e}");
    }

    #[test]
    fn second_kind_ode_residual(n in 1usize..=12, dm in 1usize..=16, z in -0.9f64..0.98) {
        // the order exceeds the degree, where P̃ is independent of P
        let m = n + dm;
        let (v, d1, d2) = SecondKind::new(LegendreIndex::new(n, m)).derivs(z);
        let w = 1.0 - z * z;
        let ll = (n * (n + 1)) as f64;
        let mm = (m * m) as f64;
        let terms = [w * d2, 2.0 * z * d1, ll * v, mm / w * v];
        let scale = terms.iter().fold(1e-300f64, |a, t| a.max(t.abs()));
        let res = w * d2 - 2.0 * z * d1 + (ll - mm / w) * v;
        prop_assert!(res.abs() <= 1e-10 * scale, "residual {res:e} scale {scale:e}");
    }

    #[test]
    fn legendre_parity(n in 0usize..=30, m_frac in 0.0f64..=1.0, z in -1.0f64..=1.0) {
        let m = ((n as f64) * m_frac).round() as usize;
        let idx = LegendreIndex::new(n, m);
        let (a, b) = (legendre_p(idx, -z).unwrap(), legendre_p(idx, z).unwrap());
        let s = if (n + m) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((a - s * b).abs() <= 1e-13 * b.abs().max(1.0));
    }

    #[test]
    fn normalized_legendre_orthogonality(m in 0usize..=6, dn in 0usize..=8, dk in 1usize..=8) {
        let (n, k) = (m + dn, m + dn + dk);
        let rule = GaussRule::new(64);
        let ip = rule.integrate(-1.0, 1.0, |z| legendre_p_normalized(n, m, z) * legendre_p_normalized(k, m, z));
        let norm = rule.integrate(-1.0, 1.0, |z| legendre_p_normalized(n, m, z).powi(2));
        prop_assert!(ip.abs() < 1e-10);
        prop_assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn class_symmetries_hold_pointwise(
        class in class_strategy(8),
        raw in prop::collection::vec(-1.0f64..1.0, 8..32),
        theta in 0.0f64..(2.0 * PI),
        z in -1.0f64..=1.0,
    ) {
        let field = field_with(class, 12, &raw, 0.7);
        for &g in maps_for(&class) {
            let (t2, z2) = g.apply(class.m(), theta, z);
            for c in Component::BOTH {
                let lhs = field.eval(c, t2, z2);
                let rhs = g.expected_sign(&class, c) * field.eval(c, theta, z);
                prop_assert!((lhs - rhs).abs() < 1e-10, "{g:?} {c:?}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn restricted_kernel_is_annihilated(class in class_strategy(10)) {
        for w in restricted_kernel_basis(&class) {
            let image = linearized_apply(mu_n(class.n()), &w).unwrap();
            prop_assert!(image.norm() < 1e-12 * w.norm());
        }
    }

    #[test]
    fn morse_index_drops_across_bifurcation(class in class_strategy(10)) {
        let n = class.n();
        let mu = mu_n(n);
        let (below, above) = (mu - 1e-6, mu + 1e-6);
        let (a, b) = (morse_index(below, &class, 16).unwrap(), morse_index(above, &class, 16).unwrap());
        let crossing = restricted_kernel_basis(&class).len();
        prop_assert!(a >= b);
        prop_assert_eq!(a - b, crossing);
    }

    #[test]
    fn plane_mass_of_the_bubble(mu in -1.9f64..6.0, class in class_strategy(5)) {
        let point = BranchPoint {
            mu,
            eps: 0.0,
            field: SphereField::zeros(class, class.n()),
            residual_norm: 0.0,
            step_index: 0,
            newton_iterations: 0,
            masses: (4.0 * PI, 4.0 * PI),
        };
        let expected = 8.0 * PI / (2.0 + mu);
        for c in Component::BOTH {
            let m = plane_mass(&point, c);
            prop_assert!((m - expected).abs() < 1e-8 * expected, "{m} vs {expected}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn kernel_dimension_at_bifurcation(n in 1usize..=40) {
        prop_assert_eq!(kernel_basis(mu_n(n)).unwrap().len(), 2 * n + 4);
    }

    #[test]
    fn solve_inverts_the_mode_operator(
        n in 2usize..=7,
        first in any::<bool>(),
        l_off in 0usize..=9,
        dk in 0usize..=6,
    ) {
        let component = if first { Component::First } else { Component::Second };
        let level = if first { 1 } else { n };
        let l = l_off.min(level + 2);
        let k = l + dk;
        prop_assume!(k != level);
        let lam = (level * (level + 1)) as f64;
        let factor = lam - (k * (k + 1)) as f64;
        let rhs = move |z: f64| factor * legendre_p_normalized(k, l, z);
        let req = ModeSolveRequest { n, l, component, rhs: &rhs };
        let sol = solve_mode(&req, &QuadratureSpec::default()).unwrap();
        for (&z, &v) in sol.z.iter().zip(&sol.values) {
            let want = legendre_p_normalized(k, l, z);
            prop_assert!(v.is_finite());
            prop_assert!((v - want).abs() < 1e-8, "z = {z}: {v} vs {want}");
        }
    }

    #[test]
    fn resonant_solutions_are_orthogonal(
        n in 2usize..=7,
        l_frac in 0.0f64..=1.0,
        coeffs in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let l = ((n as f64) * l_frac).round() as usize;
        let terms: Vec<(usize, f64)> = (l..l + 8).filter(|&k| k != n).zip(coeffs.iter().cycle().copied()).collect();
        let rhs = |z: f64| terms.iter().map(|&(k, a)| a * legendre_p_normalized(k, l, z)).sum::<f64>();
        let req = ModeSolveRequest { n, l, component: Component::Second, rhs: &rhs };
        let sol = solve_mode(&req, &QuadratureSpec::default()).unwrap();
        prop_assert!(sol.constant.is_some());
        let p = FirstKindProfile::new(n, l);
        // Cauchy-Schwarz bound on the projection
        let phi_sq: f64 = sol.weights.iter().zip(&sol.values).map(|(w, v)| w * v * v).sum();
        let p_sq: f64 = sol.weights.iter().zip(&sol.z).map(|(w, &z)| w * p.value(z).powi(2)).sum();
        let ortho = sol.inner_product(|z| p.value(z)) / (phi_sq * p_sq).sqrt();
        prop_assert!(ortho.abs() < 1e-10, "relative projection {ortho:e}");
        prop_assert!(sol.values.iter().all(|v| v.is_finite()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn jacobian_matches_differences(
        class in class_strategy(5).prop_filter("simple kernel", |c| restricted_kernel_basis(c).len() == 1),
        raw in prop::collection::vec(-0.3f64..0.3, 8..24),
        dmu in -0.2f64..0.2,
    ) {
        let system = GalerkinSystem::with_default_grid(class, 10).without_aliasing_check();
        let field = field_with(class, 10, &raw, 0.3);
        let mu = mu_n(class.n()) + dmu;
        let exact = system.jacobian(mu, &field).unwrap();
        let fd = system.jacobian_fd(mu, &field, 1e-6).unwrap();
        let scale = exact.amax().max(1.0);
        let diff = (&exact - &fd).amax();
        prop_assert!(diff < 1e-6 * scale, "jacobian mismatch {diff:e}");
    }

    #[test]
    fn nonlinear_term_respects_the_class(
        class in class_strategy(6),
        raw in prop::collection::vec(-0.5f64..0.5, 8..24),
        dmu in -0.2f64..0.2,
    ) {
        let system = GalerkinSystem::with_default_grid(class, 12).without_aliasing_check();
        let field = field_with(class, 12, &raw, 0.3);
        let defect = system.equivariance_defect(mu_n(class.n()) + dmu, &field).unwrap();
        prop_assert!(defect < 1e-10, "defect {defect:e}");
    }
}
