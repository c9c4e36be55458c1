use approx::assert_relative_eq;
use proptest::prelude::*;

use warpcert::deform::{self, SlabMetric};
use warpcert::geometry::{self, ModelFiber};
use warpcert::glue::Smoothstep;
use warpcert::spectral::{self, BoundaryCondition, SpectralOptions};
use warpcert::warp::{self, ConstructionParams};

fn einstein_product() -> impl Strategy<Value = ModelFiber> {
    // Up to three factors: round spheres of random radius or flat circles.
    proptest::collection::vec((0usize..4, 0.3f64..3.0), 1..4).prop_map(|factors| {
        let parts: Vec<ModelFiber> = factors
            .into_iter()
            .map(|(d, r)| if d <= 1 { ModelFiber::flat(1) } else { ModelFiber::round_sphere(d, r) })
            .collect();
        ModelFiber::product(&parts)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothstep_is_monotone_and_flat(order in 1usize..9, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let s = Smoothstep::new(order);
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        prop_assert!(s.value(lo) <= s.value(hi) + 1e-15);
        prop_assert!((s.value(x) + s.value(1.0 - x) - 1.0).abs() < 1e-13);
        for d in 1..=order {
            prop_assert_eq!(s.derivative(0.0, d), 0.0);
            prop_assert_eq!(s.derivative(1.0, d), 0.0);
        }
    }

    #[test]
    fn parameter_windows_match_their_definition(
        n in 3usize..8,
        r2 in 0.05f64..1.55,
        lambda0 in 0.01f64..1.2,
        alpha in 0.5f64..10.0,
    ) {
        let p = ConstructionParams { n, r2, lambda0, alpha, ..Default::default() };
        let lo = n as f64 - 2.0;
        let inside = lambda0 > r2.cos() && lambda0 < 1.0 && alpha > lo && alpha * lambda0 * lambda0 < lo;
        prop_assert_eq!(warp::validate_params(&p).is_ok(), inside);
    }

    #[test]
    fn first_integral_holds_across_the_window(
        n in 3usize..6,
        s in 0.05f64..0.95,
        u in 0.05f64..0.95,
    ) {
        let r2: f64 = 0.5;
        let lambda0 = r2.cos() + u * (1.0 - r2.cos());
        let lo = n as f64 - 2.0;
        let alpha = lo + s * (lo / (lambda0 * lambda0) - lo);
        let p = ConstructionParams { n, r2, lambda0, alpha, horizon: 5.0, grid_points: 201, ..Default::default() };
        let prof = warp::solve_ivp(&p).unwrap();
        prop_assert!(warp::first_integral_residual(&prof, &p) < 1e-9);
        prop_assert!(prof.f1.iter().all(|&d| d < lambda0));
    }

    #[test]
    fn ricci_scales_by_n_squared_under_rescaling(
        f in 0.2f64..3.0, f1 in -0.9f64..0.9, f2 in -2.0f64..2.0,
        h in 0.2f64..3.0, h1 in -2.0f64..2.0, h2 in -2.0f64..2.0,
        scale in 0.1f64..20.0,
    ) {
        let base = geometry::doubly_warped_ricci(4, [f, f1, f2], [h, h1, h2]);
        let scaled = geometry::doubly_warped_ricci(4, [f / scale, f1, f2 * scale], [h / scale, h1, h2 * scale]);
        for (a, b) in base.iter().zip(scaled) {
            assert_relative_eq!(b, a * scale * scale, epsilon = 1e-9, max_relative = 1e-11);
        }
    }

    #[test]
    fn diagonal_family_agrees_with_doubly_warped_engine(
        n in 3usize..7,
        f in 0.2f64..3.0, f1 in -0.9f64..0.9, f2 in -2.0f64..2.0,
        h in 0.2f64..3.0, h1 in -2.0f64..2.0, h2 in -2.0f64..2.0,
    ) {
        // dt² + h² dθ² + f² ds²_{n-1} as a diagonal family over S¹ × S^{n-1}.
        let sphere = n - 1;
        let mut ric = vec![0.0];
        ric.extend(std::iter::repeat_n(sphere as f64 - 1.0, sphere));
        let mut a = vec![h * h];
        let mut a1 = vec![2.0 * h * h1];
        let mut a2 = vec![2.0 * (h1 * h1 + h * h2)];
        for _ in 0..sphere {
            a.push(f * f);
            a1.push(2.0 * f * f1);
            a2.push(2.0 * (f1 * f1 + f * f2));
        }
        let family = deform::diagonal_family_ricci(&ric, &a, &a1, &a2);
        let [tt, circle, sph] = geometry::doubly_warped_ricci(n, [f, f1, f2], [h, h1, h2]);
        assert_relative_eq!(family.ric_tt, tt, epsilon = 1e-10, max_relative = 1e-12);
        assert_relative_eq!(family.ric_fiber[0] / a[0], circle, epsilon = 1e-10, max_relative = 1e-12);
        for i in 1..=sphere {
            assert_relative_eq!(family.ric_fiber[i] / a[i], sph, epsilon = 1e-10, max_relative = 1e-12);
        }
    }

    #[test]
    fn slab_is_exact_for_einstein_products(fiber in einstein_product(), eps in 0.01f64..5.0) {
        let slab = SlabMetric::new(fiber.clone(), eps).unwrap();
        assert_relative_eq!(slab.trace(), -eps, epsilon = 1e-12);
        let r = deform::slab_ricci(&slab).unwrap();
        assert_relative_eq!(r.ric_tt, eps, epsilon = 1e-13, max_relative = 1e-14);
        let want = (fiber.scal + eps) / fiber.dim as f64;
        for (v, g) in r.ric_fiber.iter().zip(&fiber.metric_diag) {
            assert_relative_eq!(v / g, want, epsilon = 1e-13, max_relative = 1e-13);
        }
        prop_assert!(deform::certify_slab_width(&slab, 32).unwrap() > 0.0);
    }

    #[test]
    fn necessity_is_never_refuted(fiber in einstein_product(), eps in 0.01f64..3.0, seed in any::<u64>()) {
        let s = deform::necessity_search(&fiber, eps, 200, seed).unwrap();
        prop_assert_eq!(s.refutations, 0);
    }

    #[test]
    fn morse_index_is_monotone_with_multiplicity_jumps(m in 1usize..7, a in 0.01f64..60.0, b in 0.01f64..60.0) {
        let s = spectral::sphere_spectrum(m, 12);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (ilo, ihi) = match (spectral::morse_index(&s, lo), spectral::morse_index(&s, hi)) {
            (Ok(x), Ok(y)) => (x, y),
            _ => return Ok(()),
        };
        prop_assert!(ilo <= ihi);
        let between: usize = s.modes.iter().filter(|md| md.value >= lo && md.value < hi).map(|md| md.multiplicity).sum();
        prop_assert_eq!(ihi - ilo, between);
    }

    #[test]
    fn constant_warping_separates_exactly(c in 0.3f64..3.0, len in 1.0f64..6.0, m in 1usize..4) {
        let opts = SpectralOptions { k_max: 3, modes_per_k: 5, grid: 600, bc: BoundaryCondition::Neumann };
        let s = spectral::warped_interval_spectrum(&|_| c, (0.0, len), m, &opts).unwrap();
        // Cell-centred Neumann eigenvalues of the second difference are known in closed form.
        let dt = len / 600.0;
        for md in &s.modes {
            let radial = (2.0 / dt * (md.radial as f64 * std::f64::consts::PI / 1200.0).sin()).powi(2);
            let fiber = spectral::sphere_eigenvalue(m, md.degree) / (c * c);
            assert_relative_eq!(md.value, radial + fiber, epsilon = 1e-9, max_relative = 1e-10);
            prop_assert_eq!(md.multiplicity, spectral::harmonic_multiplicity(m, md.degree));
        }
    }
}
