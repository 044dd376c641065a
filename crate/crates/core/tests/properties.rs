use proptest::prelude::*;

use rwre_core::env::{decompose, validate};
use rwre_core::generators::{generate, GeneratorSpec, SymmetricPart};
use rwre_core::lattice::{dot, Torus};
use rwre_core::resolvent::{build_operators, corrector_diffusivity};
use rwre_core::spectral::{apply_riesz, helmholtz_stationary, project_mean_zero, TorusFft};
use rwre_core::Environment;

fn env(seed: u64, side: usize, amplitude: f64) -> Environment {
    let spec = GeneratorSpec::stream(2, side, seed, amplitude)
        .with_symmetric(SymmetricPart::Conductance { min: 0.5, max: 2.0 });
    generate(&spec).unwrap().env
}

fn field(values: &[f64]) -> Vec<f64> {
    project_mean_zero(values).0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_environments_validate(seed in 0u64..10_000, amp in 0.05f64..4.0) {
        let e = env(seed, 8, amp);
        let r = validate(&e);
        prop_assert!(r.passed());
        prop_assert_eq!(r.get("bistochasticity").unwrap().residual, 0.0);
    }

    #[test]
    fn a_is_skew_and_d_t_are_nonnegative(
        seed in 0u64..10_000,
        f in prop::collection::vec(-1.0f64..1.0, 64),
        g in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let ops = build_operators(&decompose(&env(seed, 8, 1.0))).unwrap();
        let (f, g) = (field(&f), field(&g));
        prop_assert!((dot(&f, &ops.a(&g)) + dot(&ops.a(&f), &g)).abs() < 1e-12);
        prop_assert!(dot(&f, &ops.d(&f)) >= -1e-12);
        prop_assert!(dot(&f, &ops.t(&f)) >= -1e-12);
        let lf = ops.l(&f);
        let adj = ops.l_adjoint(&g);
        prop_assert!((dot(&g, &lf) - dot(&adj, &f)).abs() < 1e-12);
    }

    #[test]
    fn riesz_is_a_contraction_with_unit_sum(f in prop::collection::vec(-1.0f64..1.0, 64)) {
        let torus = Torus::new(2, 8).unwrap();
        let fft = TorusFft::new(&torus);
        let f = field(&f);
        let mut acc = vec![0.0; f.len()];
        for k in torus.directions() {
            let g = apply_riesz(&fft, &f, k);
            prop_assert!(dot(&g, &g) <= dot(&f, &f) * (1.0 + 1e-12));
            for (a, h) in acc.iter_mut().zip(apply_riesz(&fft, &g, k.opposite())) {
                *a += 0.5 * h;
            }
        }
        for (a, b) in acc.iter().zip(&f) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_stream_tensor_reproduces_drift(seed in 0u64..10_000) {
        let dec = decompose(&env(seed, 16, 1.0));
        let h = helmholtz_stationary(&dec).unwrap();
        prop_assert!(h.curl_residual(&dec.v) < 1e-12);
    }

    #[test]
    fn binary_round_trip_is_exact(seed in 0u64..10_000) {
        let e = env(seed, 8, 0.7);
        let mut buf = Vec::new();
        e.write_binary(&mut buf).unwrap();
        let back = Environment::read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(back.rates(), e.rates());
        prop_assert_eq!(back.s_star(), e.s_star());
    }

    #[test]
    fn diffusivity_respects_lower_bound(seed in 0u64..10_000, amp in 0.1f64..3.0) {
        let e = env(seed, 8, amp);
        let dec = decompose(&e);
        let s = corrector_diffusivity(&build_operators(&dec).unwrap(), &dec).unwrap().sigma2;
        let lo = 2.0 * e.s_star();
        // Smallest eigenvalue of the symmetric 2x2 matrix.
        let tr = s[0][0] + s[1][1];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let min_eig = tr / 2.0 - ((tr / 2.0).powi(2) - det).max(0.0).sqrt();
        prop_assert!(min_eig >= lo - 1e-9);
        prop_assert!((s[0][1] - s[1][0]).abs() < 1e-14);
    }
}
