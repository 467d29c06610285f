use std::f64::consts::PI;

use graphon_spde::dynamics::{apply_nonlocal, Interaction, NonlocalOperator};
use graphon_spde::experiments::fit_rate;
use graphon_spde::grid::{l2_distance, GridFunction};
use graphon_spde::kernels::{kernel_bounds, project_kernel, Graphon, KernelMatrix};
use graphon_spde::noise::{psi, sample_increments, QWienerSpec};
use proptest::prelude::*;

fn grid_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

fn pow2(lo: u32, hi: u32) -> impl Strategy<Value = usize> {
    (lo..=hi).prop_map(|k| 1usize << k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn band_matrix_is_symmetric_circulant_with_exact_row_mass(r in 0.01..0.49f64, n in pow2(1, 6)) {
        let k = project_kernel(&Graphon::band(r).unwrap(), n, 1e-12).unwrap();
        let h = 1.0 / n as f64;
        for i in 0..n {
            let mass: f64 = k.row(i).iter().sum::<f64>() * h;
            prop_assert!((mass - 2.0 * r).abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(k.get(i, j), k.get(j, i));
                prop_assert_eq!(k.get(i, j), k.get((i + 1) % n, (j + 1) % n));
                prop_assert!((0.0..=1.0).contains(&k.get(i, j)));
            }
        }
    }

    #[test]
    fn nonlocal_term_is_bounded_and_lipschitz(
        r in 0.05..0.45f64,
        (u, v) in pow2(1, 6).prop_flat_map(|n| (grid_values(n), grid_values(n))),
    ) {
        let n = u.len();
        let band = Graphon::band(r).unwrap();
        let k = project_kernel(&band, n, 1e-12).unwrap();
        let s = Interaction::kuramoto_sine();
        let (k1, k2) = kernel_bounds(&band, n).unwrap();
        let u = GridFunction::new(u).unwrap();
        let v = GridFunction::new(v).unwrap();
        let nu = apply_nonlocal(&k, &s, &u).unwrap();
        let nv = apply_nonlocal(&k, &s, &v).unwrap();
        // |N_i| ≤ A_S ‖K‖_∞ h Σ_j 1
        prop_assert!(nu.values().iter().all(|x| x.abs() <= s.bound() + 1e-12));
        let lip = 2f64.sqrt() * s.lipschitz() * (k1 + k2).sqrt();
        let lhs = l2_distance(&nu, &nv).unwrap();
        prop_assert!(lhs <= lip * l2_distance(&u, &v).unwrap() + 1e-12);
    }

    #[test]
    fn fft_and_dense_paths_agree(r in 0.05..0.45f64, u in pow2(1, 7).prop_flat_map(grid_values)) {
        let n = u.len();
        let k = project_kernel(&Graphon::band(r).unwrap(), n, 1e-12).unwrap();
        prop_assume!(k.is_circulant());
        let s = Interaction::kuramoto_sine();
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        let mut fft = NonlocalOperator::new(&k, &s);
        prop_assert!(n < 4 || fft.uses_fft());
        fft.apply(&u, &mut a).unwrap();
        NonlocalOperator::dense(&k, &s).apply(&u, &mut b).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_interaction_is_odd_and_shift_invariant(u in pow2(1, 5).prop_flat_map(grid_values), c in -5.0..5.0f64) {
        let n = u.len();
        let k = KernelMatrix::from_coeffs(n, vec![1.0; n * n], false).unwrap();
        let s = Interaction::kuramoto_sine();
        let g = GridFunction::new(u.clone()).unwrap();
        let shifted = GridFunction::new(u.iter().map(|x| x + c).collect()).unwrap();
        let a = apply_nonlocal(&k, &s, &g).unwrap();
        let b = apply_nonlocal(&k, &s, &shifted).unwrap();
        // antisymmetry of sin(2π(u_i − u_j)) under a symmetric kernel: Σ_i N_i = 0
        prop_assert!(a.values().iter().sum::<f64>().abs() < 1e-10);
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + c.abs()) * 2.0 * PI);
        }
    }

    #[test]
    fn coarsening_is_a_contraction_and_inverts_refinement(
        u in pow2(2, 7).prop_flat_map(grid_values),
        drop in 1u32..=2,
    ) {
        let n = u.len();
        let g = GridFunction::new(u).unwrap();
        let coarse = g.coarsen(n >> drop).unwrap();
        prop_assert!(coarse.l2_norm() <= g.l2_norm() + 1e-12);
        let back = coarse.refine(n).unwrap().coarsen(n >> drop).unwrap();
        for (x, y) in back.values().iter().zip(coarse.values()) {
            prop_assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn noise_coarsenings_nest(seed in any::<u64>(), s in 1.2..4.0f64) {
        let spec = QWienerSpec::periodic(s, 16).unwrap();
        let path = sample_increments(&spec, 64, 0.01, 8, seed).unwrap();
        let direct = path.coarsen(8, 0.04).unwrap();
        let nested = path.coarsen(32, 0.02).unwrap().coarsen(8, 0.04).unwrap();
        for (x, y) in direct.as_slice().iter().zip(nested.as_slice()) {
            prop_assert!((x - y).abs() < 1e-14);
        }
        // projected increments keep zero spatial mean for mean-free modes
        for w in direct.increments() {
            prop_assert!(w.values().iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn psi_is_nonincreasing(s in 1.1..5.0f64, m in 1usize..2000) {
        let spec = QWienerSpec::periodic(s, m).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..12 {
            let p = psi(&spec, 1 << k);
            prop_assert!(p <= prev * (1.0 + 1e-12));
            prev = p;
        }
    }

    #[test]
    fn fit_recovers_power_laws(slope in -4.0..4.0f64, c in 0.1..10.0f64, k in 3usize..8) {
        let pts: Vec<(f64, f64)> = (0..k).map(|i| {
            let x = 2f64.powi(i as i32 + 2);
            (x, c * x.powf(slope))
        }).collect();
        let fit = fit_rate(&pts).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }
}
