//! Invariants over randomised inputs.

use nalgebra::{Matrix3, Vector3};
use nlcoupler::calibration::{
    calibrate_crosstalk, extract_sweetspot, residual_crosstalk, simulate_observations,
    transmon_arch, CrosstalkMatrix,
};
use nlcoupler::circuit::{build_mode_system, build_node_matrices, squid_energy, CircuitParams};
use nlcoupler::classical::{eigen_residual, solve_normal_modes};
use nlcoupler::effective::{build_two_site, couplings_for, xxz_reduction, EffectiveOptions, TermFlags};
use nlcoupler::hamiltonian::{build_full_hamiltonian, eliminate_rigid_mode, FockConfig};
use nlcoupler::spectroscopy::{crossing_branches, fit_branches};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = CircuitParams> {
    let base = CircuitParams::fitted_device();
    (
        (0.7..1.3f64, 0.7..1.3f64, 0.7..1.3f64, 0.7..1.3f64),
        (0.7..1.3f64, 0.7..1.3f64, 0.7..1.3f64, 0.7..1.3f64),
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
    )
        .prop_map(move |((a, b, c, d), (e, f, g, h), (x, y, z))| CircuitParams {
            ej1_max: base.ej1_max * a,
            ej2_max: base.ej2_max * b,
            ej_c_max: base.ej_c_max * c,
            ej_c_min: base.ej_c_min * d,
            c: base.c * e,
            c1g: base.c1g * f,
            c2g: base.c2g * g,
            c_c: base.c_c * h,
            phi1: 0.3 * x,
            phi2: 0.3 * y,
            phi3: z,
            ..base
        })
}

proptest! {
    #[test]
    fn squid_is_even_periodic_and_falls_to_the_minimum(
        e_max in 0.1..50.0f64, frac in 0.0..1.0f64, phi in -3.0..3.0f64, k in -4i32..4
    ) {
        let e_min = e_max * frac;
        let e = squid_energy(e_max, e_min, phi).unwrap();
        prop_assert!((e - squid_energy(e_max, e_min, phi + k as f64).unwrap()).abs() <= 1e-12 * e_max);
        prop_assert!((e - squid_energy(e_max, e_min, -phi).unwrap()).abs() <= 1e-12 * e_max);
        prop_assert!(e >= e_min - 1e-12 && e <= e_max + 1e-12);
        let x = phi.rem_euclid(1.0).min(1.0 - phi.rem_euclid(1.0));
        let y = (x + 0.01).min(0.5);
        prop_assert!(squid_energy(e_max, e_min, y).unwrap() <= squid_energy(e_max, e_min, x).unwrap() + 1e-12);
    }

    #[test]
    fn node_matrices_are_well_formed(p in params()) {
        let m = build_node_matrices(&p).unwrap();
        prop_assert!(m.cap.cholesky().is_some());
        prop_assert_eq!(m.cap, m.cap.transpose());
        for i in 0..4 {
            prop_assert!(m.ind_inv.row(i).sum().abs() <= 1e-12 * m.ind_inv.amax());
        }
    }

    #[test]
    fn normal_modes_are_capacitance_orthonormal(p in params()) {
        let m = build_node_matrices(&p).unwrap();
        let modes = solve_normal_modes(&m).unwrap();
        prop_assert_eq!(modes.frequencies.iter().filter(|&&f| f == 0.0).count(), 1);
        for i in 0..4 {
            prop_assert!(eigen_residual(&m, modes.frequencies[i], &modes.vectors[i]) < 1e-9);
            for j in 0..4 {
                let g = (modes.vectors[i].transpose() * m.cap * modes.vectors[j])[(0, 0)];
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - want).abs() < 1e-9, "gram[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn mode_system_is_flux_periodic(p in params(), k in -3i32..3) {
        let q = CircuitParams { phi1: p.phi1 + k as f64, phi2: p.phi2 - k as f64, phi3: p.phi3 + k as f64, ..p };
        let (a, b) = (build_mode_system(&p).unwrap(), build_mode_system(&q).unwrap());
        for (x, y) in [(a.ej1, b.ej1), (a.ej2, b.ej2), (a.ej_c, b.ej_c), (a.e_c, b.e_c)] {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
        prop_assert_eq!(a.inv_cap, b.inv_cap);
    }

    #[test]
    fn couplings_keep_their_signs(p in params()) {
        let c = couplings_for(&p, &EffectiveOptions::default()).unwrap();
        prop_assert!(c.v < 0.0);
        prop_assert!(c.j_ind > 0.0);
        prop_assert!(c.u > 0.0 && c.omega1 > 0.0 && c.omega2 > 0.0);
    }

    #[test]
    fn rotating_wave_model_conserves_excitations(p in params(), dim in 2usize..6) {
        let c = couplings_for(&p, &EffectiveOptions::default()).unwrap();
        let h = build_two_site(&c, dim, TermFlags::rotating_wave()).unwrap();
        for a in 0..dim {
            for b in 0..dim {
                for x in 0..dim {
                    for y in 0..dim {
                        if a + b != x + y {
                            prop_assert_eq!(h.matrix[(h.index(a, b), h.index(x, y))], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn xxz_block_equals_two_level_truncation(p in params()) {
        let c = couplings_for(&p, &EffectiveOptions::default()).unwrap();
        let h = build_two_site(&c, 2, TermFlags::rotating_wave()).unwrap();
        let x = xxz_reduction(&c);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((x.matrix[(i, j)] - h.matrix[(i, j)]).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn full_hamiltonian_is_symmetric(p in params()) {
        let ms = eliminate_rigid_mode(&build_mode_system(&p).unwrap());
        let h = build_full_hamiltonian(&ms, &FockConfig::uniform(4)).unwrap();
        prop_assert!(h.hermiticity_error() <= 1e-12);
    }

    #[test]
    fn crossing_fit_recovers_the_gap(
        j in 0.005..0.1f64, w2 in 5.0..7.0f64, slope in -3.0..-0.5f64, curv in -2.0..2.0f64
    ) {
        let phi: Vec<f64> = (0..31).map(|k| -0.05 + k as f64 * (0.1 / 30.0)).collect();
        let (lower, upper): (Vec<f64>, Vec<f64>) = phi
            .iter()
            .map(|&x| crossing_branches(w2 + slope * x + curv * x * x, w2, j))
            .unzip();
        let fit = fit_branches(&phi, &lower, &upper).unwrap();
        prop_assert!((fit.j - j).abs() <= 1e-6 * j.max(0.01), "j {} vs {}", fit.j, j);
        prop_assert!((fit.omega2 - w2).abs() <= 1e-6);
    }

    #[test]
    fn crosstalk_round_trip(off in prop::array::uniform6(-0.2..0.2f64), o in prop::array::uniform3(-0.4..0.4f64)) {
        let m = Matrix3::new(1.0, off[0], off[1], off[2], 1.0, off[3], off[4], off[5], 1.0);
        let truth = CrosstalkMatrix { m, offsets: Vector3::from(o) };
        let obs = simulate_observations(&truth, &[-0.3, 0.1, 0.4]).unwrap();
        let rec = calibrate_crosstalk(&obs).unwrap();
        prop_assert!((rec.m - m).amax() < 1e-9);
        prop_assert!((rec.offsets - truth.offsets).amax() < 1e-9);
        prop_assert!(residual_crosstalk(&truth.through(&rec).unwrap()) < 1e-9);
    }

    #[test]
    fn sweetspot_is_recovered(ej in 15.0..30.0f64, ec in 0.15..0.35f64, off in -0.2..0.2f64) {
        let samples: Vec<(f64, f64)> = (0..21)
            .map(|k| {
                let x = off - 0.15 + 0.3 * k as f64 / 20.0 + 0.004;
                (x, transmon_arch(ej, ec, off, x))
            })
            .collect();
        let fit = extract_sweetspot(&samples).unwrap();
        prop_assert!((fit.phi_off - off).abs() < 1e-6, "{} vs {}", fit.phi_off, off);
    }
}
