//! Library results against independently computed references.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, Matrix3, Matrix4, SymmetricEigen};
use nlcoupler::circuit::{
    build_mode_system, build_node_matrices, effective_capacitances, mode_transform, CircuitParams,
    A, B, CHARGING_GHZ_FF, R, S,
};
use nlcoupler::classical::solve_normal_modes;
use nlcoupler::effective::{
    build_two_site, couplings_for, hopping_zero, EffectiveCouplings, EffectiveOptions, TermFlags,
};
use nlcoupler::hamiltonian::{
    build_full_hamiltonian, diagonalize, eliminate_rigid_mode, full_spectrum, CosineOrder,
    FockConfig,
};

const SBA: [usize; 3] = [S, B, A];

fn block(m: &Matrix4<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[(SBA[i], SBA[j])])
}

fn devices() -> Vec<CircuitParams> {
    let f = CircuitParams::fitted_device();
    vec![
        f,
        CircuitParams::nominal_device(),
        CircuitParams { c1g: 70.0, c2g: 70.0, ..f },
        CircuitParams { c_c: 0.0, ..f },
        CircuitParams { c: 25.0, c1g: 40.0, c2g: 120.0, c_c: 5.0, ..f },
    ]
}

#[test]
fn charge_weights_invert_mode_capacitance() {
    for p in devices() {
        let ms = build_mode_system(&p).unwrap();
        let c_prime = mode_transform().transpose() * build_node_matrices(&p).unwrap().cap;
        let c_prime = c_prime * mode_transform();
        let inv = c_prime.try_inverse().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(ms.inv_cap[(i, j)], inv[(i, j)], epsilon = 1e-14, max_relative = 1e-10);
            }
        }
        assert_relative_eq!(ms.det_cprime, c_prime.determinant(), max_relative = 1e-10);
        assert_relative_eq!(ms.cap_mode, c_prime, epsilon = 1e-12);
    }
}

#[test]
fn closed_form_capacitances_match_numeric_inverse() {
    for p in devices() {
        let e = effective_capacitances(&p);
        let c_prime = mode_transform().transpose() * build_node_matrices(&p).unwrap().cap * mode_transform();
        let inv = c_prime.try_inverse().unwrap();
        assert_relative_eq!(1.0 / e.c_tilde, inv[(A, A)], max_relative = 1e-10);
        assert_relative_eq!(1.0 / e.c_tilde_s, inv[(S, S)], max_relative = 1e-10);
        assert_relative_eq!(1.0 / e.c_tilde_r, inv[(R, R)], max_relative = 1e-10);
        assert_relative_eq!(e.ab_weight, inv[(A, B)], epsilon = 1e-14, max_relative = 1e-10);
        let abs = if e.c_tilde_abs.is_infinite() { 0.0 } else { 1.0 / e.c_tilde_abs };
        let abr = if e.c_tilde_abr.is_infinite() { 0.0 } else { 1.0 / e.c_tilde_abr };
        assert_relative_eq!(abs, inv[(S, A)], epsilon = 1e-14, max_relative = 1e-10);
        assert_relative_eq!(abr, inv[(R, A)], epsilon = 1e-14, max_relative = 1e-10);
    }
}

#[test]
fn rigid_elimination_is_a_schur_complement() {
    for p in devices() {
        let ms = build_mode_system(&p).unwrap();
        let red = eliminate_rigid_mode(&ms);
        // Schur complement of the R row of the charge weights, computed from C'.
        let inv = ms.cap_mode.try_inverse().unwrap();
        let schur = Matrix3::from_fn(|i, j| {
            let (a, b) = (SBA[i], SBA[j]);
            inv[(a, b)] - inv[(a, R)] * inv[(R, b)] / inv[(R, R)]
        });
        assert_relative_eq!(block(&red.inv_cap), schur, epsilon = 1e-14, max_relative = 1e-10);
        // Equivalently the inverse of C' with the rigid row and column removed.
        assert_relative_eq!(
            block(&red.inv_cap),
            block(&ms.cap_mode).try_inverse().unwrap(),
            epsilon = 1e-14,
            max_relative = 1e-10
        );
        assert_eq!(red.inv_cap.row(R).amax(), 0.0);
        assert_relative_eq!(red.e_c, CHARGING_GHZ_FF * red.inv_cap[(A, A)]);
    }
}

#[test]
fn normal_modes_solve_the_determinant_equation() {
    for p in devices() {
        for phi3 in [0.0, 0.2, 0.4] {
            let m = build_node_matrices(&p.with_phi3(phi3)).unwrap();
            let modes = solve_normal_modes(&m).unwrap();
            let k = m.ind_inv * (8.0 * CHARGING_GHZ_FF);
            for (f, v) in modes.frequencies.iter().zip(&modes.vectors) {
                let d = (k - m.cap * (f * f)).determinant();
                let scale = k.norm().powi(4).max((m.cap * (f * f)).norm().powi(4));
                assert!(d.abs() <= 1e-10 * scale, "det {d} at f = {f}");
                assert_relative_eq!((v.transpose() * m.cap * v)[(0, 0)], 1.0, max_relative = 1e-10);
            }
        }
    }
}

#[test]
fn harmonic_limit_matches_mode_basis_normal_modes() {
    let p = CircuitParams::fitted_device().with_phi3(0.1);
    let ms = eliminate_rigid_mode(&build_mode_system(&p).unwrap());
    let t = mode_transform();
    let stiff = t.transpose() * build_node_matrices(&p).unwrap().ind_inv * t;
    let dyn_m = block(&ms.inv_cap) * block(&stiff) * (8.0 * CHARGING_GHZ_FF);
    // M·L is similar to the symmetric M^½ L M^½.
    let m_half = {
        let e = SymmetricEigen::new(block(&ms.inv_cap));
        e.eigenvectors * Matrix3::from_diagonal(&e.eigenvalues.map(f64::sqrt)) * e.eigenvectors.transpose()
    };
    let sym = m_half * block(&stiff) * m_half * (8.0 * CHARGING_GHZ_FF);
    let mut expected: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().map(|x| x.sqrt()).collect();
    expected.sort_by(f64::total_cmp);
    assert_relative_eq!(dyn_m.trace(), expected.iter().map(|f| f * f).sum::<f64>(), max_relative = 1e-10);

    let cfg = FockConfig {
        linear_coupler: true,
        sloshing_stiffness: 1.0,
        ..FockConfig::uniform(12).with_order(CosineOrder::Taylor(2))
    };
    let s = diagonalize(&build_full_hamiltonian(&ms, &cfg).unwrap(), 8).unwrap();
    // Harmonic ladder Σ nᵢ fᵢ with at most three quanta.
    let mut ladder = Vec::new();
    for n0 in 0..=3 {
        for n1 in 0..=(3 - n0) {
            for n2 in 0..=(3 - n0 - n1) {
                ladder.push(n0 as f64 * expected[0] + n1 as f64 * expected[1] + n2 as f64 * expected[2]);
            }
        }
    }
    ladder.sort_by(f64::total_cmp);
    for (level, f) in s.levels.iter().zip(&ladder) {
        assert!((level.energy - f).abs() < 1e-6, "{} vs {f}", level.energy);
    }
}

#[test]
fn filter_point_matches_closed_form() {
    for p in [CircuitParams::fitted_device(), CircuitParams::nominal_device()] {
        let ms = build_mode_system(&p).unwrap();
        let m = block(&ms.cap_mode).try_inverse().unwrap();
        // Indices in the S, B, A block.
        let r = m[(1, 2)] / m[(2, 2)];
        let e1 = p.ej1_max;
        // j_cap = j_ind  ⇔  E_Jc = 4 r (E_J1 + E_Jc/4).
        let target = 4.0 * e1 * r / (1.0 - r);
        let cos2 = (target * target - p.ej_c_min.powi(2)) / (p.ej_c_max.powi(2) - p.ej_c_min.powi(2));
        let expected = cos2.sqrt().acos() / std::f64::consts::PI;
        let found = hopping_zero(&p, &EffectiveOptions::bare(), 0.0, 0.5).unwrap().unwrap();
        assert_relative_eq!(found, expected, epsilon = 1e-8);
    }
}

fn brute_rotating_wave(ec: &EffectiveCouplings, dim: usize) -> DMatrix<f64> {
    let idx = |a: usize, b: usize| a * dim + b;
    let mut h = DMatrix::zeros(dim * dim, dim * dim);
    let add = |h: &mut DMatrix<f64>, from: (usize, usize), to: (usize, usize), v: f64| {
        h[(idx(to.0, to.1), idx(from.0, from.1))] += v;
        h[(idx(from.0, from.1), idx(to.0, to.1))] += v;
    };
    for a in 0..dim {
        for b in 0..dim {
            let (fa, fb) = (a as f64, b as f64);
            let diag = ec.omega1 * fa + ec.omega2 * fb - ec.u * (fa * (fa - 1.0) + fb * (fb - 1.0))
                + ec.v * fa * fb;
            h[(idx(a, b), idx(a, b))] += diag;
            if a + 1 < dim && b >= 1 {
                let hop = ((a + 1) as f64 * fb).sqrt();
                // Hopping, plus correlated hopping from a†n_a b and (b†n_b a)†.
                let corr = ec.v / 6.0 * hop * (fa + (fb - 1.0));
                add(&mut h, (a, b), (a + 1, b - 1), ec.j_total * hop + corr);
            }
            if a + 2 < dim && b >= 2 {
                let amp = ((a + 1) as f64 * (a + 2) as f64 * fb * (fb - 1.0)).sqrt();
                add(&mut h, (a, b), (a + 2, b - 2), ec.v / 4.0 * amp);
            }
        }
    }
    h
}

#[test]
fn two_site_matches_elementwise_construction() {
    for p in [CircuitParams::nominal_device(), CircuitParams::nominal_device().with_phi3(0.2)] {
        let ec = couplings_for(&p, &EffectiveOptions::default()).unwrap();
        for dim in [2, 3, 5] {
            let h = build_two_site(&ec, dim, TermFlags::rotating_wave()).unwrap();
            let brute = brute_rotating_wave(&ec, dim);
            assert_relative_eq!(h.matrix, brute, epsilon = 1e-12);
        }
    }
}

#[test]
fn exchange_of_transmons_is_a_symmetry() {
    let p = CircuitParams { ej1_max: 24.0, ej2_max: 21.5, phi1: 0.05, phi2: 0.12, ..CircuitParams::fitted_device() };
    let q = CircuitParams { ej1_max: p.ej2_max, ej2_max: p.ej1_max, phi1: p.phi2, phi2: p.phi1, ..p };
    let opts = EffectiveOptions::default();
    let (a, b) = (couplings_for(&p, &opts).unwrap(), couplings_for(&q, &opts).unwrap());
    assert_relative_eq!(a.omega1, b.omega2, max_relative = 1e-12);
    assert_relative_eq!(a.omega2, b.omega1, max_relative = 1e-12);
    assert_relative_eq!(a.j_total, b.j_total, max_relative = 1e-12);
    assert_relative_eq!(a.v, b.v, max_relative = 1e-12);

    let cfg = FockConfig::uniform(6);
    let (sa, sb) = (full_spectrum(&p, &cfg, 6).unwrap(), full_spectrum(&q, &cfg, 6).unwrap());
    for (x, y) in sa.levels.iter().zip(&sb.levels) {
        assert!((x.energy - y.energy).abs() < 1e-9, "{} vs {}", x.energy, y.energy);
    }
}

#[test]
fn symmetric_islands_without_coupler_decouple() {
    let p = CircuitParams {
        c_c: 0.0,
        c1g: 70.0,
        c2g: 70.0,
        ej_c_max: 1e-12,
        ej_c_min: 0.0,
        ..CircuitParams::fitted_device()
    };
    let c = couplings_for(&p, &EffectiveOptions::bare()).unwrap();
    assert_eq!(c.j_cap, 0.0);
    assert!(c.j_ind.abs() < 1e-12 && c.v.abs() < 1e-12);
    assert_relative_eq!(c.omega1, c.omega2);
}
