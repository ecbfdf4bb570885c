//! Reduced models: the coupling formulas, the extended two-site Bose-Hubbard
//! Hamiltonian and its XXZ qubit limit.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_mode_system, CircuitParams, ModeSystem, A, B, CHARGING_GHZ_FF, S};
use crate::error::{Error, Result};
use crate::hamiltonian::eliminate_rigid_mode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveOptions {
    /// Apply J → J − V/6 from correlated hopping.
    pub v_correction: bool,
    /// Add the exchange mediated by virtual sloshing-mode excitations.
    pub sloshing_exchange: bool,
    /// Chemical potential μ = ω_q − ω_d, GHz.
    pub mu: f64,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        Self { v_correction: true, sloshing_exchange: true, mu: 0.0 }
    }
}

impl EffectiveOptions {
    /// Capacitive and inductive hopping only.
    pub fn bare() -> Self {
        Self { v_correction: false, sloshing_exchange: false, mu: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveCouplings {
    pub j_total: f64,
    pub j_cap: f64,
    pub j_ind: f64,
    /// Sloshing-mediated exchange, zero when disabled.
    pub j_slosh: f64,
    pub v: f64,
    pub u: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub mu: f64,
    pub e_c: f64,
    /// Josephson energy entering J (geometric mean of the two transmons).
    pub e_j: f64,
    /// C_eff such that J_C = √(8E_JE_C)/2 · C_c/(4C_eff), fF.
    pub c_eff: Option<f64>,
    /// Transmons are not resonant; J uses the geometric-mean E_J.
    pub off_resonance: bool,
    /// |J| exceeds ω/20 where the hopping form is questionable.
    pub rwa_warning: bool,
}

pub fn effective_couplings(ms: &ModeSystem, opts: &EffectiveOptions) -> Result<EffectiveCouplings> {
    if !ms.rigid_eliminated {
        return Err(Error::Precondition("rigid mode must be eliminated first".into()));
    }
    let m = &ms.inv_cap;
    let ec = ms.e_c;
    let e_j = (ms.ej1 * ms.ej2).sqrt();
    let off_resonance = (ms.ej1 - ms.ej2).abs() > 1e-9 * ms.ej1.max(ms.ej2);
    let plasma = (8.0 * e_j * ec).sqrt();
    let ratio = m[(A, B)] / m[(A, A)];
    let j_cap = plasma / 2.0 * ratio;
    let j_ind = plasma / 2.0 * ms.ej_c / (4.0 * e_j);
    let v = -ms.ej_c * ec / (8.0 * e_j);
    let omega1 = (8.0 * ms.ej1 * ec).sqrt() - ec;
    let omega2 = (8.0 * ms.ej2 * ec).sqrt() - ec;
    let j_slosh = if opts.sloshing_exchange {
        sloshing_exchange(ms, e_j, 0.5 * (omega1 + omega2))
    } else {
        0.0
    };
    let mut j_total = j_cap - j_ind + j_slosh;
    if opts.v_correction {
        j_total -= v / 6.0;
    }
    let c_eff = (ratio != 0.0).then(|| ms_c_c(ms) / (4.0 * ratio));
    Ok(EffectiveCouplings {
        j_total,
        j_cap,
        j_ind,
        j_slosh,
        v,
        u: ec / 2.0,
        omega1,
        omega2,
        mu: opts.mu,
        e_c: ec,
        e_j,
        c_eff,
        off_resonance,
        rwa_warning: j_total.abs() > 0.5 * (omega1 + omega2) / 20.0,
    })
}

/// Coupling capacitance recovered from C': the (A, B) block of Tᵀ C T is −C_c/4.
fn ms_c_c(ms: &ModeSystem) -> f64 {
    -4.0 * ms.cap_mode[(A, B)]
}

/// Second-order exchange through the sloshing oscillator, rotating and
/// counter-rotating paths.
fn sloshing_exchange(ms: &ModeSystem, e_j: f64, omega: f64) -> f64 {
    let ej_s = ms.ej_c.max(ms.ej_c_min);
    if ej_s <= 0.0 {
        return 0.0;
    }
    let m = &ms.inv_cap;
    let ec = ms.e_c;
    let ec_s = CHARGING_GHZ_FF * m[(S, S)];
    let zpf = |ec: f64, ej: f64| ((2.0 * ec / ej).powf(0.25), (ej / (32.0 * ec)).powf(0.25));
    let (z_a, n_a) = zpf(ec, e_j);
    let (z_s, n_s) = zpf(ec_s, ej_s);
    let omega_s = (8.0 * ej_s * ec_s).sqrt() - ec_s;
    let k8 = 8.0 * CHARGING_GHZ_FF;
    let ind = 0.5 * ms.ej_c * z_a * z_s;
    let g_as = k8 * m[(A, S)] * n_a * n_s - ind;
    let gp_as = -k8 * m[(A, S)] * n_a * n_s - ind;
    let g_bs = k8 * m[(B, S)] * n_a * n_s + ind;
    let gp_bs = -k8 * m[(B, S)] * n_a * n_s + ind;
    g_as * g_bs / (omega - omega_s) - gp_as * gp_bs / (omega + omega_s)
}

/// Circuit parameters → couplings, eliminating the rigid mode on the way.
pub fn couplings_for(p: &CircuitParams, opts: &EffectiveOptions) -> Result<EffectiveCouplings> {
    effective_couplings(&eliminate_rigid_mode(&build_mode_system(p)?), opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub phi3: f64,
    pub j_cap_mhz: f64,
    pub j_ind_mhz: f64,
    pub j_total_mhz: f64,
    pub v_mhz: f64,
    pub u_mhz: f64,
    pub omega1_ghz: f64,
    pub omega2_ghz: f64,
}

pub fn coupling_sweep(
    p: &CircuitParams,
    phi3: &[f64],
    opts: &EffectiveOptions,
) -> Result<Vec<CouplingRow>> {
    phi3.par_iter()
        .map(|&x| {
            let c = couplings_for(&p.with_phi3(x), opts)?;
            Ok(CouplingRow {
                phi3: x,
                j_cap_mhz: c.j_cap * 1e3,
                j_ind_mhz: c.j_ind * 1e3,
                j_total_mhz: c.j_total * 1e3,
                v_mhz: c.v * 1e3,
                u_mhz: c.u * 1e3,
                omega1_ghz: c.omega1,
                omega2_ghz: c.omega2,
            })
        })
        .collect()
}

/// First sign change of j_total on [lo, hi], refined by bisection to 1e-10.
pub fn hopping_zero(
    p: &CircuitParams,
    opts: &EffectiveOptions,
    lo: f64,
    hi: f64,
) -> Result<Option<f64>> {
    let j = |x: f64| couplings_for(&p.with_phi3(x), opts).map(|c| c.j_total);
    const STEPS: usize = 400;
    let mut a = lo;
    let mut ja = j(a)?;
    for k in 1..=STEPS {
        let b = lo + (hi - lo) * k as f64 / STEPS as f64;
        let jb = j(b)?;
        if ja == 0.0 {
            return Ok(Some(a));
        }
        if ja.signum() != jb.signum() {
            let (mut l, mut r, mut jl) = (a, b, ja);
            while r - l > 1e-10 {
                let mid = 0.5 * (l + r);
                let jm = j(mid)?;
                if jm.signum() == jl.signum() {
                    l = mid;
                    jl = jm;
                } else {
                    r = mid;
                }
            }
            return Ok(Some(0.5 * (l + r)));
        }
        a = b;
        ja = jb;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TermFlags {
    pub hopping: bool,
    pub onsite_kerr: bool,
    pub cross_kerr: bool,
    pub correlated_hopping: bool,
    pub pair_tunnelling: bool,
    /// (V/4)(a + a†)²(b + b†)² in place of the three rotating-wave pieces.
    pub full_quartic: bool,
    pub chemical_potential: bool,
}

impl TermFlags {
    /// Hopping and on-site Kerr only: the V = 0 reference.
    pub fn hopping_reference() -> Self {
        Self { hopping: true, onsite_kerr: true, ..Self::default() }
    }

    /// Hopping, on-site Kerr and all rotating-wave nonlinear coupling terms.
    pub fn rotating_wave() -> Self {
        Self {
            hopping: true,
            onsite_kerr: true,
            cross_kerr: true,
            correlated_hopping: true,
            pair_tunnelling: true,
            ..Self::default()
        }
    }

    /// Hopping, on-site Kerr and the unexpanded quartic coupling.
    pub fn quartic() -> Self {
        Self { hopping: true, onsite_kerr: true, full_quartic: true, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteHamiltonian {
    pub dim: usize,
    /// Basis index n_a·dim + n_b.
    pub matrix: DMatrix<f64>,
    pub flags: TermFlags,
}

impl TwoSiteHamiltonian {
    pub fn index(&self, na: usize, nb: usize) -> usize {
        na * self.dim + nb
    }
}

pub fn build_two_site(
    ec: &EffectiveCouplings,
    dim: usize,
    flags: TermFlags,
) -> Result<TwoSiteHamiltonian> {
    if dim < 2 {
        return Err(Error::Config(format!("two-site dimension must be at least 2, got {dim}")));
    }
    if flags.full_quartic && (flags.cross_kerr || flags.correlated_hopping || flags.pair_tunnelling)
    {
        return Err(Error::Config(
            "full_quartic replaces cross_kerr, correlated_hopping and pair_tunnelling".into(),
        ));
    }
    let a = DMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 });
    let ad = a.transpose();
    let n = &ad * &a;
    let id = DMatrix::<f64>::identity(dim, dim);
    let kron = |x: &DMatrix<f64>, y: &DMatrix<f64>| x.kronecker(y);
    let (na, nb) = (kron(&n, &id), kron(&id, &n));
    let (aa, ab) = (kron(&a, &id), kron(&id, &a));
    let (aad, abd) = (aa.transpose(), ab.transpose());

    let mut w1 = ec.omega1;
    let mut w2 = ec.omega2;
    if flags.chemical_potential {
        let drive = 0.5 * (ec.omega1 + ec.omega2) - ec.mu;
        w1 -= drive;
        w2 -= drive;
    }
    let mut h = &na * w1 + &nb * w2;
    if flags.onsite_kerr {
        h -= (&aad * &aad * &aa * &aa + &abd * &abd * &ab * &ab) * ec.u;
    }
    if flags.hopping {
        h += (&aad * &ab + &abd * &aa) * ec.j_total;
    }
    if flags.cross_kerr {
        h += &na * &nb * ec.v;
    }
    if flags.correlated_hopping {
        let t = &aad * &na * &ab + &abd * &nb * &aa;
        h += (&t + t.transpose()) * (ec.v / 6.0);
    }
    if flags.pair_tunnelling {
        let t = &aad * &aad * &ab * &ab;
        h += (&t + t.transpose()) * (ec.v / 4.0);
    }
    if flags.full_quartic {
        let xa = &aa + &aad;
        let xb = &ab + &abd;
        h += &xa * &xa * &xb * &xb * (ec.v / 4.0);
    }
    let matrix = (&h + h.transpose()) * 0.5;
    Ok(TwoSiteHamiltonian { dim, matrix, flags })
}

/// Level energies of the two-site model used for the Kerr observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSiteLevels {
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub omega_11: f64,
}

impl TwoSiteLevels {
    /// (ω₁₁ − ω₋ − ω₊)/|J|.
    pub fn kerr_ratio(&self, j: f64) -> f64 {
        (self.omega_11 - self.omega_minus - self.omega_plus) / j.abs()
    }
}

/// Identifies ω±, ω₁₁ (relative to the ground state) by overlap with the
/// one-excitation span and with |11⟩.
pub fn two_site_levels(h: &TwoSiteHamiltonian) -> TwoSiteLevels {
    let eig = SymmetricEigen::new(h.matrix.clone());
    let dim = h.matrix.nrows();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let ground = eig.eigenvalues[order[0]];
    let (i10, i01, i11) = (h.index(1, 0), h.index(0, 1), h.index(1, 1));
    let weight = |k: usize, idx: &[usize]| -> f64 {
        idx.iter().map(|&r| eig.eigenvectors[(r, k)].powi(2)).sum()
    };
    let mut single: Vec<usize> = order.clone();
    single.sort_by(|&x, &y| weight(y, &[i10, i01]).total_cmp(&weight(x, &[i10, i01])));
    let (p, q) = (single[0], single[1]);
    let in_phase = |k: usize| (eig.eigenvectors[(i10, k)] + eig.eigenvectors[(i01, k)]).powi(2);
    let (im, ip) = if in_phase(p) >= in_phase(q) { (p, q) } else { (q, p) };
    let k11 = *order
        .iter()
        .max_by(|&&x, &&y| weight(x, &[i11]).total_cmp(&weight(y, &[i11])))
        .expect("non-empty");
    TwoSiteLevels {
        omega_plus: eig.eigenvalues[ip] - ground,
        omega_minus: eig.eigenvalues[im] - ground,
        omega_11: eig.eigenvalues[k11] - ground,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSiteKerrPoint {
    pub phi3: f64,
    pub j: f64,
    pub v: f64,
    /// Ratio with V = 0.
    pub reference: f64,
    /// Ratio with the quartic coupling.
    pub full: f64,
}

/// (ω₁₁ − ω₋ − ω₊)/|J| of the two-site model along a coupler sweep.
pub fn two_site_kerr_curve(
    p: &CircuitParams,
    phi3: &[f64],
    dim: usize,
    opts: &EffectiveOptions,
) -> Result<Vec<TwoSiteKerrPoint>> {
    phi3.iter()
        .map(|&x| {
            let ec = couplings_for(&p.with_phi3(x), opts)?;
            let reference = two_site_levels(&build_two_site(&ec, dim, TermFlags::hopping_reference())?);
            let full = two_site_levels(&build_two_site(&ec, dim, TermFlags::quartic())?);
            Ok(TwoSiteKerrPoint {
                phi3: x,
                j: ec.j_total,
                v: ec.v,
                reference: reference.kerr_ratio(ec.j_total),
                full: full.kerr_ratio(ec.j_total),
            })
        })
        .collect()
}

/// Spin-½ XXZ form 2J(SˣSˣ + SʸSʸ) + V SᶻSᶻ + h₁S₁ᶻ + h₂S₂ᶻ + offset, with
/// |1⟩ = spin up on each transmon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XxzCoefficients {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub h1: f64,
    pub h2: f64,
    pub offset: f64,
    /// Qubit-subspace matrix in the basis |00⟩, |01⟩, |10⟩, |11⟩ (first digit = transmon 1).
    pub matrix: Matrix4<f64>,
    /// E_C < 5|J|: the qubit truncation is unreliable.
    pub weak_anharmonicity: bool,
}

pub fn xxz_reduction(ec: &EffectiveCouplings) -> XxzCoefficients {
    let j = ec.j_total;
    let v = ec.v;
    let (xx, yy, zz) = (2.0 * j, 2.0 * j, v);
    let h1 = ec.omega1 + v / 2.0;
    let h2 = ec.omega2 + v / 2.0;
    let offset = 0.5 * (ec.omega1 + ec.omega2) + v / 4.0;

    // Spin-½ operators on one site, basis (|0⟩, |1⟩) = (down, up).
    let sx = nalgebra::Matrix2::new(0.0, 0.5, 0.5, 0.0);
    let sz = nalgebra::Matrix2::new(-0.5, 0.0, 0.0, 0.5);
    let id = nalgebra::Matrix2::identity();
    // SʸSʸ is real: (iσ)(iσ)-type products give −(S₊ − S₋)(S₊ − S₋)/4.
    let sm = nalgebra::Matrix2::new(0.0, 1.0, 0.0, 0.0);
    let sp = sm.transpose();
    let ky = |a: &nalgebra::Matrix2<f64>, b: &nalgebra::Matrix2<f64>| -> Matrix4<f64> {
        let k = a.kronecker(b);
        Matrix4::from_fn(|r, c| k[(r, c)])
    };
    let d1 = sp - sm;
    let yy_op = ky(&d1, &d1) * (-0.25);
    let matrix = ky(&sx, &sx) * xx
        + yy_op * yy
        + ky(&sz, &sz) * zz
        + ky(&sz, &id) * h1
        + ky(&id, &sz) * h2
        + Matrix4::identity() * offset;
    XxzCoefficients {
        xx,
        yy,
        zz,
        h1,
        h2,
        offset,
        matrix,
        weak_anharmonicity: ec.e_c < 5.0 * j.abs(),
    }
}
