//! Device parameters, SQUID flux maps, node-basis matrices and the mode-basis
//! capacitance algebra.
//!
//! Energies are E/h in GHz, capacitances in fF and fluxes in units of the flux
//! quantum. The single conversion between the two is [`CHARGING_GHZ_FF`].

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementary charge, C (exact SI value).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant, J s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// e²/(2h) in GHz·fF, so that E_C/h [GHz] = CHARGING_GHZ_FF / C [fF].
pub const CHARGING_GHZ_FF: f64 =
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * PLANCK) * 1e15 * 1e-9;

/// Index of the rigid mode in mode-basis vectors and matrices.
pub const R: usize = 0;
/// Index of the sloshing mode.
pub const S: usize = 1;
/// Index of transmon B.
pub const B: usize = 2;
/// Index of transmon A.
pub const A: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    pub ej1_max: f64,
    pub ej2_max: f64,
    pub ej_c_max: f64,
    pub ej_c_min: f64,
    pub c: f64,
    pub c1g: f64,
    pub c2g: f64,
    pub c_c: f64,
    #[serde(default)]
    pub phi1: f64,
    #[serde(default)]
    pub phi2: f64,
    #[serde(default)]
    pub phi3: f64,
    #[serde(default)]
    pub transmon_asymmetry: f64,
}

impl CircuitParams {
    /// Values fitted to the single-excitation spectrum of the reference device.
    pub fn fitted_device() -> Self {
        Self {
            ej1_max: 22.99,
            ej2_max: 22.99,
            ej_c_max: 7.33,
            ej_c_min: 0.37,
            c: 39.0,
            c1g: 60.5,
            c2g: 87.0,
            c_c: 18.0,
            phi1: 0.0,
            phi2: 0.0,
            phi3: 0.0,
            transmon_asymmetry: 0.0,
        }
    }

    /// Values used for the higher-excitation model of the reference device.
    pub fn nominal_device() -> Self {
        Self {
            ej1_max: 23.01,
            ej2_max: 23.01,
            ej_c_max: 7.75,
            ej_c_min: 0.39,
            c: 39.0,
            c1g: 61.0,
            c2g: 87.0,
            c_c: 20.0,
            ..Self::fitted_device()
        }
    }

    pub fn with_phi3(mut self, phi3: f64) -> Self {
        self.phi3 = phi3;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("ej1_max", self.ej1_max),
            ("ej2_max", self.ej2_max),
            ("ej_c_max", self.ej_c_max),
            ("ej_c_min", self.ej_c_min),
            ("c", self.c),
            ("c1g", self.c1g),
            ("c2g", self.c2g),
            ("c_c", self.c_c),
            ("phi1", self.phi1),
            ("phi2", self.phi2),
            ("phi3", self.phi3),
            ("transmon_asymmetry", self.transmon_asymmetry),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(Error::Param(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [("c", self.c), ("c1g", self.c1g), ("c2g", self.c2g)] {
            if v <= 0.0 {
                return Err(Error::Param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.c_c < 0.0 {
            return Err(Error::Param(format!("c_c must be non-negative, got {}", self.c_c)));
        }
        for (name, v) in [
            ("ej1_max", self.ej1_max),
            ("ej2_max", self.ej2_max),
            ("ej_c_max", self.ej_c_max),
        ] {
            if v <= 0.0 {
                return Err(Error::Param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.ej_c_min < 0.0 || self.ej_c_min > self.ej_c_max {
            return Err(Error::Param(format!(
                "ej_c_min must lie in [0, ej_c_max], got {} with ej_c_max {}",
                self.ej_c_min, self.ej_c_max
            )));
        }
        if !(0.0..=1.0).contains(&self.transmon_asymmetry) {
            return Err(Error::Param(format!(
                "transmon_asymmetry must lie in [0, 1], got {}",
                self.transmon_asymmetry
            )));
        }
        Ok(())
    }

    /// Flux-resolved Josephson energy of transmon 1.
    pub fn ej1(&self) -> f64 {
        squid(self.ej1_max, self.transmon_asymmetry * self.ej1_max, self.phi1)
    }

    /// Flux-resolved Josephson energy of transmon 2.
    pub fn ej2(&self) -> f64 {
        squid(self.ej2_max, self.transmon_asymmetry * self.ej2_max, self.phi2)
    }

    /// Flux-resolved Josephson energy of the coupler SQUID.
    pub fn ej_c(&self) -> f64 {
        squid(self.ej_c_max, self.ej_c_min, self.phi3)
    }
}

/// Josephson energy of an asymmetric SQUID with junction-sum `e_max` and
/// junction-difference `e_min`.
pub fn squid_energy(e_max: f64, e_min: f64, phi: f64) -> Result<f64> {
    if !(e_max.is_finite() && e_min.is_finite() && phi.is_finite()) {
        return Err(Error::Param("squid inputs must be finite".into()));
    }
    if e_min < 0.0 || e_min > e_max {
        return Err(Error::Param(format!(
            "squid requires e_max >= e_min >= 0, got e_max {e_max}, e_min {e_min}"
        )));
    }
    Ok(squid(e_max, e_min, phi))
}

fn squid(e_max: f64, e_min: f64, phi: f64) -> f64 {
    // Reduce first so that phi and phi + 1 give bit-identical results.
    let x = std::f64::consts::PI * phi.rem_euclid(1.0);
    let (s, c) = x.sin_cos();
    (e_max * e_max * c * c + e_min * e_min * s * s).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMatrices {
    /// Node capacitance matrix, fF.
    pub cap: Matrix4<f64>,
    /// Inverse inductance matrix expressed as Josephson energies, GHz.
    pub ind_inv: Matrix4<f64>,
}

pub fn build_node_matrices(p: &CircuitParams) -> Result<NodeMatrices> {
    p.validate()?;
    let (c, c1, c2, cc) = (p.c, p.c1g, p.c2g, p.c_c);
    #[rustfmt::skip]
    let cap = Matrix4::new(
        c + c1, -c,           0.0,          0.0,
        -c,     c + c2 + cc,  -cc,          0.0,
        0.0,    -cc,          c + c2 + cc,  -c,
        0.0,    0.0,          -c,           c + c1,
    );
    let (e1, e2, ec) = (p.ej1(), p.ej2(), p.ej_c());
    #[rustfmt::skip]
    let ind_inv = Matrix4::new(
        e1,   -e1,       0.0,       0.0,
        -e1,  e1 + ec,   -ec,       0.0,
        0.0,  -ec,       e2 + ec,   -e2,
        0.0,  0.0,       -e2,       e2,
    );
    Ok(NodeMatrices { cap, ind_inv })
}

/// Node phases in terms of mode phases: φ = T ψ with ψ ordered (R, S, B, A).
pub fn mode_transform() -> Matrix4<f64> {
    #[rustfmt::skip]
    let t = Matrix4::new(
        0.5,  0.5,  0.0,  0.5,
        0.5,  0.5,  0.0, -0.5,
        0.5, -0.5, -0.5,  0.0,
        0.5, -0.5,  0.5,  0.0,
    );
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSystem {
    /// C' = Tᵀ C T in the (R, S, B, A) basis, fF.
    pub cap_mode: Matrix4<f64>,
    /// Charge weights of the Hamiltonian ½ QᵀMQ, 1/fF, same ordering.
    pub inv_cap: Matrix4<f64>,
    pub c_tilde: f64,
    pub c_tilde_s: f64,
    pub c_tilde_r: f64,
    /// Infinite when the S–A charge coupling vanishes.
    pub c_tilde_abs: f64,
    /// Infinite for symmetric islands.
    pub c_tilde_abr: f64,
    pub det_cprime: f64,
    pub e_c: f64,
    /// Transmon Josephson energies including the quadratic coupler self-term.
    pub ej1: f64,
    pub ej2: f64,
    /// Flux-resolved transmon Josephson energies without the coupler term.
    pub ej1_bare: f64,
    pub ej2_bare: f64,
    pub ej_c: f64,
    /// Lower bound of the coupler SQUID, used to regularise the sloshing mode.
    pub ej_c_min: f64,
    pub ej_correction_applied: bool,
    pub rigid_eliminated: bool,
}

/// Closed-form effective capacitances of the mode basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCapacitances {
    pub c_tilde: f64,
    pub c_tilde_s: f64,
    pub c_tilde_r: f64,
    pub c_tilde_abs: f64,
    pub c_tilde_abr: f64,
    pub det: f64,
    /// Q_A Q_B weight of the charge Hamiltonian, 1/fF.
    pub ab_weight: f64,
}

pub fn effective_capacitances(p: &CircuitParams) -> EffectiveCapacitances {
    let (c, c1, c2, cc) = (p.c, p.c1g, p.c2g, p.c_c);
    let x = c1 * (c2 + 2.0 * cc) + c * (c1 + c2 + 2.0 * cc);
    let y = c1 * c2 + c * (c1 + c2);
    let det = x * y / 4.0;
    let c_tilde = 4.0 * det
        / (c1 * c2 * (c1 + c2) + c1 * (c1 + 2.0 * c2) * cc + c * (c1 + c2) * (c1 + c2 + 2.0 * cc));
    let c_tilde_s = 2.0 * x / (4.0 * c + c1 + c2 + 2.0 * cc);
    let c_tilde_r = 2.0 * y / (4.0 * c + c1 + c2);
    let c_tilde_abs = divide_or_inf(2.0 * x, c2 - c1 + 2.0 * cc);
    let c_tilde_abr = divide_or_inf(2.0 * y, c2 - c1);
    EffectiveCapacitances {
        c_tilde,
        c_tilde_s,
        c_tilde_r,
        c_tilde_abs,
        c_tilde_abr,
        det,
        ab_weight: cc * c1 * c1 / (4.0 * det),
    }
}

fn divide_or_inf(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn recip(c: f64) -> f64 {
    if c.is_infinite() {
        0.0
    } else {
        1.0 / c
    }
}

pub fn build_mode_system(p: &CircuitParams) -> Result<ModeSystem> {
    let nodes = build_node_matrices(p)?;
    let t = mode_transform();
    let cap_mode = t.transpose() * nodes.cap * t;
    let ecap = effective_capacitances(p);

    let mut inv_cap = Matrix4::zeros();
    let mut set = |i: usize, j: usize, v: f64| {
        inv_cap[(i, j)] = v;
        inv_cap[(j, i)] = v;
    };
    set(A, A, 1.0 / ecap.c_tilde);
    set(B, B, 1.0 / ecap.c_tilde);
    set(S, S, 1.0 / ecap.c_tilde_s);
    set(R, R, 1.0 / ecap.c_tilde_r);
    set(A, B, ecap.ab_weight);
    set(S, A, recip(ecap.c_tilde_abs));
    set(S, B, -recip(ecap.c_tilde_abs));
    set(R, A, recip(ecap.c_tilde_abr));
    set(R, B, recip(ecap.c_tilde_abr));
    set(R, S, 0.0);

    let ej_c = p.ej_c();
    let (ej1_bare, ej2_bare) = (p.ej1(), p.ej2());
    Ok(ModeSystem {
        cap_mode,
        inv_cap,
        c_tilde: ecap.c_tilde,
        c_tilde_s: ecap.c_tilde_s,
        c_tilde_r: ecap.c_tilde_r,
        c_tilde_abs: ecap.c_tilde_abs,
        c_tilde_abr: ecap.c_tilde_abr,
        det_cprime: ecap.det,
        e_c: CHARGING_GHZ_FF / ecap.c_tilde,
        ej1: ej1_bare + ej_c / 4.0,
        ej2: ej2_bare + ej_c / 4.0,
        ej1_bare,
        ej2_bare,
        ej_c,
        ej_c_min: p.ej_c_min,
        ej_correction_applied: true,
        rigid_eliminated: false,
    })
}

impl ModeSystem {
    /// Charging energy of mode `i` from its diagonal charge weight, GHz.
    pub fn charging_energy(&self, i: usize) -> f64 {
        CHARGING_GHZ_FF * self.inv_cap[(i, i)]
    }
}
