//! Full three-mode quantum Hamiltonian on a truncated harmonic Fock basis.
//!
//! Modes are ordered (A, B, S); product index = (i_a·n_b + i_b)·n_s + i_s.
//! Phases are ψ = z(a + a†) and charges N = i·n(a† − a) with z·n = ½, so
//! every term of the Hamiltonian is a real symmetric matrix.

use std::fmt;

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::circuit::{build_mode_system, CircuitParams, ModeSystem, A, B, CHARGING_GHZ_FF, R, S};
use crate::error::{Error, Result};

/// Two labels whose overlaps differ by less than this are reported as ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.01;
/// Dressed |±⟩ labels are used when the bare detuning is within this many J.
pub const DRESSED_WINDOW: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CosineOrder {
    /// Josephson cosines evaluated as matrix functions.
    Exact,
    /// Taylor expansion to the given even order.
    Taylor(u32),
}

impl Serialize for CosineOrder {
    fn serialize<S2: Serializer>(&self, s: S2) -> std::result::Result<S2::Ok, S2::Error> {
        match self {
            CosineOrder::Exact => s.serialize_str("exact"),
            CosineOrder::Taylor(k) => s.serialize_u32(*k),
        }
    }
}

impl<'de> Deserialize<'de> for CosineOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Order(u32),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Order(k) => Ok(CosineOrder::Taylor(k)),
            Raw::Name(s) if s == "exact" => Ok(CosineOrder::Exact),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "cosine_order must be an even integer or \"exact\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockConfig {
    pub n_a: usize,
    pub n_b: usize,
    pub n_s: usize,
    pub cosine_order: CosineOrder,
    /// Lower bound on the coupler Josephson energy used for the sloshing-mode
    /// ladder scale; defaults to the SQUID minimum.
    pub sloshing_floor: Option<f64>,
    /// Multiplies the sloshing-mode stiffness used for its ladder scale; values
    /// below 1 widen the basis in ψ_S.
    pub sloshing_stiffness: f64,
    /// Keep only the quadratic part of the coupler cosine (no cross-Kerr).
    pub linear_coupler: bool,
    /// Extra levels used when forming single-mode operator functions.
    pub padding: usize,
}

impl Default for FockConfig {
    fn default() -> Self {
        Self {
            n_a: 15,
            n_b: 15,
            n_s: 15,
            cosine_order: CosineOrder::Exact,
            sloshing_floor: None,
            sloshing_stiffness: 0.6,
            linear_coupler: false,
            padding: 30,
        }
    }
}

impl FockConfig {
    pub fn uniform(n: usize) -> Self {
        Self { n_a: n, n_b: n, n_s: n, ..Self::default() }
    }

    pub fn with_order(mut self, order: CosineOrder) -> Self {
        self.cosine_order = order;
        self
    }

    pub fn dim(&self) -> usize {
        self.n_a * self.n_b * self.n_s
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_a", self.n_a), ("n_b", self.n_b), ("n_s", self.n_s)] {
            if n < 3 {
                return Err(Error::Config(format!("{name} must be at least 3, got {n}")));
            }
        }
        if let CosineOrder::Taylor(k) = self.cosine_order {
            if k < 2 || k % 2 != 0 || k > 16 {
                return Err(Error::Config(format!(
                    "cosine_order must be even and between 2 and 16, got {k}"
                )));
            }
        }
        if !(self.sloshing_stiffness.is_finite() && self.sloshing_stiffness > 0.0) {
            return Err(Error::Config("sloshing_stiffness must be positive".into()));
        }
        if let Some(f) = self.sloshing_floor {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::Config("sloshing_floor must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Removes the rigid-mode charge from the Hamiltonian: its couplings to Q_A and
/// Q_B renormalise the transmon charging energies and the Q_A Q_B weight.
pub fn eliminate_rigid_mode(ms: &ModeSystem) -> ModeSystem {
    let mut out = ms.clone();
    if ms.rigid_eliminated {
        return out;
    }
    let w = if ms.c_tilde_abr.is_infinite() { 0.0 } else { 1.0 / ms.c_tilde_abr };
    let shift = ms.c_tilde_r * w * w;
    out.inv_cap[(A, A)] -= shift;
    out.inv_cap[(B, B)] -= shift;
    out.inv_cap[(A, B)] -= shift;
    out.inv_cap[(B, A)] -= shift;
    for i in 0..4 {
        out.inv_cap[(R, i)] = 0.0;
        out.inv_cap[(i, R)] = 0.0;
    }
    out.e_c = CHARGING_GHZ_FF * out.inv_cap[(A, A)];
    out.rigid_eliminated = true;
    out
}

/// Single-mode operators on the truncated oscillator basis.
#[derive(Debug, Clone)]
pub struct ModeOps {
    pub n: usize,
    /// ψ = z(a + a†).
    pub z: f64,
    /// N = i·n_zpf(a† − a).
    pub n_zpf: f64,
    pub charging: f64,
    /// Ladder-scale Josephson energy.
    pub stiffness: f64,
    /// a + a†.
    pub x: DMatrix<f64>,
    /// a† − a.
    pub d: DMatrix<f64>,
    /// (a† − a)², evaluated before truncation.
    pub d2: DMatrix<f64>,
    padded_psi: SymmetricEigen<f64, nalgebra::Dyn>,
    padded_psi_matrix: DMatrix<f64>,
}

fn ladder(m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    for k in 1..m {
        a[(k - 1, k)] = (k as f64).sqrt();
    }
    a
}

fn truncate(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let t = m.view((0, 0), (n, n)).into_owned();
    (&t + t.transpose()) * 0.5
}

impl ModeOps {
    pub fn new(n: usize, padding: usize, charging: f64, stiffness: f64) -> Self {
        let z = (2.0 * charging / stiffness).powf(0.25);
        let n_zpf = (stiffness / (32.0 * charging)).powf(0.25);
        let m = n + padding;
        let a = ladder(m);
        let x_full = &a + a.transpose();
        let d_full = a.transpose() - &a;
        let d2_full = &d_full * &d_full;
        let psi = &x_full * z;
        let padded_psi = SymmetricEigen::new(psi.clone());
        Self {
            n,
            z,
            n_zpf,
            charging,
            stiffness,
            x: x_full.view((0, 0), (n, n)).into_owned(),
            d: d_full.view((0, 0), (n, n)).into_owned(),
            d2: truncate(&d2_full, n),
            padded_psi,
            padded_psi_matrix: psi,
        }
    }

    /// f(c·ψ) as a matrix function, truncated.
    pub fn function(&self, c: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let e = &self.padded_psi;
        let vals = DVector::from_iterator(e.eigenvalues.len(), e.eigenvalues.iter().map(|&l| f(c * l)));
        let full = &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose();
        truncate(&full, self.n)
    }

    /// (c·ψ)^p, exact within the padded space, truncated.
    pub fn power(&self, c: f64, p: u32) -> DMatrix<f64> {
        let m = self.padded_psi_matrix.nrows();
        let mut acc = DMatrix::identity(m, m);
        let scaled = &self.padded_psi_matrix * c;
        for _ in 0..p {
            acc = &acc * &scaled;
        }
        truncate(&acc, self.n)
    }

    /// cos(c·ψ) under the given expansion.
    pub fn cos(&self, c: f64, order: CosineOrder) -> DMatrix<f64> {
        match order {
            CosineOrder::Exact => self.function(c, f64::cos),
            CosineOrder::Taylor(k) => {
                let mut out = DMatrix::zeros(self.n, self.n);
                for j in 0..=k / 2 {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    out += self.power(c, 2 * j) * (sign / factorial(2 * j));
                }
                out
            }
        }
    }

    pub fn sin(&self, c: f64) -> DMatrix<f64> {
        self.function(c, f64::sin)
    }

    pub fn identity(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n)
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Uncoupled single-mode reference: eigen-energies and sign-fixed eigenvectors.
#[derive(Debug, Clone)]
pub struct BareMode {
    pub energies: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl BareMode {
    fn new(h: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(h);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let energies = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(i).into_owned();
            if col[k.min(n - 1)] < 0.0 {
                col = -col;
            }
            vectors.set_column(k, &col);
        }
        Self { energies, vectors }
    }

    pub fn transition(&self, k: usize) -> f64 {
        self.energies[k] - self.energies[0]
    }
}

#[derive(Debug, Clone)]
pub struct FockHamiltonian {
    pub dim: usize,
    pub dims: [usize; 3],
    /// Dense real symmetric matrix, GHz.
    pub matrix: Mat<f64>,
    /// Operators of modes A, B, S.
    pub mode_ops: [ModeOps; 3],
    /// Uncoupled references of modes A, B, S.
    pub bare: [BareMode; 3],
}

/// One term c·X_A ⊗ X_B ⊗ X_S.
struct Kron<'a> {
    c: f64,
    a: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
    s: &'a DMatrix<f64>,
}

fn accumulate(buf: &mut [f64], dims: [usize; 3], t: &Kron<'_>) {
    let [na, nb, ns] = dims;
    let d = na * nb * ns;
    for ia in 0..na {
        for ja in 0..na {
            let va = t.c * t.a[(ia, ja)];
            if va == 0.0 {
                continue;
            }
            for ib in 0..nb {
                for jb in 0..nb {
                    let vab = va * t.b[(ib, jb)];
                    if vab == 0.0 {
                        continue;
                    }
                    let row = (ia * nb + ib) * ns;
                    let col = (ja * nb + jb) * ns;
                    for is in 0..ns {
                        let base = (row + is) * d + col;
                        for js in 0..ns {
                            let vs = t.s[(is, js)];
                            if vs != 0.0 {
                                buf[base + js] += vab * vs;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scales of the three modes; the sloshing stiffness is floored.
fn mode_scales(ms: &ModeSystem, cfg: &FockConfig) -> Result<[(f64, f64); 3]> {
    let floor = cfg.sloshing_floor.unwrap_or(ms.ej_c_min);
    let ej_s = ms.ej_c.max(floor);
    if ej_s <= 0.0 {
        return Err(Error::Config(
            "sloshing mode is unregularised: coupler Josephson energy and floor are both zero; \
             set sloshing_floor"
                .into(),
        ));
    }
    Ok([
        (ms.charging_energy(A), ms.ej1),
        (ms.charging_energy(B), ms.ej2),
        (ms.charging_energy(S), cfg.sloshing_stiffness * ej_s),
    ])
}

type ProductTerm = (f64, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

pub fn build_full_hamiltonian(ms: &ModeSystem, cfg: &FockConfig) -> Result<FockHamiltonian> {
    cfg.validate()?;
    if !ms.rigid_eliminated {
        return Err(Error::Precondition("rigid mode must be eliminated first".into()));
    }
    let scales = mode_scales(ms, cfg)?;
    let dims = [cfg.n_a, cfg.n_b, cfg.n_s];
    let ops: [ModeOps; 3] =
        std::array::from_fn(|i| ModeOps::new(dims[i], cfg.padding, scales[i].0, scales[i].1));
    let [oa, ob, os] = &ops;
    let (ia, ib, is) = (oa.identity(), ob.identity(), os.identity());
    let order = cfg.cosine_order;
    let k4 = 4.0 * CHARGING_GHZ_FF;
    let m = &ms.inv_cap;

    let cos_a = oa.cos(1.0, order);
    let cos_b = ob.cos(1.0, order);
    // Product terms: coefficient times a ⊗ b ⊗ s.
    let mut owned: Vec<ProductTerm> = Vec::new();
    let coupler_order = if cfg.linear_coupler { CosineOrder::Taylor(2) } else { order };
    match coupler_order {
        CosineOrder::Exact => {
            let (ca, sa) = (oa.cos(0.5, order), oa.sin(0.5));
            let (cb, sb) = (ob.cos(0.5, order), ob.sin(0.5));
            let (cs, ss) = (os.cos(1.0, order), os.sin(1.0));
            let ej = -ms.ej_c;
            owned.push((ej, ca.clone(), cb.clone(), cs.clone()));
            owned.push((-ej, ca, sb.clone(), ss.clone()));
            owned.push((ej, sa.clone(), sb, cs));
            owned.push((ej, sa, cb, ss));
        }
        CosineOrder::Taylor(k) => {
            // cos(ψ_A/2 − ψ_B/2 − ψ_S) expanded in the joint variable.
            for p1 in 0..=k {
                for p2 in 0..=(k - p1) {
                    let mut s_op = DMatrix::zeros(cfg.n_s, cfg.n_s);
                    let mut any = false;
                    for p3 in 0..=(k - p1 - p2) {
                        let q = p1 + p2 + p3;
                        if q % 2 != 0 {
                            continue;
                        }
                        let sign = if (q / 2) % 2 == 0 { 1.0 } else { -1.0 };
                        let parity = if (p2 + p3) % 2 == 0 { 1.0 } else { -1.0 };
                        let c = sign * parity * 0.5f64.powi((p1 + p2) as i32)
                            / (factorial(p1) * factorial(p2) * factorial(p3));
                        s_op += os.power(1.0, p3) * c;
                        any = true;
                    }
                    if any {
                        owned.push((-ms.ej_c, oa.power(1.0, p1), ob.power(1.0, p2), s_op));
                    }
                }
            }
        }
    }

    let mut terms: Vec<Kron<'_>> = vec![
        Kron { c: -k4 * m[(A, A)] * oa.n_zpf.powi(2), a: &oa.d2, b: &ib, s: &is },
        Kron { c: -k4 * m[(B, B)] * ob.n_zpf.powi(2), a: &ia, b: &ob.d2, s: &is },
        Kron { c: -k4 * m[(S, S)] * os.n_zpf.powi(2), a: &ia, b: &ib, s: &os.d2 },
        Kron { c: -2.0 * k4 * m[(A, B)] * oa.n_zpf * ob.n_zpf, a: &oa.d, b: &ob.d, s: &is },
        Kron { c: -2.0 * k4 * m[(A, S)] * oa.n_zpf * os.n_zpf, a: &oa.d, b: &ib, s: &os.d },
        Kron { c: -2.0 * k4 * m[(B, S)] * ob.n_zpf * os.n_zpf, a: &ia, b: &ob.d, s: &os.d },
        Kron { c: -ms.ej1_bare, a: &cos_a, b: &ib, s: &is },
        Kron { c: -ms.ej2_bare, a: &ia, b: &cos_b, s: &is },
    ];
    for (c, a, b, s) in &owned {
        terms.push(Kron { c: *c, a, b, s });
    }

    let dim = cfg.dim();
    let mut buf = vec![0.0; dim * dim];
    for t in terms.iter().filter(|t| t.c != 0.0) {
        accumulate(&mut buf, dims, t);
    }
    let matrix = Mat::from_fn(dim, dim, |i, j| buf[i * dim + j]);

    let bare = bare_modes(ms, &ops, order, k4);
    Ok(FockHamiltonian { dim, dims, matrix, mode_ops: ops, bare })
}

fn bare_modes(ms: &ModeSystem, ops: &[ModeOps; 3], order: CosineOrder, k4: f64) -> [BareMode; 3] {
    let [oa, ob, os] = ops;
    let m = &ms.inv_cap;
    let ha = &oa.d2 * (-k4 * m[(A, A)] * oa.n_zpf.powi(2))
        - oa.cos(1.0, order) * ms.ej1_bare
        - oa.cos(0.5, order) * ms.ej_c;
    let hb = &ob.d2 * (-k4 * m[(B, B)] * ob.n_zpf.powi(2))
        - ob.cos(1.0, order) * ms.ej2_bare
        - ob.cos(0.5, order) * ms.ej_c;
    [BareMode::new(ha), BareMode::new(hb), BareMode::new(sloshing_bare(ms, os, order))]
}

fn sloshing_bare(ms: &ModeSystem, os: &ModeOps, order: CosineOrder) -> DMatrix<f64> {
    let k4 = 4.0 * CHARGING_GHZ_FF;
    &os.d2 * (-k4 * ms.inv_cap[(S, S)] * os.n_zpf.powi(2)) - os.cos(1.0, order) * ms.ej_c
}

impl FockHamiltonian {
    /// max|H − Hᵀ| / max|H|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..self.dim {
            for i in 0..self.dim {
                let v = self.matrix[(i, j)];
                scale = scale.max(v.abs());
                diff = diff.max((v - self.matrix[(j, i)]).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    /// Applies a single-mode operator to a product-basis vector.
    pub fn apply_mode(&self, mode: Mode, op: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        apply_axis(self.dims, mode.axis(), op, v)
    }

    /// Expresses a product-basis vector in the uncoupled eigenbasis.
    pub fn to_bare(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for axis in 0..3 {
            out = apply_axis(self.dims, axis, &self.bare[axis].vectors.transpose(), &out);
        }
        out
    }

    pub fn index(&self, a: usize, b: usize, s: usize) -> usize {
        (a * self.dims[1] + b) * self.dims[2] + s
    }

    pub fn bare_energy(&self, a: usize, b: usize, s: usize) -> f64 {
        self.bare[0].transition(a) + self.bare[1].transition(b) + self.bare[2].transition(s)
    }
}

fn apply_axis(dims: [usize; 3], axis: usize, op: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let [na, nb, ns] = dims;
    let mut out = vec![0.0; v.len()];
    let idx = |a: usize, b: usize, s: usize| (a * nb + b) * ns + s;
    match axis {
        0 => {
            for i in 0..na {
                for j in 0..na {
                    let c = op[(i, j)];
                    if c == 0.0 {
                        continue;
                    }
                    for b in 0..nb {
                        for s in 0..ns {
                            out[idx(i, b, s)] += c * v[idx(j, b, s)];
                        }
                    }
                }
            }
        }
        1 => {
            for i in 0..nb {
                for j in 0..nb {
                    let c = op[(i, j)];
                    if c == 0.0 {
                        continue;
                    }
                    for a in 0..na {
                        for s in 0..ns {
                            out[idx(a, i, s)] += c * v[idx(a, j, s)];
                        }
                    }
                }
            }
        }
        _ => {
            for a in 0..na {
                for b in 0..nb {
                    let base = idx(a, b, 0);
                    for i in 0..ns {
                        let mut acc = 0.0;
                        for j in 0..ns {
                            acc += op[(i, j)] * v[base + j];
                        }
                        out[base + i] = acc;
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    A,
    B,
    S,
}

impl Mode {
    fn axis(self) -> usize {
        match self {
            Mode::A => 0,
            Mode::B => 1,
            Mode::S => 2,
        }
    }
}

/// Bare product label |a b s⟩ or a dressed one-excitation label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateLabel {
    Bare { a: usize, b: usize, s: usize },
    /// (|100⟩ − |010⟩)/√2.
    Plus,
    /// (|100⟩ + |010⟩)/√2: transmon phases ψ_A and ψ_B in phase.
    Minus,
}

impl StateLabel {
    pub const fn bare(a: usize, b: usize, s: usize) -> Self {
        StateLabel::Bare { a, b, s }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Bare { a, b, s } if *a < 10 && *b < 10 && *s < 10 => {
                write!(f, "|{a}{b}{s}⟩")
            }
            StateLabel::Bare { a, b, s } => write!(f, "|{a},{b},{s}⟩"),
            StateLabel::Plus => write!(f, "|+⟩"),
            StateLabel::Minus => write!(f, "|-⟩"),
        }
    }
}

impl Serialize for StateLabel {
    fn serialize<S2: Serializer>(&self, s: S2) -> std::result::Result<S2::Ok, S2::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Level {
    /// Energy above the ground state, GHz.
    pub energy: f64,
    pub label: StateLabel,
    /// Probability weight on the label's reference state.
    pub overlap: f64,
    pub ambiguous: bool,
    /// Competing label when `ambiguous` is set.
    pub alternative: Option<StateLabel>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Derived {
    pub omega_plus: Option<f64>,
    pub omega_minus: Option<f64>,
    pub omega_01: Option<f64>,
    pub omega_10: Option<f64>,
    pub omega_11: Option<f64>,
    pub omega_02: Option<f64>,
    pub omega_20: Option<f64>,
    pub omega_slosh: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabeledSpectrum {
    pub ground_energy: f64,
    pub levels: Vec<Level>,
    pub derived: Derived,
    /// Whether the one-excitation pair carries dressed labels.
    pub dressed: bool,
    /// Largest population on the highest retained Fock level of any mode.
    pub edge_population: f64,
    /// Truncations of modes A, B, S.
    pub dims: [usize; 3],
    /// Eigenvectors in the harmonic product basis.
    #[serde(skip)]
    pub states: Vec<Vec<f64>>,
    /// Eigenvectors in the uncoupled product eigenbasis.
    #[serde(skip)]
    pub bare_states: Vec<Vec<f64>>,
}

impl LabeledSpectrum {
    pub fn find(&self, label: StateLabel) -> Option<usize> {
        self.levels.iter().position(|l| l.label == label)
    }

    /// Product index of |a b s⟩ in `states` and `bare_states`.
    pub fn bare_index(&self, a: usize, b: usize, s: usize) -> usize {
        (a * self.dims[1] + b) * self.dims[2] + s
    }

    pub fn energy_of(&self, label: StateLabel) -> Option<f64> {
        self.find(label).map(|i| self.levels[i].energy)
    }

    /// Truncation is considered converged when the edge population is below 1e-4.
    pub fn truncation_converged(&self) -> bool {
        self.edge_population < 1e-4
    }
}

/// Lowest `k` eigenpairs with bare and dressed labels.
pub fn diagonalize(h: &FockHamiltonian, k: usize) -> Result<LabeledSpectrum> {
    if k == 0 || k > h.dim {
        return Err(Error::Config(format!("level count must lie in 1..={}, got {k}", h.dim)));
    }
    let eig = h
        .matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Matrix(format!("eigensolver failed: {e:?}")))?;
    let s = eig.S();
    let u = eig.U();
    let mut order: Vec<usize> = (0..h.dim).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let order = &order[..k];
    let energies: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let states: Vec<Vec<f64>> =
        order.iter().map(|&i| (0..h.dim).map(|r| u[(r, i)]).collect()).collect();
    let bare_states: Vec<Vec<f64>> = states.iter().map(|v| h.to_bare(v)).collect();

    let ground = energies[0];
    let labels = assign_labels(h, &bare_states);
    let [na, nb, ns] = h.dims;
    let edge_population = states
        .iter()
        .map(|v| {
            let mut p = 0.0;
            for a in 0..na {
                for b in 0..nb {
                    for s in 0..ns {
                        if a == na - 1 || b == nb - 1 || s == ns - 1 {
                            p += v[h.index(a, b, s)].powi(2);
                        }
                    }
                }
            }
            p
        })
        .fold(0.0, f64::max);

    let mut levels: Vec<Level> = energies
        .iter()
        .zip(labels)
        .map(|(&e, (label, overlap, alternative))| Level {
            energy: e - ground,
            label,
            overlap,
            ambiguous: alternative.is_some(),
            alternative,
        })
        .collect();

    let mut derived = Derived::default();
    let mut dressed = false;
    let i10 = levels.iter().position(|l| l.label == StateLabel::bare(1, 0, 0));
    let i01 = levels.iter().position(|l| l.label == StateLabel::bare(0, 1, 0));
    if let (Some(i), Some(j)) = (i10, i01) {
        let amp = |n: usize| {
            (bare_states[n][h.index(1, 0, 0)], bare_states[n][h.index(0, 1, 0)])
        };
        let minus_weight = |n: usize| {
            let (u, w) = amp(n);
            (u + w).powi(2) / 2.0
        };
        let plus_weight = |n: usize| {
            let (u, w) = amp(n);
            (u - w).powi(2) / 2.0
        };
        let (im, ip) = if minus_weight(i) >= minus_weight(j) { (i, j) } else { (j, i) };
        derived.omega_minus = Some(levels[im].energy);
        derived.omega_plus = Some(levels[ip].energy);

        let detuning = h.bare[0].transition(1) - h.bare[1].transition(1);
        let split = (levels[i].energy - levels[j].energy).abs();
        let j_est = 0.5 * (split * split - detuning * detuning).max(0.0).sqrt();
        if j_est > 0.0 && detuning.abs() <= DRESSED_WINDOW * j_est {
            dressed = true;
            levels[im].label = StateLabel::Minus;
            levels[im].overlap = minus_weight(im);
            levels[ip].label = StateLabel::Plus;
            levels[ip].overlap = plus_weight(ip);
            for n in [im, ip] {
                levels[n].ambiguous = false;
                levels[n].alternative = None;
            }
        } else {
            derived.omega_10 = Some(levels[i].energy);
            derived.omega_01 = Some(levels[j].energy);
        }
    }
    let spec = LabeledSpectrum {
        ground_energy: ground,
        levels,
        derived,
        dressed,
        edge_population,
        dims: h.dims,
        states,
        bare_states,
    };
    let mut derived = spec.derived;
    derived.omega_11 = spec.energy_of(StateLabel::bare(1, 1, 0));
    derived.omega_20 = spec.energy_of(StateLabel::bare(2, 0, 0));
    derived.omega_02 = spec.energy_of(StateLabel::bare(0, 2, 0));
    derived.omega_slosh = spec.energy_of(StateLabel::bare(0, 0, 1));
    Ok(LabeledSpectrum { derived, ..spec })
}

type Assigned = (StateLabel, f64, Option<StateLabel>);

/// Greedy unique assignment by descending bare-state probability.
fn assign_labels(h: &FockHamiltonian, bare_states: &[Vec<f64>]) -> Vec<Assigned> {
    const CANDIDATES: usize = 4;
    let [_, nb, ns] = h.dims;
    let decode = |idx: usize| StateLabel::bare(idx / (nb * ns), (idx / ns) % nb, idx % ns);
    let mut tops: Vec<Vec<(usize, f64)>> = Vec::with_capacity(bare_states.len());
    let mut pairs = Vec::new();
    for (n, v) in bare_states.iter().enumerate() {
        let mut best: Vec<(usize, f64)> = v.iter().map(|c| c * c).enumerate().collect();
        best.sort_by(|x, y| y.1.total_cmp(&x.1));
        best.truncate(CANDIDATES);
        for &(idx, p) in &best {
            pairs.push((p, n, idx));
        }
        tops.push(best);
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut chosen: Vec<Option<(usize, f64)>> = vec![None; bare_states.len()];
    let mut used = std::collections::HashSet::new();
    for (p, n, idx) in pairs {
        if chosen[n].is_none() && !used.contains(&idx) {
            chosen[n] = Some((idx, p));
            used.insert(idx);
        }
    }
    for (n, v) in bare_states.iter().enumerate() {
        if chosen[n].is_none() {
            let (idx, p) = v
                .iter()
                .map(|c| c * c)
                .enumerate()
                .filter(|(i, _)| !used.contains(i))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("bare basis is larger than the tracked set");
            chosen[n] = Some((idx, p));
            used.insert(idx);
        }
    }
    chosen
        .into_iter()
        .zip(tops)
        .map(|(c, top)| {
            let (idx, p) = c.expect("assigned");
            let rival = top
                .iter()
                .find(|&&(i, q)| i != idx && (p - q).abs() < AMBIGUITY_MARGIN)
                .map(|&(i, _)| decode(i));
            (decode(idx), p, rival)
        })
        .collect()
}

/// |⟨i|(x + x†)|j⟩| for the ladder operator of `mode`.
pub fn dipole_matrix_element(
    h: &FockHamiltonian,
    spectrum: &LabeledSpectrum,
    i: usize,
    j: usize,
    mode: Mode,
) -> Result<f64> {
    let n = spectrum.states.len();
    if i >= n || j >= n {
        return Err(Error::Config(format!("levels {i}, {j} outside the {n} computed")));
    }
    let op = &h.mode_ops[mode.axis()].x;
    let moved = h.apply_mode(mode, op, &spectrum.states[j]);
    Ok(spectrum.states[i].iter().zip(moved).map(|(a, b)| a * b).sum::<f64>().abs())
}

/// Circuit parameters → labelled spectrum of the lowest `k` levels.
pub fn full_spectrum(p: &CircuitParams, cfg: &FockConfig, k: usize) -> Result<LabeledSpectrum> {
    let ms = eliminate_rigid_mode(&build_mode_system(p)?);
    diagonalize(&build_full_hamiltonian(&ms, cfg)?, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_functions_match_series() {
        let ops = ModeOps::new(8, 30, 0.25, 23.0);
        let exact = ops.cos(1.0, CosineOrder::Exact);
        let series = ops.cos(1.0, CosineOrder::Taylor(16));
        assert!((exact - series).abs().max() < 1e-9);
    }

    #[test]
    fn sine_squared_plus_cosine_squared() {
        let ops = ModeOps::new(10, 30, 0.25, 23.0);
        let c = ops.function(0.5, f64::cos);
        let s = ops.sin(0.5);
        // The identity holds for the padded operators; truncation only touches
        // the top rows, so check the low block.
        let id = &c * &c + &s * &s;
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - want).abs() < 1e-6, "{i},{j}: {}", id[(i, j)]);
            }
        }
    }

    #[test]
    fn commutator_normalisation() {
        let ops = ModeOps::new(6, 10, 0.3, 20.0);
        assert!((ops.z * ops.n_zpf - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cosine_order_parsing() {
        let c: CosineOrder = serde_json::from_str("\"exact\"").unwrap();
        assert_eq!(c, CosineOrder::Exact);
        let c: CosineOrder = serde_json::from_str("6").unwrap();
        assert_eq!(c, CosineOrder::Taylor(6));
        assert!(serde_json::from_str::<CosineOrder>("\"cubic\"").is_err());
        assert!(FockConfig::uniform(5).with_order(CosineOrder::Taylor(3)).validate().is_err());
        assert!(FockConfig::uniform(2).validate().is_err());
    }

    #[test]
    fn label_display() {
        assert_eq!(StateLabel::bare(1, 1, 0).to_string(), "|110⟩");
        assert_eq!(StateLabel::bare(1, 12, 0).to_string(), "|1,12,0⟩");
        assert_eq!(StateLabel::Minus.to_string(), "|-⟩");
    }

    #[test]
    fn requires_rigid_elimination() {
        let ms = build_mode_system(&CircuitParams::fitted_device()).unwrap();
        let err = build_full_hamiltonian(&ms, &FockConfig::uniform(4)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
