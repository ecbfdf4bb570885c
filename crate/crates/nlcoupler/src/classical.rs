//! Normal modes of the linearised circuit.

use nalgebra::{Cholesky, Matrix4, SymmetricEigen, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_node_matrices, CircuitParams, NodeMatrices, CHARGING_GHZ_FF};
use crate::error::{Error, Result};

/// Frequencies below this value (GHz) are treated as the rigid mode.
pub const RIGID_THRESHOLD_GHZ: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    Symmetric,
    Antisymmetric,
    Sloshing,
    Rigid,
}

impl ModeLabel {
    pub const ALL: [ModeLabel; 4] =
        [ModeLabel::Symmetric, ModeLabel::Antisymmetric, ModeLabel::Sloshing, ModeLabel::Rigid];

    /// Node-flux sign pattern the label is matched against.
    pub fn template(self) -> Vector4<f64> {
        match self {
            // Transmon phases in phase (ψ_A = ψ_B); no current through the coupler.
            ModeLabel::Antisymmetric => Vector4::new(1.0, -1.0, -1.0, 1.0),
            ModeLabel::Symmetric => Vector4::new(1.0, -1.0, 1.0, -1.0),
            ModeLabel::Sloshing => Vector4::new(1.0, 1.0, -1.0, -1.0),
            ModeLabel::Rigid => Vector4::new(1.0, 1.0, 1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalModeSet {
    /// Ω/2π in GHz, ascending.
    pub frequencies: [f64; 4],
    /// Node-flux mode vectors normalised to vᵀ·cap·v = 1.
    pub vectors: [Vector4<f64>; 4],
    pub labels: [ModeLabel; 4],
}

impl NormalModeSet {
    pub fn index_of(&self, label: ModeLabel) -> usize {
        self.labels.iter().position(|&l| l == label).expect("every label is assigned once")
    }

    pub fn frequency(&self, label: ModeLabel) -> f64 {
        self.frequencies[self.index_of(label)]
    }

    pub fn vector(&self, label: ModeLabel) -> Vector4<f64> {
        self.vectors[self.index_of(label)]
    }
}

/// Solves 8K·ind_inv·v = f²·cap·v by Cholesky reduction of `cap`.
pub fn solve_normal_modes(m: &NodeMatrices) -> Result<NormalModeSet> {
    let chol = Cholesky::new(m.cap)
        .ok_or_else(|| Error::Matrix("capacitance matrix is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .try_inverse()
        .ok_or_else(|| Error::Matrix("singular Cholesky factor".into()))?;
    let stiffness = m.ind_inv * (8.0 * CHARGING_GHZ_FF);
    let mut reduced = l_inv * stiffness * l_inv.transpose();
    reduced = (reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);

    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut frequencies = [0.0; 4];
    let mut vectors = [Vector4::zeros(); 4];
    for (k, &i) in order.iter().enumerate() {
        let f = eig.eigenvalues[i].max(0.0).sqrt();
        frequencies[k] = if f < RIGID_THRESHOLD_GHZ { 0.0 } else { f };
        let mut v: Vector4<f64> = l_inv.transpose() * eig.eigenvectors.column(i);
        let pivot = v.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            v = -v;
        }
        vectors[k] = v;
    }
    let labels = assign_labels(&vectors);
    Ok(NormalModeSet { frequencies, vectors, labels })
}

/// Maximises the summed |cosine similarity| over all label permutations; the
/// ascending frequency order breaks ties.
fn assign_labels(vectors: &[Vector4<f64>; 4]) -> [ModeLabel; 4] {
    let mut sim = [[0.0; 4]; 4];
    for (i, v) in vectors.iter().enumerate() {
        for (j, l) in ModeLabel::ALL.iter().enumerate() {
            let t = l.template();
            sim[i][j] = (v.dot(&t) / (v.norm() * t.norm())).abs();
        }
    }
    let mut best = ([ModeLabel::Rigid; 4], f64::NEG_INFINITY);
    for perm in permutations4() {
        let score: f64 = (0..4).map(|i| sim[i][perm[i]]).sum();
        if score > best.1 + 1e-12 {
            best = (perm.map(|j| ModeLabel::ALL[j]), score);
        }
    }
    best.0
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| p[i] != p[j]));
                    if distinct {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// ω₊ − ω₋ from the classical modes at coupler flux `phi3`, GHz.
pub fn classical_splitting(p: &CircuitParams, phi3: f64) -> Result<f64> {
    let q = p.with_phi3(phi3);
    q.validate()?;
    let (e1, e2) = (q.ej1(), q.ej2());
    if (e1 - e2).abs() > 1e-9 * e1.max(e2) {
        return Err(Error::Precondition(format!(
            "transmons are not resonant: ej1 = {e1}, ej2 = {e2}"
        )));
    }
    let modes = solve_normal_modes(&build_node_matrices(&q)?)?;
    Ok(modes.frequency(ModeLabel::Symmetric) - modes.frequency(ModeLabel::Antisymmetric))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSweepRow {
    pub phi3: f64,
    pub f_sym: f64,
    pub f_antisym: f64,
    pub f_slosh: f64,
    pub f_rigid: f64,
}

pub fn mode_sweep(p: &CircuitParams, phi3: &[f64]) -> Result<Vec<ModeSweepRow>> {
    phi3.par_iter()
        .map(|&x| {
            let m = solve_normal_modes(&build_node_matrices(&p.with_phi3(x))?)?;
            Ok(ModeSweepRow {
                phi3: x,
                f_sym: m.frequency(ModeLabel::Symmetric),
                f_antisym: m.frequency(ModeLabel::Antisymmetric),
                f_slosh: m.frequency(ModeLabel::Sloshing),
                f_rigid: m.frequency(ModeLabel::Rigid),
            })
        })
        .collect()
}

/// Generalised eigen-residual ‖(8K·ind_inv − f²·cap)·v‖ / ‖v‖ in GHz², used by tests.
pub fn eigen_residual(m: &NodeMatrices, f: f64, v: &Vector4<f64>) -> f64 {
    let lhs: Matrix4<f64> = m.ind_inv * (8.0 * CHARGING_GHZ_FF) - m.cap * (f * f);
    (lhs * v).norm() / v.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rigid_mode_is_uniform() {
        let m = build_node_matrices(&CircuitParams::fitted_device()).unwrap();
        let modes = solve_normal_modes(&m).unwrap();
        assert_eq!(modes.labels[0], ModeLabel::Rigid);
        assert_eq!(modes.frequencies[0], 0.0);
        let v = modes.vector(ModeLabel::Rigid);
        for i in 1..4 {
            assert!((v[i] - v[0]).abs() < 1e-9 * v[0].abs());
        }
    }

    #[test]
    fn reference_frequencies() {
        let m = build_node_matrices(&CircuitParams::fitted_device()).unwrap();
        let modes = solve_normal_modes(&m).unwrap();
        assert!((modes.frequency(ModeLabel::Sloshing) - 3.366).abs() < 5e-3);
        assert!((modes.frequency(ModeLabel::Antisymmetric) - 6.9066).abs() < 5e-4);
        assert!((modes.frequency(ModeLabel::Symmetric) - 6.9955).abs() < 5e-4);
    }

    #[test]
    fn not_positive_definite_is_error() {
        let mut m = build_node_matrices(&CircuitParams::fitted_device()).unwrap();
        m.cap[(0, 0)] = -1.0;
        assert!(matches!(solve_normal_modes(&m), Err(Error::Matrix(_))));
    }

    #[test]
    fn off_resonance_splitting_rejected() {
        let p = CircuitParams { phi1: 0.1, ..CircuitParams::fitted_device() };
        assert!(matches!(classical_splitting(&p, 0.0), Err(Error::Precondition(_))));
    }
}
