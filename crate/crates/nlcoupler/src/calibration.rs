//! Flux-crosstalk calibration from sweetspot offsets, sweetspot extraction and
//! least-squares fits of circuit parameters to spectra.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_mode_system, CircuitParams, CHARGING_GHZ_FF, S};
use crate::effective::{effective_couplings, EffectiveOptions};
use crate::error::{Error, Result};
use crate::hamiltonian::{eliminate_rigid_mode, full_spectrum, FockConfig};
use crate::lsq;

/// Affine map from applied channel values to effective fluxes:
/// Φ = m·I + offsets. Each channel is scaled so that it drives its own flux
/// with unit weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMatrix {
    pub m: Matrix3<f64>,
    pub offsets: Vector3<f64>,
}

impl CrosstalkMatrix {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity(), offsets: Vector3::zeros() }
    }

    pub fn effective_flux(&self, applied: &Vector3<f64>) -> Vector3<f64> {
        self.m * applied + self.offsets
    }

    /// m⁻¹, mapping desired flux changes to channel changes.
    pub fn orthogonalizing_map(&self) -> Result<Matrix3<f64>> {
        self.m
            .try_inverse()
            .ok_or_else(|| Error::Calibration("crosstalk matrix is singular".into()))
    }

    /// Channel values that realise the effective flux `target`.
    pub fn applied_for(&self, target: &Vector3<f64>) -> Result<Vector3<f64>> {
        Ok(self.orthogonalizing_map()? * (target - self.offsets))
    }

    /// The map seen through virtual channels built from `calibration`: the
    /// identity when the calibration is exact.
    pub fn through(&self, calibration: &CrosstalkMatrix) -> Result<CrosstalkMatrix> {
        let inv = calibration.orthogonalizing_map()?;
        Ok(CrosstalkMatrix {
            m: self.m * inv,
            offsets: self.offsets - self.m * inv * calibration.offsets,
        })
    }
}

/// Applied value of the tracked channel at which its flux reaches the top
/// sweetspot (Φ = 0), with the other two channels held at `applied`.
pub fn sweetspot_offset(x: &CrosstalkMatrix, tracked: usize, applied: &Vector3<f64>) -> Result<f64> {
    if tracked > 2 {
        return Err(Error::Calibration(format!("tracked channel {tracked} out of range")));
    }
    let mii = x.m[(tracked, tracked)];
    if mii.abs() < 1e-300 {
        return Err(Error::Calibration(format!("channel {} does not drive its own flux", tracked + 1)));
    }
    let foreign: f64 = (0..3).filter(|&j| j != tracked).map(|j| x.m[(tracked, j)] * applied[j]).sum();
    Ok(-(x.offsets[tracked] + foreign) / mii)
}

/// One measured sweetspot: the tracked channel's offset with the two foreign
/// channels at `applied` (the tracked entry is ignored).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweetspotObservation {
    pub tracked: usize,
    pub offset: f64,
    pub applied: [f64; 3],
}

/// Regresses each tracked channel's sweetspot offset on the two foreign
/// channels and assembles the unit-diagonal crosstalk matrix.
pub fn calibrate_crosstalk(obs: &[SweetspotObservation]) -> Result<CrosstalkMatrix> {
    let mut m = Matrix3::identity();
    let mut offsets = Vector3::zeros();
    for i in 0..3 {
        let rows: Vec<&SweetspotObservation> = obs.iter().filter(|o| o.tracked == i).collect();
        let foreign: Vec<usize> = (0..3).filter(|&j| j != i).collect();
        for &j in &foreign {
            let mut values: Vec<f64> = rows.iter().map(|o| o.applied[j]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
            if values.len() < 2 {
                return Err(Error::Calibration(format!(
                    "missing pair: flux {} against channel {} needs at least two distinct settings",
                    i + 1,
                    j + 1
                )));
            }
        }
        if rows.iter().any(|o| !o.offset.is_finite() || o.applied.iter().any(|v| !v.is_finite())) {
            return Err(Error::Calibration(format!("non-finite observation for flux {}", i + 1)));
        }
        let design = DMatrix::from_fn(rows.len(), 3, |r, c| match c {
            0 => 1.0,
            c => rows[r].applied[foreign[c - 1]],
        });
        let svd = design.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax {
            return Err(Error::Calibration(format!(
                "missing pair: flux {} settings of channels {} and {} are collinear",
                i + 1,
                foreign[0] + 1,
                foreign[1] + 1
            )));
        }
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|o| o.offset));
        let beta = svd.solve(&y, 1e-14).map_err(|e| Error::Calibration(e.to_string()))?;
        // offset_i = −o_i − Σ m_ij I_j with m_ii = 1.
        offsets[i] = -beta[0];
        for (k, &j) in foreign.iter().enumerate() {
            m[(i, j)] = -beta[k + 1];
        }
    }
    let x = CrosstalkMatrix { m, offsets };
    x.orthogonalizing_map()?;
    Ok(x)
}

/// Noiseless observations of `truth` on a grid of foreign settings: each
/// foreign channel is stepped alone, then both together.
pub fn simulate_observations(truth: &CrosstalkMatrix, settings: &[f64]) -> Result<Vec<SweetspotObservation>> {
    let mut out = Vec::new();
    for i in 0..3 {
        let foreign: Vec<usize> = (0..3).filter(|&j| j != i).collect();
        let mut grid = Vec::new();
        for &v in settings {
            grid.push((v, 0.0));
            grid.push((0.0, v));
            grid.push((v, v));
        }
        for (a, b) in grid {
            let mut applied = [0.0; 3];
            applied[foreign[0]] = a;
            applied[foreign[1]] = b;
            let offset = sweetspot_offset(truth, i, &Vector3::from(applied))?;
            out.push(SweetspotObservation { tracked: i, offset, applied });
        }
    }
    Ok(out)
}

/// Largest |slope| of the tracked sweetspot against any foreign channel.
pub fn residual_crosstalk(x: &CrosstalkMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in (0..3).filter(|&j| j != i) {
            worst = worst.max((x.m[(i, j)] / x.m[(i, i)]).abs());
        }
    }
    worst
}

/// ω(Φ) = √(8E_J·E_C·|cos π(Φ − Φ_off)|) − E_C.
pub fn transmon_arch(ej: f64, ec: f64, phi_off: f64, phi: f64) -> f64 {
    (8.0 * ej * ec * (std::f64::consts::PI * (phi - phi_off)).cos().abs()).sqrt() - ec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweetspotKind {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweetspotFit {
    /// Flux of the extremum inside the data range.
    pub phi_off: f64,
    pub kind: SweetspotKind,
    pub ej: f64,
    pub ec: f64,
    /// RMS residual, GHz.
    pub residual: f64,
}

/// Fits the transmon arch to (flux, frequency) samples bracketing an extremum.
pub fn extract_sweetspot(samples: &[(f64, f64)]) -> Result<SweetspotFit> {
    if samples.len() < 5 {
        return Err(Error::Fit(format!("sweetspot fit needs at least 5 samples, got {}", samples.len())));
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Fit("non-finite sweetspot sample".into()));
    }
    let mut pts = samples.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    let (fmin, fmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if fmax - fmin <= 1e-9 * fmax.abs().max(1.0) {
        return Err(Error::Fit("flat data: no frequency extremum".into()));
    }
    let imax = (0..n).max_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1)).expect("n >= 5");
    let imin = (0..n).min_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1)).expect("n >= 5");
    let interior = |i: usize| i > 0 && i < n - 1;
    let (kind, centre) = if interior(imax) {
        (SweetspotKind::Top, pts[imax].0)
    } else if interior(imin) {
        (SweetspotKind::Bottom, pts[imin].0 - 0.5)
    } else {
        return Err(Error::Fit("no frequency extremum inside the flux range".into()));
    };

    // Parameters (8E_JE_C, E_C, Φ_off).
    let model = |x: &[f64]| -> Option<Vec<f64>> {
        if x[0] <= 0.0 || x[1] <= 0.0 {
            return None;
        }
        Some(
            pts.iter()
                .map(|&(phi, f)| {
                    (x[0] * (std::f64::consts::PI * (phi - x[2])).cos().abs()).sqrt() - x[1] - f
                })
                .collect(),
        )
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for ec in [0.1, 0.2, 0.3, 0.5, 1.0] {
        let top = match kind {
            SweetspotKind::Top => fmax,
            SweetspotKind::Bottom => fmax.max(fmin + 1.0),
        };
        let x0 = [(top + ec).powi(2), ec, centre];
        if let Some(s) = lsq::minimize(&model, &x0, 1e-8, 1e-15, 400) {
            if best.as_ref().is_none_or(|b| s.cost < b.1) {
                best = Some((s.x, s.cost));
            }
        }
    }
    let (x, cost) = best.ok_or_else(|| Error::Fit("sweetspot fit did not converge".into()))?;
    let (lo, hi) = (pts[0].0, pts[n - 1].0);
    // Report the extremum of the requested kind inside the data range.
    let shift = if kind == SweetspotKind::Top { 0.0 } else { 0.5 };
    let mid = 0.5 * (lo + hi);
    let phi_off = x[2] + shift + (mid - x[2] - shift).round();
    Ok(SweetspotFit {
        phi_off,
        kind,
        ej: x[0] / (8.0 * x[1]),
        ec: x[1],
        residual: (cost / n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxChannel {
    Phi1,
    Phi2,
    Phi3,
}

/// Transition whose frequency (above the ground state) is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    /// Antisymmetric dressed state |+⟩.
    Plus,
    /// In-phase dressed state |−⟩.
    Minus,
    /// Transmon-1 excitation, off resonance.
    Q1,
    /// Transmon-2 excitation, off resonance.
    Q2,
    /// Sloshing-mode fundamental.
    Slosh,
    /// |11⟩ (full model only).
    Q11,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub flux_channel: FluxChannel,
    pub flux_value: f64,
    pub transition: Transition,
    pub freq_ghz: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    /// Both transmon maxima together.
    EjMax,
    Ej1Max,
    Ej2Max,
    C,
    C1g,
    C2g,
    EjcMax,
    EjcMin,
    Cc,
}

impl FitParam {
    /// The rows of the reference parameter table.
    pub const TABLE: [FitParam; 7] = [
        FitParam::EjMax,
        FitParam::C,
        FitParam::C1g,
        FitParam::C2g,
        FitParam::EjcMax,
        FitParam::EjcMin,
        FitParam::Cc,
    ];

    pub fn get(self, p: &CircuitParams) -> f64 {
        match self {
            FitParam::EjMax | FitParam::Ej1Max => p.ej1_max,
            FitParam::Ej2Max => p.ej2_max,
            FitParam::C => p.c,
            FitParam::C1g => p.c1g,
            FitParam::C2g => p.c2g,
            FitParam::EjcMax => p.ej_c_max,
            FitParam::EjcMin => p.ej_c_min,
            FitParam::Cc => p.c_c,
        }
    }

    pub fn set(self, p: &mut CircuitParams, v: f64) {
        match self {
            FitParam::EjMax => {
                p.ej1_max = v;
                p.ej2_max = v;
            }
            FitParam::Ej1Max => p.ej1_max = v,
            FitParam::Ej2Max => p.ej2_max = v,
            FitParam::C => p.c = v,
            FitParam::C1g => p.c1g = v,
            FitParam::C2g => p.c2g = v,
            FitParam::EjcMax => p.ej_c_max = v,
            FitParam::EjcMin => p.ej_c_min = v,
            FitParam::Cc => p.c_c = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForwardModel {
    /// Effective two-level transmon pair plus the sloshing oscillator.
    Simplified,
    /// Full three-mode Hamiltonian.
    Full { fock: FockConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub model: ForwardModel,
    /// Perturbed restarts after the initial run.
    pub restarts: usize,
    /// Relative spread of restart perturbations.
    pub restart_spread: f64,
    /// Stop once the RMS residual falls below this, GHz.
    pub tolerance: f64,
    pub max_evaluations: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            model: ForwardModel::Simplified,
            restarts: 5,
            restart_spread: 0.1,
            tolerance: 1e-6,
            max_evaluations: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub params: CircuitParams,
    pub free: Vec<FitParam>,
    /// RMS of (model − data), MHz.
    pub residual_mhz: f64,
    pub residuals_mhz: Vec<f64>,
    /// σ²(JᵀJ)⁻¹ over the free parameters in their own units; empty if singular.
    pub covariance: Vec<Vec<f64>>,
    pub evaluations: usize,
    pub converged: bool,
    pub model: ForwardModel,
}

/// Frequencies of `data` under `p`, GHz.
pub fn forward(p: &CircuitParams, data: &[SpectrumPoint], model: &ForwardModel) -> Result<Vec<f64>> {
    let eval = |pt: &SpectrumPoint| -> Result<f64> {
        let mut q = *p;
        match pt.flux_channel {
            FluxChannel::Phi1 => q.phi1 = pt.flux_value,
            FluxChannel::Phi2 => q.phi2 = pt.flux_value,
            FluxChannel::Phi3 => q.phi3 = pt.flux_value,
        }
        match model {
            ForwardModel::Simplified => simplified_frequency(&q, pt.transition),
            ForwardModel::Full { fock } => full_frequency(&q, fock, pt.transition),
        }
    };
    match model {
        ForwardModel::Simplified => data.iter().map(eval).collect(),
        ForwardModel::Full { .. } => data.par_iter().map(eval).collect(),
    }
}

fn simplified_frequency(p: &CircuitParams, t: Transition) -> Result<f64> {
    let ms = eliminate_rigid_mode(&build_mode_system(p)?);
    let c = effective_couplings(&ms, &EffectiveOptions::default())?;
    if t == Transition::Slosh {
        let ej_s = ms.ej_c.max(ms.ej_c_min);
        let ec_s = CHARGING_GHZ_FF * ms.inv_cap[(S, S)];
        return Ok((8.0 * ej_s * ec_s).sqrt() - ec_s);
    }
    let (w1, w2, j) = (c.omega1, c.omega2, c.j_total);
    let mean = 0.5 * (w1 + w2);
    let half = (0.25 * (w1 - w2).powi(2) + j * j).sqrt();
    let (lo, hi) = (mean - half, mean + half);
    // The in-phase combination sits at ω + J on resonance.
    let (minus, plus) = if j >= 0.0 { (hi, lo) } else { (lo, hi) };
    match t {
        Transition::Minus => Ok(minus),
        Transition::Plus => Ok(plus),
        Transition::Q1 => Ok(if w1 >= w2 { hi } else { lo }),
        Transition::Q2 => Ok(if w1 >= w2 { lo } else { hi }),
        Transition::Q11 => Err(Error::Config("the simplified model has no two-excitation levels".into())),
        Transition::Slosh => unreachable!(),
    }
}

fn full_frequency(p: &CircuitParams, fock: &FockConfig, t: Transition) -> Result<f64> {
    let levels = if t == Transition::Q11 { 24 } else { 8 };
    let s = full_spectrum(p, fock, levels)?;
    let d = s.derived;
    let pair = d.omega_plus.zip(d.omega_minus).map(|(a, b)| (a.min(b), a.max(b)));
    // On resonance the higher transmon is the upper dressed level.
    let q1_high = p.ej1() >= p.ej2();
    let value = match t {
        Transition::Plus => d.omega_plus,
        Transition::Minus => d.omega_minus,
        Transition::Q1 => d.omega_10.or(pair.map(|(lo, hi)| if q1_high { hi } else { lo })),
        Transition::Q2 => d.omega_01.or(pair.map(|(lo, hi)| if q1_high { lo } else { hi })),
        Transition::Slosh => d.omega_slosh,
        Transition::Q11 => d.omega_11,
    };
    value.ok_or_else(|| Error::Precondition(format!("transition {t:?} not identified")))
}

/// Weighted residual vector of a parameter vector, the quantity minimised by
/// [`fit_circuit_params`].
pub struct FitObjective<'a> {
    pub data: &'a [SpectrumPoint],
    pub base: CircuitParams,
    pub free: Vec<FitParam>,
    pub model: ForwardModel,
}

impl FitObjective<'_> {
    pub fn params_at(&self, x: &[f64]) -> CircuitParams {
        let mut p = self.base;
        for (k, f) in self.free.iter().enumerate() {
            f.set(&mut p, x[k]);
        }
        p
    }

    pub fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.params_at(x);
        p.validate()?;
        let f = forward(&p, self.data, &self.model)?;
        Ok(f.iter().zip(self.data).map(|(m, d)| (m - d.freq_ghz) * d.weight.sqrt()).collect())
    }

    /// Σ r².
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.residuals(x)?.iter().map(|r| r * r).sum())
    }

    /// Gradient of Σ r² by forward (`central = false`) or central differences
    /// with absolute steps `h`.
    pub fn gradient(&self, x: &[f64], h: &[f64], central: bool) -> Result<Vec<f64>> {
        let f0 = self.value(x)?;
        (0..x.len())
            .map(|k| {
                let mut xp = x.to_vec();
                xp[k] += h[k];
                let fp = self.value(&xp)?;
                if central {
                    let mut xm = x.to_vec();
                    xm[k] -= h[k];
                    Ok((fp - self.value(&xm)?) / (2.0 * h[k]))
                } else {
                    Ok((fp - f0) / h[k])
                }
            })
            .collect()
    }
}

/// Least-squares fit of the free parameters; the others stay at `initial`.
pub fn fit_circuit_params(
    data: &[SpectrumPoint],
    initial: &CircuitParams,
    free: &[FitParam],
    opts: &FitOptions,
) -> Result<FitReport> {
    if data.is_empty() {
        return Err(Error::Fit("no spectrum data".into()));
    }
    if data.iter().any(|d| !(d.freq_ghz.is_finite() && d.flux_value.is_finite() && d.weight >= 0.0)) {
        return Err(Error::Fit("data must be finite with non-negative weights".into()));
    }
    let mut free = free.to_vec();
    free.dedup();
    if free.contains(&FitParam::EjMax) && (free.contains(&FitParam::Ej1Max) || free.contains(&FitParam::Ej2Max)) {
        return Err(Error::Config("ej_max cannot be freed together with ej1_max or ej2_max".into()));
    }
    initial.validate()?;
    let obj = FitObjective { data, base: *initial, free: free.clone(), model: opts.model };
    let scale: Vec<f64> = free.iter().map(|f| f.get(initial).abs().max(1e-3)).collect();

    let report = |x: &[f64], evaluations: usize, converged: bool| -> Result<FitReport> {
        let r = obj.residuals(x)?;
        let rms = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
        Ok(FitReport {
            params: obj.params_at(x),
            free: free.clone(),
            residual_mhz: rms * 1e3,
            residuals_mhz: r.iter().map(|v| v * 1e3).collect(),
            covariance: covariance(&obj, x, &r),
            evaluations,
            converged,
            model: opts.model,
        })
    };
    let x_init: Vec<f64> = free.iter().map(|f| f.get(initial)).collect();
    if free.is_empty() {
        return report(&x_init, 0, true);
    }

    let scaled = |u: &[f64]| -> Option<Vec<f64>> {
        let x: Vec<f64> = u.iter().zip(&scale).map(|(u, s)| u * s).collect();
        obj.residuals(&x).ok()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, opts.restart_spread.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let u_init: Vec<f64> = x_init.iter().zip(&scale).map(|(x, s)| x / s).collect();
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut evaluations = 0;
    let target = opts.tolerance.powi(2) * data.len() as f64;
    for run in 0..=opts.restarts {
        let start: Vec<f64> = match (&best, run) {
            (_, 0) => u_init.clone(),
            (Some((u, _, _)), _) => u.iter().map(|v| v * (1.0 + normal.sample(&mut rng))).collect(),
            (None, _) => u_init.iter().map(|v| v * (1.0 + normal.sample(&mut rng))).collect(),
        };
        let Some(sol) = lsq::minimize(&scaled, &start, 1e-7, 1e-12, opts.max_evaluations) else {
            continue;
        };
        evaluations += sol.evaluations;
        if best.as_ref().is_none_or(|b| sol.cost < b.1) {
            best = Some((sol.x, sol.cost, sol.converged));
        }
        if best.as_ref().is_some_and(|b| b.1 <= target) {
            break;
        }
    }
    let (u, cost, lm_ok) = best.ok_or_else(|| Error::Fit("every restart left the valid parameter region".into()))?;
    let x: Vec<f64> = u.iter().zip(&scale).map(|(u, s)| u * s).collect();
    report(&x, evaluations, lm_ok || cost <= target)
}

fn covariance(obj: &FitObjective<'_>, x: &[f64], r0: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let m = r0.len();
    if n == 0 || m <= n {
        return vec![];
    }
    let f = |x: &[f64]| obj.residuals(x).ok();
    let Some(jac) = lsq::jacobian(&f, x, r0, 1e-6) else {
        return vec![];
    };
    let sigma2 = r0.iter().map(|v| v * v).sum::<f64>() / (m - n) as f64;
    match (jac.transpose() * &jac).try_inverse() {
        Some(inv) => (0..n).map(|i| (0..n).map(|j| inv[(i, j)] * sigma2).collect()).collect(),
        None => vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_crosstalk_round_trip() {
        let obs = simulate_observations(&CrosstalkMatrix::identity(), &[-0.2, 0.1, 0.3]).unwrap();
        let x = calibrate_crosstalk(&obs).unwrap();
        assert!((x.m - Matrix3::identity()).abs().max() < 1e-12);
        assert!(x.offsets.abs().max() < 1e-12);
    }

    #[test]
    fn missing_pair_is_named() {
        let truth = CrosstalkMatrix::identity();
        let obs: Vec<_> = simulate_observations(&truth, &[0.1, 0.2])
            .unwrap()
            .into_iter()
            .filter(|o| !(o.tracked == 0 && o.applied[2] != 0.0))
            .collect();
        let err = calibrate_crosstalk(&obs).unwrap_err().to_string();
        assert!(err.contains("flux 1 against channel 3"), "{err}");
    }

    #[test]
    fn arch_top_and_flat() {
        let pts: Vec<(f64, f64)> =
            (0..31).map(|k| -0.05 + 0.01 * k as f64).map(|x| (x, transmon_arch(20.0, 0.25, 0.1, x))).collect();
        let fit = extract_sweetspot(&pts).unwrap();
        assert!((fit.phi_off - 0.1).abs() < 1e-6);
        assert_eq!(fit.kind, SweetspotKind::Top);
        let flat: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 * 0.01, 5.0)).collect();
        assert!(matches!(extract_sweetspot(&flat), Err(Error::Fit(_))));
    }

    #[test]
    fn empty_mask_reports_forward_residual() {
        let p = CircuitParams::fitted_device();
        let data = vec![SpectrumPoint {
            flux_channel: FluxChannel::Phi3,
            flux_value: 0.0,
            transition: Transition::Minus,
            freq_ghz: 6.5,
            weight: 1.0,
        }];
        let f = forward(&p, &data, &ForwardModel::Simplified).unwrap()[0];
        let r = fit_circuit_params(&data, &p, &[], &FitOptions::default()).unwrap();
        assert_eq!(r.evaluations, 0);
        assert!((r.residual_mhz - (f - 6.5).abs() * 1e3).abs() < 1e-9);
    }
}
