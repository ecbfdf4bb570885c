//! Synthetic flux-sweep spectroscopy: avoided-crossing scans and fits, the
//! resonant spectrum against coupler flux and the cross-Kerr observable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::effective::{couplings_for, EffectiveOptions};
use crate::error::{Error, Result};
use crate::hamiltonian::{full_spectrum, FockConfig, LabeledSpectrum, StateLabel};
use crate::lsq;

/// Levels computed per point of a one-excitation scan.
pub const SCAN_LEVELS: usize = 8;
/// Levels computed per point when the two-excitation manifold is needed.
pub const TWO_EXCITATION_LEVELS: usize = 24;
/// Points with |J| below this (GHz) are dropped from the Kerr observable.
pub const MIN_HOPPING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Phi1,
    Phi2,
    Phi3,
}

impl SweepAxis {
    fn apply(self, p: &CircuitParams, x: f64) -> CircuitParams {
        let mut q = *p;
        match self {
            SweepAxis::Phi1 => q.phi1 = x,
            SweepAxis::Phi2 => q.phi2 = x,
            SweepAxis::Phi3 => q.phi3 = x,
        }
        q
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub spectra: Vec<LabeledSpectrum>,
    /// Parameters at the first point; with retuning, `points` holds the rest.
    pub params: CircuitParams,
    pub points: Vec<CircuitParams>,
    pub fock: FockConfig,
    /// `tracks[k][n]`: continuous track of level n at point k, numbered by
    /// level order at the first point.
    pub tracks: Vec<Vec<usize>>,
}

impl SweepResult {
    /// Whether every point passed the truncation edge-population check.
    pub fn all_converged(&self) -> bool {
        self.spectra.iter().all(LabeledSpectrum::truncation_converged)
    }

    /// Adiabatic (lower, upper) one-excitation transmon branches.
    pub fn qubit_branches(&self) -> Result<Vec<(f64, f64)>> {
        self.spectra
            .iter()
            .enumerate()
            .map(|(k, s)| {
                one_excitation_pair(s).ok_or_else(|| {
                    Error::Precondition(format!(
                        "one-excitation transmon pair not identified at point {k}"
                    ))
                })
            })
            .collect()
    }

    /// Probability on |100⟩ of the (lower, upper) branch, showing the
    /// character exchange through the crossing.
    pub fn qubit1_weights(&self) -> Vec<(f64, f64)> {
        self.spectra
            .iter()
            .map(|s| {
                let idx = pair_indices(s);
                let w = |n: Option<usize>| n.map_or(f64::NAN, |n| qubit1_weight(s, n));
                (w(idx.map(|p| p.0)), w(idx.map(|p| p.1)))
            })
            .collect()
    }
}

fn pair_indices(s: &LabeledSpectrum) -> Option<(usize, usize)> {
    let single = [
        StateLabel::bare(1, 0, 0),
        StateLabel::bare(0, 1, 0),
        StateLabel::Plus,
        StateLabel::Minus,
    ];
    let mut found: Vec<usize> =
        (0..s.levels.len()).filter(|&n| single.contains(&s.levels[n].label)).collect();
    if found.len() != 2 {
        return None;
    }
    found.sort_by(|&a, &b| s.levels[a].energy.total_cmp(&s.levels[b].energy));
    Some((found[0], found[1]))
}

fn one_excitation_pair(s: &LabeledSpectrum) -> Option<(f64, f64)> {
    pair_indices(s).map(|(l, u)| (s.levels[l].energy, s.levels[u].energy))
}

fn qubit1_weight(s: &LabeledSpectrum, n: usize) -> f64 {
    s.bare_states[n][s.bare_index(1, 0, 0)].powi(2)
}

fn validate_axis(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one point".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("sweep values must be finite".into()));
    }
    let up = values.windows(2).all(|w| w[1] > w[0]);
    let down = values.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::Config("sweep axis must be strictly monotone".into()));
    }
    Ok(())
}

fn run_sweep(
    axis: SweepAxis,
    points: Vec<CircuitParams>,
    values: &[f64],
    cfg: &FockConfig,
    levels: usize,
) -> Result<SweepResult> {
    let spectra = points
        .par_iter()
        .map(|q| full_spectrum(q, cfg, levels))
        .collect::<Result<Vec<_>>>()?;
    let tracks = continue_tracks(&spectra);
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        spectra,
        params: points[0],
        points,
        fock: *cfg,
        tracks,
    })
}

/// Adiabatic continuation: each level inherits the track of the previous
/// point's level with which it has the largest eigenvector overlap.
fn continue_tracks(spectra: &[LabeledSpectrum]) -> Vec<Vec<usize>> {
    let mut tracks: Vec<Vec<usize>> = Vec::with_capacity(spectra.len());
    for (k, s) in spectra.iter().enumerate() {
        let n = s.states.len();
        if k == 0 {
            tracks.push((0..n).collect());
            continue;
        }
        let prev = &spectra[k - 1];
        let mut pairs = Vec::new();
        for (i, u) in prev.states.iter().enumerate() {
            for (j, v) in s.states.iter().enumerate() {
                let o: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                pairs.push((o.abs(), i, j));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut here = vec![usize::MAX; n];
        let mut taken = vec![false; prev.states.len()];
        for (_, i, j) in pairs {
            if here[j] == usize::MAX && !taken[i] {
                here[j] = tracks[k - 1][i];
                taken[i] = true;
            }
        }
        let mut next = tracks[k - 1].iter().copied().max().map_or(0, |m| m + 1);
        for t in &mut here {
            if *t == usize::MAX {
                *t = next;
                next += 1;
            }
        }
        tracks.push(here);
    }
    tracks
}

/// Sweeps Φ₁ at fixed Φ₂ and Φ₃.
pub fn avoided_crossing_scan(p: &CircuitParams, cfg: &FockConfig, phi1: &[f64]) -> Result<SweepResult> {
    validate_axis(phi1)?;
    p.validate()?;
    let points = phi1.iter().map(|&x| SweepAxis::Phi1.apply(p, x)).collect();
    run_sweep(SweepAxis::Phi1, points, phi1, cfg, SCAN_LEVELS)
}

/// How the transmon fluxes follow a coupler sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retune {
    /// Φ₁, Φ₂ held fixed.
    #[default]
    Fixed,
    /// Φ₁, Φ₂ moved so that each folded transmon Josephson energy keeps its
    /// value at the first coupler flux.
    MatchJosephson,
}

/// Transmon flux with the requested bare Josephson energy, same sign as `phi`.
fn flux_for_energy(e_max: f64, asym: f64, target: f64, phi: f64) -> Result<f64> {
    let e = |x: f64| {
        let c = (std::f64::consts::PI * x).cos();
        let s = (std::f64::consts::PI * x).sin();
        e_max * (c * c + asym * asym * s * s).sqrt()
    };
    if target > e_max * (1.0 + 1e-12) || target < e(0.5) * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "retuning needs a transmon Josephson energy of {target} GHz, outside the SQUID range"
        )));
    }
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if e(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let base = 0.5 * (lo + hi);
    let offset = phi.round();
    Ok(offset + if phi - offset < 0.0 { -base } else { base })
}

fn retuned(p: &CircuitParams, phi3: f64, retune: Retune, start: &CircuitParams) -> Result<CircuitParams> {
    let mut q = p.with_phi3(phi3);
    if retune == Retune::MatchJosephson {
        let shift = (start.ej_c() - q.ej_c()) / 4.0;
        q.phi1 = flux_for_energy(q.ej1_max, q.transmon_asymmetry, start.ej1() + shift, q.phi1)?;
        q.phi2 = flux_for_energy(q.ej2_max, q.transmon_asymmetry, start.ej2() + shift, q.phi2)?;
    }
    Ok(q)
}

/// Spectrum against Φ₃. `levels` sets how many eigenpairs are kept; use
/// [`TWO_EXCITATION_LEVELS`] to include the doubly excited transmon states.
pub fn resonant_spectrum_vs_coupler(
    p: &CircuitParams,
    cfg: &FockConfig,
    phi3: &[f64],
    retune: Retune,
    levels: usize,
) -> Result<SweepResult> {
    let points = coupler_points(p, phi3, retune)?;
    run_sweep(SweepAxis::Phi3, points, phi3, cfg, levels)
}

/// Circuit parameters at each coupler flux of a sweep, retuned as requested.
pub fn coupler_points(p: &CircuitParams, phi3: &[f64], retune: Retune) -> Result<Vec<CircuitParams>> {
    validate_axis(phi3)?;
    p.validate()?;
    let start = p.with_phi3(phi3[0]);
    phi3.iter().map(|&x| retuned(p, x, retune, &start)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingFit {
    /// |J|, GHz.
    pub j: f64,
    /// J with the sign of the effective model, when parameters are known.
    pub j_signed: Option<f64>,
    pub phi_resonance: f64,
    /// RMS branch residual, GHz.
    pub residual: f64,
    pub omega2: f64,
    /// ω₁(Φ) = c₀ + c₁(Φ − Φ̄) + c₂(Φ − Φ̄)².
    pub omega1_coeffs: [f64; 3],
    pub phi_center: f64,
    pub min_gap: f64,
}

/// Branches E± of a two-level crossing.
pub fn crossing_branches(omega1: f64, omega2: f64, j: f64) -> (f64, f64) {
    let mean = 0.5 * (omega1 + omega2);
    let half = (0.25 * (omega1 - omega2).powi(2) + j * j).sqrt();
    (mean - half, mean + half)
}

/// Fits (lower, upper) branches against flux to the two-level form with
/// quadratic ω₁(Φ) and constant ω₂.
pub fn fit_branches(phi: &[f64], lower: &[f64], upper: &[f64]) -> Result<CrossingFit> {
    let n = phi.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Fit("branch lengths differ from the flux axis".into()));
    }
    if n < 5 {
        return Err(Error::Fit(format!("crossing fit needs at least 5 points, got {n}")));
    }
    validate_axis(phi).map_err(|e| Error::Fit(e.to_string()))?;
    let gaps: Vec<f64> = upper.iter().zip(lower).map(|(u, l)| u - l).collect();
    let kmin = (0..n).min_by(|&a, &b| gaps[a].total_cmp(&gaps[b])).expect("n >= 5");
    if kmin == 0 || kmin == n - 1 {
        return Err(Error::Fit("no gap minimum inside the scan range".into()));
    }

    // D² − S² = −4ω₂S + 4(ω₂² + J²) with S = E₊ + E₋ and D = E₊ − E₋.
    let s: Vec<f64> = upper.iter().zip(lower).map(|(u, l)| u + l).collect();
    let y: Vec<f64> = gaps.iter().zip(&s).map(|(d, s)| d * d - s * s).collect();
    let s_mean = s.iter().sum::<f64>() / n as f64;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = s.iter().map(|v| (v - s_mean).powi(2)).sum();
    let sxy: f64 = s.iter().zip(&y).map(|(a, b)| (a - s_mean) * (b - y_mean)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("branches do not move with flux".into()));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * s_mean;
    let omega2 = -slope / 4.0;
    let j0 = (intercept / 4.0 - omega2 * omega2).max(0.0).sqrt();

    let phi_center = phi.iter().sum::<f64>() / n as f64;
    let t: Vec<f64> = phi.iter().map(|p| p - phi_center).collect();
    let design = nalgebra::DMatrix::from_fn(n, 3, |i, k| t[i].powi(k as i32));
    let rhs = nalgebra::DVector::from_iterator(n, s.iter().map(|v| v - omega2));
    let coeffs = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Fit(format!("quadratic seed failed: {e}")))?;

    let model = |x: &[f64]| -> Option<Vec<f64>> {
        let mut r = Vec::with_capacity(2 * n);
        for i in 0..n {
            let w1 = x[0] + x[1] * t[i] + x[2] * t[i] * t[i];
            let (l, u) = crossing_branches(w1, x[3], x[4]);
            r.push(l - lower[i]);
            r.push(u - upper[i]);
        }
        Some(r)
    };
    let x0 = [coeffs[0], coeffs[1], coeffs[2], omega2, j0];
    let seed_cost: f64 = model(&x0).expect("finite").iter().map(|r| r * r).sum();
    let refined = lsq::minimize(&model, &x0, 1e-8, 1e-15, 400)
        .filter(|s| s.cost <= seed_cost)
        .map(|s| s.x)
        .unwrap_or_else(|| x0.to_vec());
    let cost: f64 = model(&refined).expect("finite").iter().map(|r| r * r).sum();

    let c = [refined[0], refined[1], refined[2]];
    let w2 = refined[3];
    let roots = quadratic_roots(c[2], c[1], c[0] - w2);
    let (lo, hi) = (t.iter().cloned().fold(f64::INFINITY, f64::min), t.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let t_gap = t[kmin];
    let t_res = roots
        .into_iter()
        .filter(|r| (lo..=hi).contains(r))
        .min_by(|a, b| (a - t_gap).abs().total_cmp(&(b - t_gap).abs()))
        .unwrap_or(t_gap);
    Ok(CrossingFit {
        j: refined[4].abs(),
        j_signed: None,
        phi_resonance: phi_center + t_res,
        residual: (cost / (2 * n) as f64).sqrt(),
        omega2: w2,
        omega1_coeffs: c,
        phi_center,
        min_gap: gaps[kmin],
    })
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-300 {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut out = vec![q / a];
    if q != 0.0 {
        out.push(c / q);
    }
    out
}

/// Fits the transmon branches of a Φ₁ or Φ₂ scan; the sign of J is taken
/// from the effective model at the resonance point.
pub fn fit_crossing(s: &SweepResult) -> Result<CrossingFit> {
    if s.axis == SweepAxis::Phi3 {
        return Err(Error::Fit("crossing fits need a transmon-flux sweep".into()));
    }
    let branches = s.qubit_branches()?;
    let lower: Vec<f64> = branches.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = branches.iter().map(|b| b.1).collect();
    let mut fit = fit_branches(&s.values, &lower, &upper)?;
    let at = s.axis.apply(&s.params, fit.phi_resonance);
    fit.j_signed = couplings_for(&at, &EffectiveOptions::default())
        .ok()
        .map(|c| fit.j.copysign(c.j_total));
    Ok(fit)
}

/// Source of J in the Kerr observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JSource {
    /// j_total of the effective model.
    Effective,
    /// (ω₋ − ω₊)/2 of the same resonant spectrum.
    Splitting,
    /// Signed fit of a Φ₁ scan over the given fluxes at each coupler flux.
    CrossingFit { phi1: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KerrPoint {
    pub phi3: f64,
    pub j: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub omega_11: f64,
    /// (ω₁₁ − ω₋ − ω₊)/|J|.
    pub ratio: f64,
}

/// The resonant Kerr observable along Φ₃. Set `cfg.linear_coupler` for the
/// V = 0 reference. Points with |J| < [`MIN_HOPPING`] are skipped.
pub fn cross_kerr_observable(
    p: &CircuitParams,
    cfg: &FockConfig,
    phi3: &[f64],
    source: &JSource,
) -> Result<Vec<KerrPoint>> {
    let sweep = resonant_spectrum_vs_coupler(p, cfg, phi3, Retune::Fixed, TWO_EXCITATION_LEVELS)?;
    let mut out = Vec::new();
    for (k, spec) in sweep.spectra.iter().enumerate() {
        let d = &spec.derived;
        let (Some(wp), Some(wm), Some(w11)) = (d.omega_plus, d.omega_minus, d.omega_11) else {
            return Err(Error::Precondition(format!(
                "ω±/ω₁₁ not identified at Φ₃ = {}",
                phi3[k]
            )));
        };
        let q = sweep.points[k];
        let j = match source {
            JSource::Effective => couplings_for(&q, &EffectiveOptions::default())?.j_total,
            JSource::Splitting => 0.5 * (wm - wp),
            JSource::CrossingFit { phi1 } => {
                let fit = fit_crossing(&avoided_crossing_scan(&q, cfg, phi1)?)?;
                fit.j_signed.unwrap_or(fit.j)
            }
        };
        if j.abs() < MIN_HOPPING {
            continue;
        }
        out.push(KerrPoint {
            phi3: phi3[k],
            j,
            omega_plus: wp,
            omega_minus: wm,
            omega_11: w11,
            ratio: (w11 - wm - wp) / j.abs(),
        });
    }
    Ok(out)
}

/// Adds seeded zero-mean Gaussian noise of width `sigma` (GHz).
pub fn add_noise(values: &mut [f64], sigma: f64, seed: u64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in values {
        *v += normal.sample(&mut rng);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(j: f64, omega2: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let phi: Vec<f64> = (0..41).map(|k| -0.1 + 0.005 * k as f64).collect();
        let (mut lo, mut hi) = (vec![], vec![]);
        for &x in &phi {
            let w1 = omega2 + 0.8 * (x - 0.02) - 3.0 * (x - 0.02).powi(2);
            let (l, u) = crossing_branches(w1, omega2, j);
            lo.push(l);
            hi.push(u);
        }
        (phi, lo, hi)
    }

    #[test]
    fn recovers_generator_coupling() {
        let (phi, lo, hi) = synthetic(0.030, 6.6);
        let fit = fit_branches(&phi, &lo, &hi).unwrap();
        assert!((fit.j - 0.030).abs() < 1e-9, "{}", fit.j);
        assert!((fit.phi_resonance - 0.02).abs() < 1e-9);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn zero_coupling_is_recovered() {
        let (phi, lo, hi) = synthetic(0.0, 6.6);
        let fit = fit_branches(&phi, &lo, &hi).unwrap();
        assert!(fit.j < 1e-3);
    }

    #[test]
    fn edge_minimum_is_rejected() {
        let (phi, lo, hi) = synthetic(0.03, 6.6);
        let cut = 10;
        assert!(matches!(
            fit_branches(&phi[..cut], &lo[..cut], &hi[..cut]),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn axis_must_be_monotone() {
        assert!(validate_axis(&[0.0, 0.1, 0.1]).is_err());
        assert!(validate_axis(&[0.2, 0.1, 0.0]).is_ok());
    }

    #[test]
    fn noise_is_seeded() {
        let mut a = vec![0.0; 5];
        let mut b = vec![0.0; 5];
        add_noise(&mut a, 1e-3, 7).unwrap();
        add_noise(&mut b, 1e-3, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn retuning_holds_folded_energy() {
        let p = CircuitParams { phi1: 0.15, phi2: 0.15, ..CircuitParams::fitted_device() };
        let q = retuned(&p, 0.25, Retune::MatchJosephson, &p).unwrap();
        let folded = |x: &CircuitParams| x.ej1() + x.ej_c() / 4.0;
        assert!((folded(&q) - folded(&p)).abs() < 1e-9);
    }
}
