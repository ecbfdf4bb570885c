use std::path::{Path, PathBuf};

use nlcoupler::calibration::{
    calibrate_crosstalk, fit_circuit_params, residual_crosstalk, simulate_observations,
    CrosstalkMatrix, FitOptions, SpectrumPoint, SweetspotObservation,
};
use nlcoupler::classical::mode_sweep;
use nlcoupler::effective::coupling_sweep;
use nlcoupler::hamiltonian::{full_spectrum, FockConfig, LabeledSpectrum};
use nlcoupler::spectroscopy::{
    add_noise, avoided_crossing_scan, coupler_points, cross_kerr_observable, fit_crossing,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{write_report, Provenance, Table};

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    pub provenance: Provenance,
}

impl Context<'_> {
    fn table(&self, stem: &str, columns: &[&str]) -> Result<Table> {
        Table::create(self.out, stem, self.cfg.output.format, &self.provenance, columns)
    }
}

pub fn run(command: Command, ctx: &Context<'_>) -> Result<Vec<PathBuf>> {
    match command {
        Command::Modes => modes(ctx),
        Command::Spectrum => spectrum(ctx),
        Command::Couplings => couplings(ctx),
        Command::Crossing => crossing(ctx),
        Command::Kerr => kerr(ctx),
        Command::Fit => fit(ctx),
        Command::Calibrate => calibrate(ctx),
    }
}

/// Evaluates `f` over `items` in parallel blocks, writing each block in order
/// before starting the next. On error the rows written so far are kept.
fn stream<T: Sync, R: Send>(
    table: Table,
    items: &[T],
    f: impl Fn(&T) -> nlcoupler::Result<R> + Sync,
    mut write: impl FnMut(&mut Table, &R) -> Result<()>,
) -> Result<PathBuf> {
    let mut table = table;
    let block = rayon::current_num_threads().max(1);
    for chunk in items.chunks(block) {
        let results: Vec<nlcoupler::Result<R>> = chunk.par_iter().map(&f).collect();
        for r in results {
            match r {
                Ok(r) => write(&mut table, &r)?,
                Err(e) => {
                    table.flush()?;
                    let path = table.finish(false)?;
                    return Err(CliError::Runtime(format!("{e} (partial output in {})", path.display())));
                }
            }
        }
        table.flush()?;
    }
    table.finish(true)
}

fn modes(ctx: &Context<'_>) -> Result<Vec<PathBuf>> {
    let rows = mode_sweep(&ctx.cfg.params(), &ctx.cfg.modes.phi3.values())?;
    let mut t = ctx.table("modes", &["phi3", "f_sym_ghz", "f_antisym_ghz", "f_slosh_ghz", "f_rigid_ghz"])?;
    for r in rows {
        t.push(&[r.phi3, r.f_sym, r.f_antisym, r.f_slosh, r.f_rigid])?;
    }
    Ok(vec![t.finish(true)?])
}

fn level_row(phi3: f64, q: &nlcoupler::circuit::CircuitParams, s: &LabeledSpectrum, levels: usize) -> Vec<f64> {
    let d = &s.derived;
    let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let mut row = vec![
        phi3,
        q.phi1,
        q.phi2,
        nan(d.omega_minus),
        nan(d.omega_plus),
        nan(d.omega_10),
        nan(d.omega_01),
        nan(d.omega_slosh),
        nan(d.omega_11),
        s.edge_population,
    ];
    row.extend((1..levels).map(|k| s.levels.get(k).map_or(f64::NAN, |l| l.energy)));
    row
}

fn spectrum(ctx: &Context<'_>) -> Result<Vec<PathBuf>> {
    let sec = &ctx.cfg.spectrum;
    let phi3 = sec.phi3.values();
    let points = coupler_points(&ctx.cfg.params(), &phi3, sec.retune)?;
    let mut columns: Vec<String> = [
        "phi3", "phi1", "phi2", "omega_minus", "omega_plus", "omega_10", "omega_01", "omega_slosh",
        "omega_11", "edge_population",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    columns.extend((1..sec.levels).map(|k| format!("level_{k}")));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let table = ctx.table("spectrum", &cols)?;
    let fock: FockConfig = ctx.cfg.fock;
    let items: Vec<(f64, nlcoupler::circuit::CircuitParams)> = phi3.iter().copied().zip(points).collect();
    let path = stream(
        table,
        &items,
        |(x, q)| full_spectrum(q, &fock, sec.levels).map(|s| (*x, *q, s)),
        |t, (x, q, s)| t.push(&level_row(*x, q, s, sec.levels)),
    )?;
    Ok(vec![path])
}

fn couplings(ctx: &Context<'_>) -> Result<Vec<PathBuf>> {
    let sec = &ctx.cfg.couplings;
    let rows = coupling_sweep(&ctx.cfg.params(), &sec.phi3.values(), &sec.options)?;
    let mut t = ctx.table(
        "couplings",
        &["phi3", "j_cap_mhz", "j_ind_mhz", "j_total_mhz", "v_mhz", "u_mhz", "omega1_ghz", "omega2_ghz"],
    )?;
    for r in rows {
        t.push(&[r.phi3, r.j_cap_mhz, r.j_ind_mhz, r.j_total_mhz, r.v_mhz, r.u_mhz, r.omega1_ghz, r.omega2_ghz])?;
    }
    Ok(vec![t.finish(true)?])
}

fn crossing(ctx: &Context<'_>) -> Result<Vec<PathBuf>> {
    let phi1 = ctx.cfg.crossing.phi1.values();
    let p = nlcoupler::circuit::CircuitParams { phi2: ctx.cfg.crossing.phi2, ..ctx.cfg.params() };
    let scan = avoided_crossing_scan(&p, &ctx.cfg.fock, &phi1)?;
    let branches = scan.qubit_branches()?;
    let weights = scan.qubit1_weights();
    let mut t = ctx.table("crossing", &["phi1", "lower_ghz", "upper_ghz", "gap_mhz", "qubit1_weight_lower", "qubit1_weight_upper"])?;
    for ((x, (l, u)), (wl, wu)) in phi1.iter().zip(&branches).zip(&weights) {
        t.push(&[*x, *l, *u, (u - l) * 1e3, *wl, *wu])?;
    }
    let mut files = vec![t.finish(true)?];
    let fit = fit_crossing(&scan)?;
    files.push(write_report(ctx.out, "crossing_fit", &ctx.provenance, &fit)?);
    Ok(files)
}

fn kerr(ctx: &Context<'_>) -> Result<Vec<PathBuf>> {
    let sec = &ctx.cfg.kerr;
    let p = ctx.cfg.params();
    let fock = FockConfig { linear_coupler: sec.disable_v || ctx.cfg.fock.linear_coupler, ..ctx.cfg.fock };
    let table = ctx.table("kerr", &["phi3", "j_mhz", "omega_plus", "omega_minus", "omega_11", "ratio"])?;
    let phi3 = sec.phi3.values();
    let path = stream(
        table,
        &phi3,
        |&x| cross_kerr_observable(&p, &fock, &[x], &sec.source),
        |t, pts| {
            for k in pts {
                t.push(&[k.phi3, k.j * 1e3, k.omega_plus, k.omega_minus, k.omega_11, k.ratio])?;
            }
            Ok(())
        },
    )?;
    Ok(vec![path])
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Config(format!("{}, line {line}: {e}", path.display()))
        })
}

fn fit(ctx: &Context<'_>) -> Result<Vec<PathBuf>> {
    let sec = ctx.cfg.fit.as_ref().expect("validated");
    let data: Vec<SpectrumPoint> = read_csv(&sec.data)?;
    let opts = FitOptions { seed: ctx.cfg.seed, ..sec.options };
    let report = fit_circuit_params(&data, &ctx.cfg.params(), &sec.free, &opts)?;
    Ok(vec![write_report(ctx.out, "fit_report", &ctx.provenance, &report)?])
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ObservationRow {
    /// Tracked flux, 1-based.
    tracked: usize,
    offset: f64,
    applied_1: f64,
    applied_2: f64,
    applied_3: f64,
}

#[derive(Debug, Serialize)]
struct CalibrationReport {
    crosstalk: CrosstalkMatrix,
    /// Inverse of the crosstalk matrix: applied = map · (target − offsets).
    orthogonalizing_map: [[f64; 3]; 3],
    observations: usize,
    /// Largest residual slope after applying the calibration to the truth,
    /// available for synthetic input.
    closure_slope: Option<f64>,
    max_entry_error: Option<f64>,
}

fn calibrate(ctx: &Context<'_>) -> Result<Vec<PathBuf>> {
    let sec = ctx.cfg.calibrate.as_ref().expect("validated");
    let mut truth = None;
    let obs: Vec<SweetspotObservation> = match (&sec.observations, &sec.synthetic) {
        (Some(path), _) => read_csv::<ObservationRow>(path)?
            .into_iter()
            .map(|r| {
                if !(1..=3).contains(&r.tracked) {
                    return Err(CliError::Config(format!("{}: tracked must be 1, 2 or 3", path.display())));
                }
                Ok(SweetspotObservation {
                    tracked: r.tracked - 1,
                    offset: r.offset,
                    applied: [r.applied_1, r.applied_2, r.applied_3],
                })
            })
            .collect::<Result<_>>()?,
        (None, Some(s)) => {
            let m = nalgebra::Matrix3::from_fn(|i, j| s.matrix[i][j]);
            let t = CrosstalkMatrix { m, offsets: nalgebra::Vector3::from(s.offsets) };
            let mut obs = simulate_observations(&t, &s.settings)?;
            let mut offsets: Vec<f64> = obs.iter().map(|o| o.offset).collect();
            add_noise(&mut offsets, s.noise, ctx.cfg.seed)?;
            for (o, v) in obs.iter_mut().zip(offsets) {
                o.offset = v;
            }
            truth = Some(t);
            obs
        }
        (None, None) => unreachable!("validated"),
    };
    let mut t = ctx.table("observations", &["tracked", "offset", "applied_1", "applied_2", "applied_3"])?;
    for o in &obs {
        t.push(&[(o.tracked + 1) as f64, o.offset, o.applied[0], o.applied[1], o.applied[2]])?;
    }
    let mut files = vec![t.finish(true)?];
    let rec = calibrate_crosstalk(&obs)?;
    let map = rec.orthogonalizing_map()?;
    let (closure_slope, max_entry_error) = match &truth {
        Some(t) => (
            Some(residual_crosstalk(&t.through(&rec)?)),
            Some((rec.m - t.m).abs().max().max((rec.offsets - t.offsets).abs().max())),
        ),
        None => (None, None),
    };
    let report = CalibrationReport {
        crosstalk: rec,
        orthogonalizing_map: std::array::from_fn(|i| std::array::from_fn(|j| map[(i, j)])),
        observations: obs.len(),
        closure_slope,
        max_entry_error,
    };
    files.push(write_report(ctx.out, "crosstalk", &ctx.provenance, &report)?);
    Ok(files)
}
