//! Subcommand bodies. Every error returned here is a data error.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pairscope_core::bell::{
    bell_test, polarization_scans, region_records, shared_shape, spatial_bell, uniformity_test, PhotonRun, RunRecord, SpatialParams, SpatialSMatrix, SubareaGrid, Uniformity,
    MIN_SCAN_SETTINGS,
};
use pairscope_core::bench::{bench_events, run_benchmark};
use pairscope_core::fit::{fit_coincidence_peak, fit_state, gaussian_area, state, StateCurve};
use pairscope_core::io::report::{correlation_rows, scan_rows, write_report, ReportSummary};
use pairscope_core::io::{read_csv, read_events, read_histogram, read_photons, read_walk_table, write_events, write_histogram, write_json, write_photons, write_truth, write_walk_table, AnalysisSpec, RunEntry, RunManifest};
use pairscope_core::pipeline::{
    build_walk_table, cluster_chunked, default_regions, dtoa_spread, find_coincidences, find_hot_pixels, mask_hot_pixels, process as run_process, time_order, CoincidenceParams, Photon, PixelMask,
    ProcessConfig,
};
use pairscope_core::quantum::{state_amplitudes, ChshAngles, PolarizerSetting, SValueReport, TwoPhotonState};
use pairscope_core::sim::{generate_run, DetectorConfig, SourceConfig, TruthLevel};

use crate::{BellArgs, BenchArgs, CoincideArgs, FitStateArgs, ProcessArgs, ReportArgs, SimulateArgs, SpatialBellArgs, WalkTableArgs};

pub type CmdResult = Result<(), Box<dyn Error>>;

const DEFAULT_CHSH_DEG: [f64; 4] = [0.0, 45.0, 22.5, 67.5];
const DEFAULT_GRID: [u16; 2] = [3, 3];
const MANIFEST: &str = "manifest.toml";

/// Polarizer angles agree modulo 180 degrees.
fn same_deg(a: f64, b: f64) -> bool {
    let d = (a - b) / 180.0;
    (d - d.round()).abs() < 1e-9
}

/// The sixteen runs of a CHSH test: each of the four settings with both
/// polarizers optionally turned by 90 degrees.
pub fn chsh_settings(deg: &[f64; 4]) -> Vec<(f64, f64)> {
    let [a, ap, b, bp] = *deg;
    let mut out: Vec<(f64, f64)> = vec![];
    for (x, y) in [(a, b), (ap, b), (a, bp), (ap, bp)] {
        for (dx, dy) in [(0.0, 0.0), (0.0, 90.0), (90.0, 0.0), (90.0, 90.0)] {
            let s = (x + dx, y + dy);
            if !out.iter().any(|o| same_deg(o.0, s.0) && same_deg(o.1, s.1)) {
                out.push(s);
            }
        }
    }
    out
}

/// Alpha every 20 degrees at beta 0, 45, 90 and 135.
pub fn scan_settings() -> Vec<(f64, f64)> {
    [0.0, 45.0, 90.0, 135.0].iter().flat_map(|&b| (0..18).map(move |k| (k as f64 * 20.0, b))).collect()
}

fn run_name(k: usize, alpha: f64, beta: f64) -> String {
    format!("r{k:03}_a{alpha}_b{beta}").replace('-', "m")
}

/// Betas with enough distinct alphas to form a scan.
fn scan_betas(runs: &[RunEntry]) -> Vec<f64> {
    let mut betas: Vec<f64> = vec![];
    for r in runs {
        if !betas.iter().any(|&b| same_deg(b, r.beta_deg)) {
            betas.push(r.beta_deg);
        }
    }
    betas
        .into_iter()
        .filter(|&b| {
            let mut alphas: Vec<f64> = runs.iter().filter(|r| same_deg(r.beta_deg, b)).map(|r| r.alpha_deg).collect();
            alphas.sort_by(f64::total_cmp);
            alphas.dedup();
            alphas.len() >= MIN_SCAN_SETTINGS
        })
        .collect()
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Box<dyn Error>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()).into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SourceFile {
    theta: f64,
    delta: f64,
    pair_rate: f64,
    duration: f64,
    seed: u64,
}

impl Default for SourceFile {
    fn default() -> Self {
        let s = SourceConfig::default();
        Self {
            theta: s.state.theta,
            delta: s.state.delta,
            pair_rate: s.pair_rate,
            duration: s.duration,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimFile {
    source: SourceFile,
    detector: DetectorConfig,
}

pub fn simulate(a: SimulateArgs) -> CmdResult {
    let file: SimFile = match &a.config {
        Some(p) => read_toml(p)?,
        None => SimFile::default(),
    };
    let mut src = file.source;
    let mut det = file.detector;
    src.theta = a.theta.unwrap_or(src.theta);
    src.delta = a.delta.unwrap_or(src.delta);
    src.pair_rate = a.pair_rate.unwrap_or(src.pair_rate);
    src.duration = a.duration.unwrap_or(src.duration);
    src.seed = a.seed.unwrap_or(src.seed);
    det.dark_rate = a.dark_rate.unwrap_or(det.dark_rate);
    det.qe = a.qe.unwrap_or(det.qe);
    if let Some(t) = a.truth {
        det.truth = t.into();
    }
    det.validate()?;
    create_dir(&a.out_dir)?;

    let mut runs = vec![];
    for (k, &(alpha, beta)) in a.settings.0.iter().enumerate() {
        let name = run_name(k, alpha, beta);
        let cfg = SourceConfig {
            state: TwoPhotonState::new(src.theta, src.delta),
            pair_rate: src.pair_rate,
            duration: src.duration,
            seed: src.seed.wrapping_add(k as u64),
        };
        let run = generate_run(&cfg, &det, &PolarizerSetting::from_degrees(alpha, beta))?;
        let mut entry = RunEntry::new(&name, alpha, beta, src.duration);
        entry.seed = Some(cfg.seed);
        let events = format!("{name}.pxe1");
        write_events(a.out_dir.join(&events), run.sensor_size, run.timebase, &run.events)?;
        entry.events = Some(events.into());
        if det.truth != TruthLevel::None {
            let truth = format!("{name}.truth.csv");
            write_truth(a.out_dir.join(&truth), &run.truth)?;
            entry.truth = Some(truth.into());
        }
        println!("{name}: alpha {alpha} deg, beta {beta} deg, {} events", run.events.len());
        runs.push(entry);
    }
    let betas = scan_betas(&runs);
    let manifest = RunManifest {
        analysis: AnalysisSpec {
            regions: Some(det.default_regions()),
            grid: a.grid,
            chsh_deg: Some(DEFAULT_CHSH_DEG),
            scan_betas_deg: (!betas.is_empty()).then_some(betas),
            coincidence: None,
            hot_pixels: det.hot_pixels().into_iter().map(|(x, y)| [x, y]).collect(),
        },
        runs,
        base_dir: a.out_dir.clone(),
    };
    manifest.save(a.out_dir.join(MANIFEST))?;
    println!("wrote {}", a.out_dir.join(MANIFEST).display());
    Ok(())
}

/// Processing configuration with the manifest's regions, pairing and
/// hot-pixel list taking precedence over the file.
fn process_config(config: Option<&PathBuf>, m: Option<&RunManifest>) -> Result<ProcessConfig, Box<dyn Error>> {
    let mut cfg: ProcessConfig = match config {
        Some(p) => read_toml(p)?,
        None => ProcessConfig::default(),
    };
    if let Some(m) = m {
        if let Some(r) = m.analysis.regions {
            cfg.regions = r;
        }
        if let Some(c) = m.analysis.coincidence {
            cfg.coincidence = c;
        }
        cfg.hot_pixels.extend(m.analysis.hot_pixels.iter().map(|p| (p[0], p[1])));
    }
    Ok(cfg)
}

fn absolute(p: &Path) -> Result<PathBuf, Box<dyn Error>> {
    fs::canonicalize(p).map_err(|e| format!("{}: {e}", p.display()).into())
}

/// Per-run numbers written by `process`.
#[derive(Debug, Clone, Serialize)]
struct ProcessRow {
    name: String,
    n_events: usize,
    n_masked: usize,
    n_clusters: usize,
    photons: [usize; 2],
    pairs: usize,
    coincidences: Option<f64>,
    sigma: Option<f64>,
    walk_bins_interpolated: usize,
}

pub fn process(a: ProcessArgs) -> CmdResult {
    let m = RunManifest::load(&a.manifest)?;
    let mut cfg = process_config(a.config.as_ref(), Some(&m))?;
    if a.no_walk {
        cfg.correct_walk = false;
    }
    let fixed_walk = a.walk.as_ref().map(read_walk_table).transpose()?;
    create_dir(&a.out_dir)?;

    let mut out = RunManifest {
        analysis: AnalysisSpec {
            regions: Some(cfg.regions),
            coincidence: Some(cfg.coincidence),
            ..m.analysis.clone()
        },
        runs: vec![],
        base_dir: a.out_dir.clone(),
    };
    let mut rows = vec![];
    let mut hists = vec![];
    for run in &m.runs {
        let mut entry = run.clone();
        let Some(events) = &run.events else {
            log::warn!("run {} has no event file; copied unchanged", run.name);
            out.runs.push(entry);
            continue;
        };
        let path = m.resolve(events);
        let (header, events) = read_events(&path)?;
        let mut run_cfg = cfg.clone();
        if let Some(f) = a.hot_pixel_factor {
            run_cfg.hot_pixels.extend(find_hot_pixels(&events, header.sensor_size(), f));
        }
        let res = run_process(events, &header.timebase, &run_cfg, fixed_walk.clone()).map_err(|e| format!("{}: {e}", path.display()))?;

        entry.events = Some(absolute(&path)?);
        if let Some(t) = &run.truth {
            entry.truth = Some(absolute(&m.resolve(t))?);
        }
        let photons = format!("{}.photons.csv", run.name);
        write_photons(a.out_dir.join(&photons), &res.photons)?;
        entry.photons = Some(photons.into());
        let hist = format!("{}.dt.csv", run.name);
        write_histogram(a.out_dir.join(&hist), &res.histogram)?;
        entry.histogram = Some(hist.into());
        if let Some(w) = &res.walk {
            write_walk_table(a.out_dir.join(format!("{}.walk.csv", run.name)), w)?;
        }
        entry.singles = Some([res.photons[0].len() as f64, res.photons[1].len() as f64]);
        entry.coincidences = None;
        entry.sigma = None;
        let secs = res.times.reconstruction() + res.times.coincide;
        println!(
            "{}: {} events, {} clusters, {}+{} photons, {} pairs ({:.2} M events/s)",
            run.name,
            res.n_events,
            res.n_clusters,
            res.photons[0].len(),
            res.photons[1].len(),
            res.pairs.len(),
            res.n_events as f64 / secs.max(1e-12) / 1e6
        );
        rows.push(ProcessRow {
            name: run.name.clone(),
            n_events: res.n_events,
            n_masked: res.n_masked,
            n_clusters: res.n_clusters,
            photons: [res.photons[0].len(), res.photons[1].len()],
            pairs: res.pairs.len(),
            coincidences: None,
            sigma: None,
            walk_bins_interpolated: res.walk.as_ref().map_or(0, |w| w.flagged_bins().len()),
        });
        hists.push((out.runs.len(), rows.len() - 1, res.histogram));
        out.runs.push(entry);
    }
    // counts of all runs share one peak shape
    let shape = shared_shape(hists.iter().map(|h| &h.2));
    if let Err(e) = &shape {
        log::warn!("no shared peak shape, fitting runs alone: {e}");
    }
    for (k, row, hist) in &hists {
        let entry = &mut out.runs[*k];
        let rec = match &shape {
            Ok(sh) => RunRecord::with_shape(entry.setting(), entry.duration_s, hist, sh),
            Err(_) => RunRecord::from_histogram(entry.setting(), entry.duration_s, hist),
        };
        match rec {
            Ok(r) => {
                entry.coincidences = Some(r.coincidences);
                entry.sigma = Some(r.sigma);
                rows[*row].coincidences = Some(r.coincidences);
                rows[*row].sigma = Some(r.sigma);
                println!("{}: N = {:.1} +- {:.1}", entry.name, r.coincidences, r.sigma);
            }
            Err(e) => log::warn!("run {}: no coincidence count: {e}", entry.name),
        }
    }
    out.save(a.out_dir.join(MANIFEST))?;
    write_json(a.out_dir.join("process_summary.json"), &rows)?;
    println!("wrote {}", a.out_dir.join(MANIFEST).display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct WalkSummary {
    clusters: usize,
    dtoa_rms_before: f64,
    dtoa_rms_after: f64,
    pixels: u64,
    bins_interpolated: Vec<usize>,
}

pub fn walk_table(a: WalkTableArgs) -> CmdResult {
    let m = a.manifest.as_ref().map(RunManifest::load).transpose()?;
    let cfg = process_config(a.config.as_ref(), m.as_ref())?;
    let (header, mut events) = read_events(&a.events)?;
    if !cfg.hot_pixels.is_empty() {
        mask_hot_pixels(&mut events, &PixelMask::new(header.sensor_size(), cfg.hot_pixels.iter().copied()));
    }
    time_order(&mut events);
    let tb = header.timebase;
    let set = cluster_chunked(&events, &tb, &cfg.cluster, cfg.chunk_ns);
    let table = build_walk_table(&set, &tb, &cfg.walk).map_err(|e| format!("{}: {e}", a.events.display()))?;
    write_walk_table(&a.out, &table)?;
    let before = dtoa_spread(&set, &tb, None);
    let after = dtoa_spread(&set, &tb, Some(&table));
    let summary = WalkSummary {
        clusters: set.len(),
        dtoa_rms_before: before.rms,
        dtoa_rms_after: after.rms,
        pixels: after.n,
        bins_interpolated: table.flagged_bins(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct CoincideSummary {
    photons: [usize; 2],
    pairs: usize,
    coincidences: Option<f64>,
    sigma: Option<f64>,
    peak_mean_ns: Option<f64>,
    peak_sigma_ns: Option<f64>,
}

fn sort_by_time(p: &mut [Photon]) {
    p.sort_by(|x, y| x.toa_corr.total_cmp(&y.toa_corr));
}

pub fn coincide(a: CoincideArgs) -> CmdResult {
    let [mut pa, mut pb] = read_photons(&a.photons)?;
    sort_by_time(&mut pa);
    sort_by_time(&mut pb);
    let params = CoincidenceParams {
        window_ns: a.window,
        bin_width_ns: a.bin_width,
    };
    let (pairs, hist) = find_coincidences(&pa, &pb, &params);
    write_histogram(&a.out, &hist)?;
    let fit = fit_coincidence_peak(&hist)
        .inspect_err(|e| log::warn!("{}: peak fit failed: {e}", a.photons.display()))
        .ok();
    let area = fit.as_ref().map(gaussian_area);
    let summary = CoincideSummary {
        photons: [pa.len(), pb.len()],
        pairs: pairs.len(),
        coincidences: area.map(|x| x.0),
        sigma: area.map(|x| x.1),
        peak_mean_ns: fit.as_ref().map(|f| f.params.mean),
        peak_sigma_ns: fit.as_ref().map(|f| f.params.sigma_core),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// One point of a coincidence curve.
#[derive(Debug, Clone, Copy, Deserialize)]
struct CountRow {
    alpha_deg: f64,
    beta_deg: f64,
    counts: f64,
}

#[derive(Debug, Serialize)]
struct StateSummary {
    theta: f64,
    sigma_theta: f64,
    delta: f64,
    sigma_delta: f64,
    n0: f64,
    sigma_n0: f64,
    nd: f64,
    sigma_nd: f64,
    /// Amplitude on phi+, then real and imaginary parts on phi-.
    amplitude_phi_plus: f64,
    amplitude_phi_minus: [f64; 2],
    chi2: f64,
    dof: usize,
}

pub fn fit_state_cmd(a: FitStateArgs) -> CmdResult {
    let points: Vec<CountRow> = match (&a.counts, &a.manifest) {
        (Some(p), _) => read_csv(p)?,
        (None, Some(p)) => RunManifest::load(p)?
            .runs
            .iter()
            .filter_map(|r| {
                r.coincidences.map(|counts| CountRow {
                    alpha_deg: r.alpha_deg,
                    beta_deg: r.beta_deg,
                    counts,
                })
            })
            .collect(),
        (None, None) => unreachable!("clap requires one input"),
    };
    let mut curves: Vec<StateCurve> = vec![];
    for p in points {
        let alpha = p.alpha_deg.to_radians();
        match curves.iter_mut().find(|c| c.alpha == alpha) {
            Some(c) => c.points.push((p.beta_deg.to_radians(), p.counts)),
            None => curves.push(StateCurve {
                alpha,
                points: vec![(p.beta_deg.to_radians(), p.counts)],
            }),
        }
    }
    let fit = fit_state(&curves)?;
    let (plus, minus) = state_amplitudes(&fit.state);
    let s = &fit.fit.sigmas;
    let summary = StateSummary {
        theta: fit.state.theta,
        sigma_theta: s[state::THETA],
        delta: fit.state.delta,
        sigma_delta: s[state::DELTA],
        n0: fit.counts.n0,
        sigma_n0: s[state::N0],
        nd: fit.counts.nd,
        sigma_nd: s[state::ND],
        amplitude_phi_plus: plus.re,
        amplitude_phi_minus: [minus.re, minus.im],
        chi2: fit.fit.chi2,
        dof: fit.fit.dof,
    };
    println!(
        "theta = {:.4} +- {:.4} rad, delta = {:.4} +- {:.4} rad",
        summary.theta, summary.sigma_theta, summary.delta, summary.sigma_delta
    );
    println!("psi = {:.3} phi+ + ({:.3} {:+.3}i) phi-", plus.re, minus.re, minus.im);
    if let Some(out) = &a.out {
        write_json(out, &summary)?;
    }
    Ok(())
}

/// A count per run: the manifest's own, else a fit of its histogram with
/// the peak shape shared by all such runs.
fn manifest_records(m: &RunManifest) -> Result<Vec<RunRecord>, Box<dyn Error>> {
    let mut out = vec![];
    let mut pending = vec![];
    for r in &m.runs {
        if let Some(rec) = r.record() {
            out.push(rec);
        } else if let Some(h) = &r.histogram {
            pending.push((r, read_histogram(m.resolve(h))?));
        }
    }
    if !pending.is_empty() {
        let shape = shared_shape(pending.iter().map(|p| &p.1))?;
        for (r, hist) in &pending {
            let mut rec = RunRecord::with_shape(r.setting(), r.duration_s, hist, &shape).map_err(|e| format!("run {}: {e}", r.name))?;
            rec.singles = r.singles;
            out.push(rec);
        }
    }
    Ok(out)
}

fn angles(flag: Option<[f64; 4]>, m: &RunManifest) -> ChshAngles {
    match flag {
        Some([a, ap, b, bp]) => ChshAngles::from_degrees(a, ap, b, bp),
        None => m.analysis.chsh_angles(),
    }
}

fn print_s(rep: &SValueReport) {
    for t in &rep.e_terms {
        println!(
            "E({}, {}) = {:.6} +- {:.6}",
            t.setting.alpha.to_degrees(),
            t.setting.beta.to_degrees(),
            t.e,
            t.sigma_e
        );
    }
    println!("S = {:.3} +- {:.3}", rep.s, rep.sigma_s);
}

pub fn bell(a: BellArgs) -> CmdResult {
    let m = RunManifest::load(&a.manifest)?;
    let records = manifest_records(&m)?;
    let rep = bell_test(&records, &angles(a.angles, &m))?;
    print_s(&rep);
    if let Some(out) = &a.out {
        write_json(out, &rep)?;
    }
    Ok(())
}

fn photon_runs(m: &RunManifest) -> Result<Vec<PhotonRun>, Box<dyn Error>> {
    m.runs
        .iter()
        .map(|r| {
            let p = r.photons.as_ref().ok_or_else(|| format!("run {} has no photon list; run `process` first", r.name))?;
            let [mut pa, mut pb] = read_photons(m.resolve(p))?;
            sort_by_time(&mut pa);
            sort_by_time(&mut pb);
            Ok(PhotonRun {
                setting: r.setting(),
                duration: r.duration_s,
                photons: [pa, pb],
            })
        })
        .collect()
}

fn grids(grid: [u16; 2], m: &RunManifest) -> Result<[SubareaGrid; 2], Box<dyn Error>> {
    let [ra, rb] = m.analysis.regions.unwrap_or_else(default_regions);
    Ok([SubareaGrid::new(ra, grid[0], grid[1])?, SubareaGrid::new(rb, grid[0], grid[1])?])
}

#[derive(Debug, Serialize)]
struct SpatialSummary {
    global: SValueReport,
    uniformity: Option<Uniformity>,
    matrix: SpatialSMatrix,
}

fn spatial(runs: &[PhotonRun], grids: &[SubareaGrid; 2], angles: &ChshAngles, params: &SpatialParams) -> Result<(SValueReport, SpatialSMatrix, Option<Uniformity>), Box<dyn Error>> {
    let global = bell_test(&region_records(runs, &params.coincidence)?, angles)?;
    let matrix = spatial_bell(runs, grids, angles, params)?;
    let uniformity = uniformity_test(&matrix, global.s)
        .inspect_err(|e| log::warn!("uniformity test skipped: {e}"))
        .ok();
    Ok((global, matrix, uniformity))
}

pub fn spatial_bell_cmd(a: SpatialBellArgs) -> CmdResult {
    let m = RunManifest::load(&a.manifest)?;
    let grids = grids(a.grid.or(m.analysis.grid).unwrap_or(DEFAULT_GRID), &m)?;
    let runs = photon_runs(&m)?;
    let params = SpatialParams {
        coincidence: m.coincidence_params(),
        min_coincidences: a.min_coincidences,
    };
    let (global, matrix, uniformity) = spatial(&runs, &grids, &angles(a.angles, &m), &params)?;
    println!("global S = {:.3} +- {:.3}", global.s, global.sigma_s);
    for i in 0..matrix.n_a {
        let (row, col) = (i / grids[0].nx as usize, i % grids[0].nx as usize);
        let cells: Vec<String> = (0..matrix.n_b)
            .map(|j| match &matrix.get(i, j).report {
                Some(r) => format!("{:.3}+-{:.3}", r.s, r.sigma_s),
                None => "flagged".into(),
            })
            .collect();
        println!("A {row}x{col}: {}", cells.join(" "));
    }
    if let Some(u) = &uniformity {
        println!("uniformity: chi2 = {:.2}, dof = {}, p = {:.4}", u.chi2, u.dof, u.p_value);
    }
    if let Some(out) = &a.out {
        write_json(out, &SpatialSummary { global, uniformity, matrix })?;
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> CmdResult {
    let m = RunManifest::load(&a.manifest)?;
    let mut summary = ReportSummary::default();
    let records = manifest_records(&m)?;
    let angles = m.analysis.chsh_angles();
    match bell_test(&records, &angles) {
        Ok(rep) => {
            summary.correlations = correlation_rows(&records, &rep)?;
            print_s(&rep);
            summary.chsh = Some(rep);
        }
        Err(e) => log::info!("no CHSH table: {e}"),
    }
    let betas = m.analysis.scan_betas_deg.clone().unwrap_or_else(|| scan_betas(&m.runs));
    if !betas.is_empty() {
        let curves = polarization_scans(&records, &betas)?;
        summary.scans = scan_rows(&curves);
        for r in &summary.scans {
            println!("beta {}: T = {:.2} +- {:.2} deg", r.beta_deg, r.period_deg, r.sigma_period_deg);
        }
    }
    let mut grid_pair = None;
    if let Some(g) = a.grid.or(m.analysis.grid) {
        let g = grids(g, &m)?;
        let params = SpatialParams {
            coincidence: m.coincidence_params(),
            min_coincidences: a.min_coincidences,
        };
        let (_, matrix, uniformity) = spatial(&photon_runs(&m)?, &g, &angles, &params)?;
        summary.spatial = Some(matrix);
        summary.uniformity = uniformity;
        grid_pair = Some(g);
    }
    if summary.chsh.is_none() && summary.scans.is_empty() && summary.spatial.is_none() {
        return Err(format!("{}: runs cover neither a CHSH test, a scan nor a grid", a.manifest.display()).into());
    }
    create_dir(&a.out_dir)?;
    for p in write_report(&a.out_dir, &summary, grid_pair.as_ref())? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> CmdResult {
    let (events, tb, hot) = bench_events(a.events, a.seed)?;
    let cfg = ProcessConfig {
        hot_pixels: hot,
        ..ProcessConfig::default()
    };
    let r = run_benchmark(&events, &tb, &cfg, a.repeats)?;
    let t = r.times;
    println!("events: {}", r.n_events);
    println!("threads: {}", r.threads);
    println!(
        "stages (s): order {:.3}, cluster {:.3}, walk {:.3}, centroid {:.3}, coincide {:.3}",
        t.order, t.cluster, t.walk, t.centroid, t.coincide
    );
    println!("total: {:.3} s, {:.2} M events/s", r.seconds, r.events_per_second / 1e6);
    Ok(())
}
