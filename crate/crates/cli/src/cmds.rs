//! Command implementations chaining the library stages.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use osse_core::dynamics::{geostrophic_currents, PhysConsts, VelocityField};
use osse_core::eddylab::{self, Eddy, MatchReport};
use osse_core::evalmetrics::{
    along_track_rmse, current_rmse, lambda_t, lambda_x, rmse_suite, window_profile, EvalReport,
    Region,
};
use osse_core::grid::{Field, GridSpec, TrackSet, Units};
use osse_core::interp::{
    assemble_windows, reconstruct_windows_traced, Engine, WindowRun,
};
use osse_core::io::{read_field, read_tracks, write_field, write_tracks};
use osse_core::objective::leave_one_satellite;
use osse_core::obs::{
    prepare_cloud_cover, shift_support, simulate_ssh_obs, simulate_sst_obs, CloudCover,
};
use osse_core::tracks::generate_tracks;
use osse_core::truth::{generate_truth, read_truth, write_truth};

use crate::config::Config;
use crate::manifest::RunManifest;
use crate::Usage;

fn require_dir(p: &Path, what: &str) -> anyhow::Result<()> {
    if !p.is_dir() {
        anyhow::bail!(Usage(format!("{what} directory {} does not exist", p.display())));
    }
    Ok(())
}

fn ensure_out(p: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(p)?;
    Ok(())
}

pub fn generate_truth_cmd(cfg: &Config, out: &Path) -> anyhow::Result<()> {
    let t0 = Instant::now();
    ensure_out(out)?;
    let (ssh, sst, currents) = generate_truth(&cfg.truth)?;
    write_truth(out, &ssh, &sst, &currents)?;
    let mut m = RunManifest::new("generate-truth", cfg)?;
    m.seeds = vec![cfg.truth.seed];
    m.outputs = ["ssh", "sst", "u", "v"].iter().map(|s| s.to_string()).collect();
    m.timing_seconds = t0.elapsed().as_secs_f64();
    m.write(out)?;
    println!(
        "truth written to {} ({} frames of {}x{})",
        out.display(),
        ssh.spec.nt,
        ssh.spec.nlat,
        ssh.spec.nlon
    );
    Ok(())
}

/// Synthetic raw cloud cover: coarse uniform-random field spanning the
/// target box over a short period, later regridded/tiled/smoothed.
fn synth_raw_cloud(spec: &GridSpec, seed: u64) -> anyhow::Result<CloudCover> {
    let n = 24usize;
    let raw_spec = GridSpec {
        dlat: (spec.nlat - 1) as f64 * spec.dlat / (n - 1) as f64,
        dlon: (spec.nlon - 1) as f64 * spec.dlon / (n - 1) as f64,
        nlat: n,
        nlon: n,
        nt: spec.nt.min(8),
        ..*spec
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Field::zeros(raw_spec, Units::Dimensionless);
    raw.values.mapv_inplace(|_| rng.random_range(0.0..1.0));
    Ok(CloudCover::new(raw)?)
}

pub fn simulate_obs_cmd(
    cfg: &Config,
    truth_dir: &Path,
    out: &Path,
    hold_out_sat: Option<u32>,
) -> anyhow::Result<()> {
    let t0 = Instant::now();
    require_dir(truth_dir, "truth")?;
    ensure_out(out)?;
    let (ssh, sst, _currents) = read_truth(truth_dir)?;
    let spec = ssh.spec;

    let support = generate_tracks(&spec, &cfg.tracks)?;
    let support = if cfg.support_delay_days != 0.0 {
        shift_support(&support, cfg.support_delay_days, &spec)
    } else {
        support
    };
    let obs = simulate_ssh_obs(&ssh, &support, &cfg.ssh_obs)?;
    write_tracks(&out.join("tracks.csv"), &obs)?;
    if let Some(sat) = hold_out_sat {
        let (input, _constraint) = leave_one_satellite(&obs, sat)?;
        let held: TrackSet = TrackSet::new(
            obs.samples().iter().filter(|p| p.sat_id == sat).copied().collect(),
        );
        write_tracks(&out.join("tracks_input.csv"), &input)?;
        write_tracks(&out.join("tracks_heldout.csv"), &held)?;
    }

    let raw_cloud = synth_raw_cloud(&spec, cfg.cloud_seed)?;
    let cloud = prepare_cloud_cover(&raw_cloud, &spec, cfg.sst_obs.cloud_smooth_km)?;
    let sst_obs = simulate_sst_obs(&sst, &cloud, &cfg.sst_obs)?;
    write_field(out, "sst_obs", &sst_obs)?;
    write_field(out, "cloud", cloud.field())?;

    let mut m = RunManifest::new("simulate-obs", cfg)?;
    m.seeds = vec![cfg.tracks.seed, cfg.ssh_obs.seed, cfg.sst_obs.seed, cfg.cloud_seed];
    m.inputs = vec![truth_dir.display().to_string()];
    m.outputs = vec!["tracks.csv".into(), "sst_obs".into(), "cloud".into()];
    if hold_out_sat.is_some() {
        m.outputs.push("tracks_input.csv".into());
        m.outputs.push("tracks_heldout.csv".into());
    }
    m.timing_seconds = t0.elapsed().as_secs_f64();
    m.write(out)?;
    println!("observations written to {} ({} track samples)", out.display(), obs.len());
    Ok(())
}

fn read_obs_tracks(obs_dir: &Path) -> anyhow::Result<TrackSet> {
    let input = obs_dir.join("tracks_input.csv");
    let full = obs_dir.join("tracks.csv");
    let path = if input.exists() { input } else { full };
    if !path.exists() {
        anyhow::bail!(Usage(format!("no track file found in {}", obs_dir.display())));
    }
    Ok(read_tracks(&path)?)
}

fn write_traces(path: &Path, member: usize, runs: &[WindowRun], buf: &mut String) {
    let _ = path;
    for run in runs {
        for e in &run.trace {
            let _ = writeln!(buf, "{member},{},{},{:.17e},{:.17e}", run.start, e.iter, e.loss, e.step);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn reconstruct_cmd(
    cfg: &Config,
    obs_dir: &Path,
    out: &Path,
    engine_name: &str,
    n_ensemble: Option<usize>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
) -> anyhow::Result<()> {
    let t0 = Instant::now();
    require_dir(obs_dir, "observation")?;
    ensure_out(out)?;
    let obs = read_obs_tracks(obs_dir)?;
    let spec = cfg.truth.spec;

    let mut cfg = cfg.clone();
    if let Some(l1) = lambda1 {
        cfg.var.lambda1 = l1;
    }
    if let Some(l2) = lambda2 {
        cfg.var.lambda2 = l2;
    }
    if let Some(n) = n_ensemble {
        cfg.n_ensemble = n;
    }
    if cfg.n_ensemble == 0 {
        anyhow::bail!(Usage("n_ensemble must be at least 1".into()));
    }
    let engine = match engine_name {
        "oi" => Engine::Oi(cfg.oi),
        "var" => Engine::Var { var: cfg.var, oi: cfg.oi },
        other => anyhow::bail!(Usage(format!("unknown engine '{other}' (expected oi or var)"))),
    };
    let seeds: Vec<u64> = (0..cfg.n_ensemble as u64).map(|i| cfg.ensemble_seed_base + i).collect();

    let mut members = Vec::with_capacity(seeds.len());
    let mut trace_buf = String::from("member,window_start,iter,loss,step\n");
    for (idx, &seed) in seeds.iter().enumerate() {
        let runs = reconstruct_windows_traced(&obs, &spec, &cfg.window, &engine, seed)?;
        write_traces(out, idx, &runs, &mut trace_buf);
        let windows: Vec<(usize, Field)> = runs.into_iter().map(|r| (r.start, r.field)).collect();
        let member = assemble_windows(&windows, &cfg.window, &spec)?;
        if seeds.len() > 1 {
            write_field(out, &format!("ssh_member_{idx}"), &member)?;
        }
        members.push(member);
    }
    let ensemble = if members.iter().all(|m| m == &members[0]) {
        members[0].clone()
    } else {
        let mut mean = members[0].clone();
        mean.values.fill(0.0);
        for m in &members {
            mean.values += &m.values;
        }
        mean.values /= members.len() as f64;
        mean
    };
    write_field(out, "ssh_est", &ensemble)?;
    std::fs::write(out.join("traces.csv"), trace_buf)?;

    let mut m = RunManifest::new("reconstruct", &cfg)?;
    m.seeds = seeds;
    m.inputs = vec![obs_dir.display().to_string()];
    m.outputs = vec!["ssh_est".into(), "traces.csv".into()];
    m.timing_seconds = t0.elapsed().as_secs_f64();
    m.write(out)?;
    println!("estimate written to {} (engine {engine_name})", out.display());
    Ok(())
}

/// Per-day detection on an SSH field with its (derived) currents.
fn detect_all_days(
    ssh: &Field,
    vel: &VelocityField,
    cfg: &Config,
) -> anyhow::Result<Vec<Vec<Eddy>>> {
    let mut per_day = Vec::with_capacity(ssh.spec.nt);
    for k in 0..ssh.spec.nt {
        per_day.push(eddylab::detect(ssh, vel, k, &cfg.lnam)?);
    }
    Ok(per_day)
}

fn merge_reports(mut reports: Vec<MatchReport>) -> MatchReport {
    let mut total = MatchReport {
        pairs: Vec::new(),
        unmatched_truth: Vec::new(),
        unmatched_est: Vec::new(),
        excluded_multi: 0,
    };
    for r in reports.drain(..) {
        total.pairs.extend(r.pairs);
        total.unmatched_truth.extend(r.unmatched_truth);
        total.unmatched_est.extend(r.unmatched_est);
        total.excluded_multi += r.excluded_multi;
    }
    total
}

struct EvalRow {
    name: String,
    report: EvalReport,
    f1: Option<f64>,
}

fn evaluate_one(
    cfg: &Config,
    truth: Option<&(Field, Field, VelocityField)>,
    est: &Field,
    held_out: Option<&TrackSet>,
    name: &str,
) -> anyhow::Result<EvalRow> {
    let consts = PhysConsts::default();
    let region = Region {
        lat_range: cfg.eval.lat_range,
        lon_range: None,
    };
    let mut report = EvalReport {
        mu: None,
        sigma_t: None,
        per_day: Vec::new(),
        lambda_x_deg: None,
        lambda_t_days: None,
        mu_u: None,
        mu_v: None,
        along_track_rmse: None,
    };
    let mut f1 = None;
    if let Some((t_ssh, _t_sst, t_vel)) = truth {
        let suite = rmse_suite(t_ssh, est, &region)?;
        report.per_day = suite.per_day.clone();
        report.mu = Some(suite.mu);
        report.sigma_t = Some(suite.sigma_t);
        // Spectral resolution needs a minimum record length; short runs
        // simply omit these entries instead of failing the whole report.
        match lambda_x(t_ssh, est, cfg.eval.psd_threshold) {
            Ok(l) => report.lambda_x_deg = Some(l),
            Err(e) => log::warn!("lambda_x unavailable: {e}"),
        }
        match lambda_t(t_ssh, est, cfg.eval.psd_threshold) {
            Ok(l) => report.lambda_t_days = Some(l),
            Err(e) => log::warn!("lambda_t unavailable: {e}"),
        }
        let (mu_u, mu_v) = current_rmse(t_vel, est, &consts)?;
        report.mu_u = Some(mu_u);
        report.mu_v = Some(mu_v);

        let truth_eddies = detect_all_days(t_ssh, t_vel, cfg)?;
        let est_vel = geostrophic_currents(est, &consts)?;
        let est_eddies = detect_all_days(est, &est_vel, cfg)?;
        let daily: Vec<MatchReport> = truth_eddies
            .iter()
            .zip(&est_eddies)
            .map(|(t, e)| eddylab::match_eddies(t, e))
            .collect();
        let merged = merge_reports(daily);
        f1 = eddylab::scores(&merged).f1;
    }
    if let Some(tracks) = held_out {
        report.along_track_rmse = Some(along_track_rmse(tracks, est)?);
    }
    Ok(EvalRow {
        name: name.to_string(),
        report,
        f1,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "undefined".into())
}

pub fn evaluate_cmd(
    cfg: &Config,
    truth_dir: Option<&Path>,
    est_dirs: &[PathBuf],
    tracks_file: Option<&Path>,
    tracks_only: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let t0 = Instant::now();
    ensure_out(out)?;
    if est_dirs.is_empty() {
        anyhow::bail!(Usage("at least one --est directory is required".into()));
    }
    let truth = if tracks_only {
        None
    } else {
        let dir = truth_dir
            .ok_or_else(|| Usage("--truth is required unless --tracks-only is set".into()))?;
        require_dir(dir, "truth")?;
        Some(read_truth(dir)?)
    };
    let held_out = match tracks_file {
        Some(p) => {
            if !p.exists() {
                anyhow::bail!(Usage(format!("track file {} does not exist", p.display())));
            }
            Some(read_tracks(p)?)
        }
        None => None,
    };
    if tracks_only && held_out.is_none() {
        anyhow::bail!(Usage("--tracks-only requires --tracks".into()));
    }

    let mut csv = String::from("name,mu,sigma_t,lambda_x_deg,lambda_t_days,mu_u,mu_v,along_track_rmse,eddy_f1\n");
    for dir in est_dirs {
        require_dir(dir, "estimate")?;
        let est = read_field(dir, "ssh_est")?;
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| dir.display().to_string());
        let row = evaluate_one(cfg, truth.as_ref(), &est, held_out.as_ref(), &name)?;
        let report_json = serde_json::json!({
            "name": row.name,
            "psd_threshold": cfg.eval.psd_threshold,
            "report": row.report,
            "eddy_f1": row.f1,
        });
        std::fs::write(
            out.join(format!("report_{}.json", row.name)),
            serde_json::to_string_pretty(&report_json)?,
        )?;
        if !row.report.per_day.is_empty() {
            let mut daily = String::from("day,rmse\n");
            for (k, r) in row.report.per_day.iter().enumerate() {
                let _ = writeln!(daily, "{k},{r:.17e}");
            }
            std::fs::write(out.join(format!("per_day_{}.csv", row.name)), daily)?;
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            row.name,
            opt(row.report.mu),
            opt(row.report.sigma_t),
            opt(row.report.lambda_x_deg.map(|l| l.wavelength)),
            opt(row.report.lambda_t_days.map(|l| l.wavelength)),
            opt(row.report.mu_u),
            opt(row.report.mu_v),
            opt(row.report.along_track_rmse),
            opt(row.f1),
        );
        println!(
            "{}: mu={} along_track={} f1={}",
            row.name,
            opt(row.report.mu),
            opt(row.report.along_track_rmse),
            opt(row.f1)
        );
    }
    std::fs::write(out.join("comparison.csv"), csv)?;

    let mut m = RunManifest::new("evaluate", cfg)?;
    m.inputs = est_dirs.iter().map(|p| p.display().to_string()).collect();
    if let Some(d) = truth_dir {
        m.inputs.push(d.display().to_string());
    }
    m.outputs = vec!["comparison.csv".into()];
    m.timing_seconds = t0.elapsed().as_secs_f64();
    m.write(out)?;
    Ok(())
}

pub fn profile_window_cmd(
    cfg: &Config,
    truth_dir: &Path,
    obs_dir: &Path,
    out: &Path,
    engine_name: &str,
) -> anyhow::Result<()> {
    let t0 = Instant::now();
    require_dir(truth_dir, "truth")?;
    require_dir(obs_dir, "observation")?;
    ensure_out(out)?;
    let (ssh, _sst, _vel) = read_truth(truth_dir)?;
    let obs = read_obs_tracks(obs_dir)?;
    let engine = match engine_name {
        "oi" => Engine::Oi(cfg.oi),
        "var" => Engine::Var { var: cfg.var, oi: cfg.oi },
        other => anyhow::bail!(Usage(format!("unknown engine '{other}' (expected oi or var)"))),
    };
    let runs = reconstruct_windows_traced(&obs, &ssh.spec, &cfg.window, &engine, cfg.ensemble_seed_base)?;
    let windows: Vec<(usize, Field)> = runs.into_iter().map(|r| (r.start, r.field)).collect();
    let offsets: Vec<usize> = (0..cfg.window.window_len).collect();
    let profile = window_profile(&ssh, &windows, &offsets)?;
    let mut csv = String::from("offset,rmse\n");
    for (o, r) in &profile {
        let _ = writeln!(csv, "{o},{r:.17e}");
    }
    std::fs::write(out.join("profile.csv"), csv)?;
    let argmin = profile
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(o, _)| *o)
        .unwrap();
    println!("window profile written; RMSE minimum at offset {argmin}");

    let mut m = RunManifest::new("profile-window", cfg)?;
    m.seeds = vec![cfg.ensemble_seed_base];
    m.inputs = vec![truth_dir.display().to_string(), obs_dir.display().to_string()];
    m.outputs = vec!["profile.csv".into()];
    m.timing_seconds = t0.elapsed().as_secs_f64();
    m.write(out)?;
    Ok(())
}

pub fn detect_eddies_cmd(cfg: &Config, input_dir: &Path, out: &Path) -> anyhow::Result<()> {
    let t0 = Instant::now();
    require_dir(input_dir, "input")?;
    ensure_out(out)?;
    // truth directories carry u/v containers; estimate directories only
    // hold SSH, so currents are derived geostrophically
    let (ssh, vel) = if input_dir.join("u.f64").exists() {
        let (ssh, _sst, vel) = read_truth(input_dir)?;
        (ssh, vel)
    } else {
        let ssh = read_field(input_dir, "ssh_est")?;
        let vel = geostrophic_currents(&ssh, &PhysConsts::default())?;
        (ssh, vel)
    };
    let mut per_day = detect_all_days(&ssh, &vel, cfg)?;
    eddylab::track(&mut per_day, cfg.tracking.max_jump_km, cfg.tracking.max_gap_days);
    let all: Vec<Eddy> = per_day.into_iter().flatten().collect();
    eddylab::write_eddies(&out.join("eddies.jsonl"), &all)?;
    println!("{} eddies written to {}", all.len(), out.join("eddies.jsonl").display());

    let mut m = RunManifest::new("detect-eddies", cfg)?;
    m.inputs = vec![input_dir.display().to_string()];
    m.outputs = vec!["eddies.jsonl".into()];
    m.timing_seconds = t0.elapsed().as_secs_f64();
    m.write(out)?;
    Ok(())
}
