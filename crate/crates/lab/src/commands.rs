//! The subcommands. Each reads and writes under `<out_dir>/<exp>/`:
//!
//! ```text
//! data/<seed>/dataset.csv (+ dataset.meta)
//! offline/<seed>/agent.ckpt, curve.csv
//! <mode>/<seed>/agent.ckpt, curve.csv, divergence.csv, denoiser.ckpt (+ denoiser.meta)
//! report.csv, final_scores.csv
//! ```

use std::path::{Path, PathBuf};

use o2o_core::augment::{pretrain_offline, run_online_phase, BufferSet, Generator};
use o2o_core::diagnostics::{aggregate_curves, divergence_report, AggregatePoint};
use o2o_core::env::{build_offline_dataset, ScoreRefs};
use o2o_core::rl::Agent;
use o2o_core::rng::{stream, Stream};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{LabError, LabResult};
use crate::formats::{
    load_agent, read_curve, read_dataset, save_agent, save_denoiser, write_curve, write_dataset,
    write_divergence, write_final_scores, write_report,
};

/// Paths of one experiment.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Layout {
            root: Path::new(&cfg.out_dir).join(&cfg.exp),
        }
    }

    pub fn dataset(&self, seed: u64) -> PathBuf {
        self.root
            .join("data")
            .join(seed.to_string())
            .join("dataset.csv")
    }

    pub fn offline_dir(&self, seed: u64) -> PathBuf {
        self.root.join("offline").join(seed.to_string())
    }

    pub fn run_dir(&self, mode: Mode, seed: u64) -> PathBuf {
        self.root.join(mode.as_str()).join(seed.to_string())
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn final_scores(&self) -> PathBuf {
        self.root.join("final_scores.csv")
    }
}

fn score_refs(cfg: &ExperimentConfig) -> LabResult<ScoreRefs> {
    Ok(ScoreRefs::measure(
        &cfg.env_spec()?,
        cfg.ref_seed,
        cfg.ref_episodes,
    )?)
}

fn check_env(path: &Path, expected: &str, found: &str) -> LabResult<()> {
    if expected != found {
        return Err(LabError::validation(
            "env",
            format!(
                "{} was produced for `{found}`, config says `{expected}`",
                path.display()
            ),
        ));
    }
    Ok(())
}

/// Writes one offline dataset per seed.
pub fn gen_data(cfg: &ExperimentConfig, seeds: &[u64]) -> LabResult<Vec<PathBuf>> {
    cfg.validate()?;
    let spec = cfg.env_spec()?;
    let mix = cfg.mix_entries()?;
    let layout = Layout::new(cfg);
    let mut out = Vec::new();
    for &seed in seeds {
        let ds = build_offline_dataset(&spec, &mix, cfg.dataset_size, seed)?;
        let path = layout.dataset(seed);
        write_dataset(&path, &ds.transitions, &ds.meta)?;
        out.push(path);
    }
    Ok(out)
}

/// Pre-trains one agent per seed on its dataset.
pub fn train_offline(cfg: &ExperimentConfig, seeds: &[u64]) -> LabResult<Vec<PathBuf>> {
    cfg.validate()?;
    let spec = cfg.env_spec()?;
    let agent_cfg = cfg.agent_config();
    let refs = score_refs(cfg)?;
    let layout = Layout::new(cfg);
    let mut out = Vec::new();
    for &seed in seeds {
        let data_path = layout.dataset(seed);
        let (transitions, meta) = read_dataset(&data_path)?;
        check_env(&data_path, &spec.name, &meta.env)?;
        let mut buffers = BufferSet::new(cfg.capacities())?;
        buffers.d_off.extend(transitions);
        let mut agent = Agent::new(
            spec.state_dim,
            spec.action_dim,
            &agent_cfg,
            &mut stream(seed, Stream::Init),
        )?;
        let curve = pretrain_offline(
            &mut agent,
            &buffers.d_off,
            &spec,
            &agent_cfg,
            &cfg.offline_config(seed),
            &refs,
        )?;
        let dir = layout.offline_dir(seed);
        save_agent(&dir.join("agent.ckpt"), &agent, &spec.name)?;
        write_curve(&dir.join("curve.csv"), &curve)?;
        out.push(dir);
    }
    Ok(out)
}

/// Fine-tunes each seed's offline agent online under `mode`.
pub fn finetune(cfg: &ExperimentConfig, mode: Mode, seeds: &[u64]) -> LabResult<Vec<PathBuf>> {
    cfg.validate()?;
    let spec = cfg.env_spec()?;
    let agent_cfg = cfg.agent_config();
    let mix = cfg.mix_config(mode);
    let gcfg = cfg.generator_config(mode);
    let refs = score_refs(cfg)?;
    let layout = Layout::new(cfg);
    let mut out = Vec::new();
    for &seed in seeds {
        let ckpt = layout.offline_dir(seed).join("agent.ckpt");
        let (mut agent, env) = load_agent(&ckpt)?;
        check_env(&ckpt, &spec.name, &env)?;
        let (transitions, _) = read_dataset(&layout.dataset(seed))?;
        let mut buffers = BufferSet::new(cfg.capacities())?;
        buffers.d_off.extend(transitions);
        let mut generator = Generator::default();
        let outcome = run_online_phase(
            &mut agent,
            &mut buffers,
            &mut generator,
            &spec,
            &agent_cfg,
            &mix,
            &gcfg,
            &cfg.online_config(seed),
            &refs,
        )?;
        let dir = layout.run_dir(mode, seed);
        save_agent(&dir.join("agent.ckpt"), &agent, &spec.name)?;
        write_curve(&dir.join("curve.csv"), &outcome.curve)?;
        if let (Some(denoiser), Some(codec)) = (&generator.denoiser, &generator.codec) {
            save_denoiser(&dir.join("denoiser.ckpt"), denoiser, codec)?;
            let report = divergence_report(&buffers, codec, cfg.js_bins, seed)?;
            write_divergence(&dir.join("divergence.csv"), &report)?;
        }
        out.push(dir);
    }
    Ok(out)
}

/// Seed directories under a mode directory that hold a curve, in seed order.
fn seed_runs(mode_dir: &Path) -> LabResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(mode_dir).map_err(|e| LabError::io(mode_dir, e))?;
    let mut runs: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| LabError::io(mode_dir, e))?;
        let path = entry.path();
        let seed = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(seed) = seed {
            if path.join("curve.csv").is_file() {
                runs.push((seed, path));
            }
        }
    }
    runs.sort();
    Ok(runs.into_iter().map(|(_, p)| p).collect())
}

/// Mode directories of the experiment that contain at least one run, in
/// name order.
pub fn discover_mode_dirs(cfg: &ExperimentConfig) -> LabResult<Vec<PathBuf>> {
    let root = Layout::new(cfg).root;
    let entries = std::fs::read_dir(&root).map_err(|e| LabError::io(&root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| LabError::io(&root, e))?.path();
        if path.is_dir() && !seed_runs(&path)?.is_empty() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Aggregates the normalized-score curves of every mode directory and writes
/// `report.csv` and `final_scores.csv`.
pub fn report(cfg: &ExperimentConfig, mode_dirs: &[PathBuf]) -> LabResult<(PathBuf, PathBuf)> {
    let dirs = if mode_dirs.is_empty() {
        discover_mode_dirs(cfg)?
    } else {
        mode_dirs.to_vec()
    };
    let mut curve_rows: Vec<(String, AggregatePoint)> = Vec::new();
    let mut finals = Vec::new();
    for dir in &dirs {
        let mode = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("run")
            .to_string();
        let runs = seed_runs(dir)?;
        if runs.is_empty() {
            return Err(LabError::validation(
                dir.display().to_string(),
                "no completed runs",
            ));
        }
        let mut series = Vec::new();
        let mut final_returns = Vec::new();
        for run in &runs {
            let curve = read_curve(&run.join("curve.csv"))?;
            let last = curve
                .last()
                .ok_or_else(|| LabError::validation(run.display().to_string(), "empty curve"))?;
            final_returns.push(last.episode_return);
            series.push(
                curve
                    .iter()
                    .map(|r| (r.step, r.normalized_score))
                    .collect::<Vec<_>>(),
            );
        }
        let agg = aggregate_curves(&series)
            .map_err(|e| LabError::validation(mode.clone(), e.to_string()))?;
        let last = *agg
            .last()
            .ok_or_else(|| LabError::validation(mode.clone(), "empty curves"))?;
        let mean_return = final_returns.iter().sum::<f64>() / final_returns.len() as f64;
        finals.push((mode.clone(), mean_return, last));
        curve_rows.extend(agg.into_iter().map(|p| (mode.clone(), p)));
    }
    let layout = Layout::new(cfg);
    write_report(&layout.report(), &curve_rows)?;
    write_final_scores(&layout.final_scores(), &finals)?;
    Ok((layout.report(), layout.final_scores()))
}
