use std::path::{Path, PathBuf};
use std::process::Command;

use o2o_core::augment::evaluate;
use o2o_core::env::{EnvSpec, ScoreRefs};
use o2o_lab::commands::{self, Layout};
use o2o_lab::formats::{load_agent, read_curve, read_dataset, Checkpoint};
use o2o_lab::{ExperimentConfig, Mode};

fn tiny(dir: &Path) -> ExperimentConfig {
    let text = format!(
        "exp = tiny\nout_dir = {}\nseeds = 0,1\ndataset_size = 300\noffline_steps = 200\nonline_steps = 300\n\
         eval_every = 100\neval_episodes = 3\nref_episodes = 5\nbatch_size = 32\nagent_hidden_width = 16\n\
         denoiser_hidden_width = 16\ndenoiser_depth = 3\ndenoiser_updates_per_refresh = 20\ndenoiser_batch_size = 32\n\
         gen_count_per_refresh = 50\nrefresh_every = 100\nsampler_steps = 4\n",
        dir.display()
    );
    ExperimentConfig::parse(&text).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_o2o"))
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("tiny.cfg");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn gen_data_writes_exact_rows_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let paths = commands::gen_data(&cfg, &[0]).unwrap();
    let first = std::fs::read(&paths[0]).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 301);
    assert_eq!(
        text.lines().next().unwrap(),
        "s0,s1,a0,a1,r,ns0,ns1,terminal"
    );
    commands::gen_data(&cfg, &[0]).unwrap();
    assert_eq!(std::fs::read(&paths[0]).unwrap(), first);
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let spec = cfg.env_spec().unwrap();
    let ds =
        o2o_core::env::build_offline_dataset(&spec, &cfg.mix_entries().unwrap(), 300, 4).unwrap();
    let path = dir.path().join("d.csv");
    o2o_lab::formats::write_dataset(&path, &ds.transitions, &ds.meta).unwrap();
    let (back, meta) = read_dataset(&path).unwrap();
    assert_eq!(meta, ds.meta);
    assert_eq!(back.len(), ds.transitions.len());
    for (a, b) in back.iter().zip(&ds.transitions) {
        let bits = |t: &o2o_core::env::Transition| {
            o2o_core::diffusion::TransitionCodec::raw(t)
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn bad_env_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "env = moon\n").unwrap();
    let out = bin()
        .args(["gen-data", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("env"));
}

#[test]
fn unknown_key_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "seedz = 1\n").unwrap();
    let out = bin()
        .args(["gen-data", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seedz"));
}

#[test]
fn missing_inputs_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny(dir.path()));
    let out = bin()
        .args(["train-offline", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = bin()
        .args(["finetune", "--mode", "cfdg", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn offline_training_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    commands::gen_data(&cfg, &[0]).unwrap();
    let run = commands::train_offline(&cfg, &[0]).unwrap().remove(0);
    let ckpt_bytes = std::fs::read(run.join("agent.ckpt")).unwrap();
    let curve = read_curve(&run.join("curve.csv")).unwrap();
    assert_eq!(
        curve.iter().map(|r| r.step).collect::<Vec<_>>(),
        vec![0, 100, 200]
    );
    commands::train_offline(&cfg, &[0]).unwrap();
    assert_eq!(std::fs::read(run.join("agent.ckpt")).unwrap(), ckpt_bytes);

    let (agent, env) = load_agent(&run.join("agent.ckpt")).unwrap();
    assert_eq!(env, "pointmass2d");
    let spec = EnvSpec::point_mass();
    let refs = ScoreRefs::measure(&spec, cfg.ref_seed, cfg.ref_episodes).unwrap();
    let (ret, _) = evaluate(&spec, &agent, 0, cfg.eval_episodes, &refs).unwrap();
    assert_eq!(
        ret.to_bits(),
        curve.last().unwrap().episode_return.to_bits()
    );
    let ck = Checkpoint::load(&run.join("agent.ckpt")).unwrap();
    assert_eq!(Checkpoint::parse(Path::new("x"), &ck.render()).unwrap(), ck);
}

#[test]
fn baseline_matches_disabled_augmentation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    commands::gen_data(&cfg, &[0]).unwrap();
    commands::train_offline(&cfg, &[0]).unwrap();
    let base = commands::finetune(&cfg, Mode::Baseline, &[0])
        .unwrap()
        .remove(0);
    assert!(!base.join("divergence.csv").exists());
    cfg.r = 0.0;
    cfg.refresh_every = cfg.online_steps + 1;
    let cfdg = commands::finetune(&cfg, Mode::Cfdg, &[0])
        .unwrap()
        .remove(0);
    assert_eq!(
        std::fs::read(base.join("curve.csv")).unwrap(),
        std::fs::read(cfdg.join("curve.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(base.join("agent.ckpt")).unwrap(),
        std::fs::read(cfdg.join("agent.ckpt")).unwrap()
    );
}

#[test]
fn augmented_modes_write_reports_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let cfg_path = write_config(dir.path(), &cfg);
    for args in [
        vec!["gen-data"],
        vec!["train-offline"],
        vec!["finetune", "--mode", "cfdg"],
        vec!["finetune", "--mode", "cfdg_no_offline_da"],
    ] {
        let out = bin()
            .args(&args)
            .arg("--config")
            .arg(&cfg_path)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let layout = Layout::new(&cfg);
    let div =
        o2o_lab::formats::read_divergence(&layout.run_dir(Mode::Cfdg, 1).join("divergence.csv"))
            .unwrap();
    assert_eq!(div.len(), 12);
    assert!(div.iter().all(|(_, _, v)| (0.0..=1.0).contains(v)));
    // No offline synthetic samples, so those pairs are absent.
    let div = o2o_lab::formats::read_divergence(
        &layout
            .run_dir(Mode::CfdgNoOfflineDa, 0)
            .join("divergence.csv"),
    )
    .unwrap();
    assert!(div.iter().all(|(_, pair, _)| pair != "syn_off_vs_on"));

    let out = bin()
        .arg("report")
        .arg("--config")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let report = std::fs::read_to_string(layout.report()).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("step,mode,mean,std,n_seeds"));
    let curves: Vec<Vec<f64>> = [0u64, 1]
        .iter()
        .map(|s| {
            read_curve(&layout.run_dir(Mode::Cfdg, *s).join("curve.csv"))
                .unwrap()
                .iter()
                .map(|r| r.normalized_score)
                .collect()
        })
        .collect();
    let cfdg_rows: Vec<&str> = report
        .lines()
        .filter(|l| l.split(',').nth(1) == Some("cfdg"))
        .collect();
    assert_eq!(cfdg_rows.len(), curves[0].len());
    for (k, row) in cfdg_rows.iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        let mean: f64 = f[2].parse().unwrap();
        let (lo, hi) = (
            curves[0][k].min(curves[1][k]),
            curves[0][k].max(curves[1][k]),
        );
        assert!(mean >= lo - 1e-9 && mean <= hi + 1e-9);
        assert_eq!(f[4], "2");
    }
}

#[test]
fn single_run_report_equals_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    commands::gen_data(&cfg, &[1]).unwrap();
    let run = commands::train_offline(&cfg, &[1]).unwrap().remove(0);
    let (report, _) = commands::report(&cfg, &[run.parent().unwrap().to_path_buf()]).unwrap();
    let curve = read_curve(&run.join("curve.csv")).unwrap();
    let text = std::fs::read_to_string(report).unwrap();
    for (line, row) in text.lines().skip(1).zip(&curve) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0].parse::<u64>().unwrap(), row.step);
        assert_eq!(f[1], "offline");
        assert_eq!(f[2].parse::<f64>().unwrap(), row.normalized_score);
        assert_eq!(f[3], "0");
    }
}
