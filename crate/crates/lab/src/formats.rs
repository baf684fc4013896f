//! On-disk formats: dataset CSV with a metadata sidecar, text checkpoints,
//! learning curves, divergence reports and aggregate reports.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! every file reads back bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use o2o_core::augment::CurveRow;
use o2o_core::diagnostics::{AggregatePoint, DivergenceEntry};
use o2o_core::diffusion::{Denoiser, TransitionCodec};
use o2o_core::env::{DatasetMeta, Transition};
use o2o_core::numkernel::{Mlp, Role, TensorRecord};
use o2o_core::rl::{Agent, AgentParams};

use crate::error::{LabError, LabResult};

pub fn write_file(path: &Path, bytes: &[u8]) -> LabResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

pub fn read_file(path: &Path) -> LabResult<String> {
    std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

fn malformed(path: &Path, message: impl Into<String>) -> LabError {
    LabError::validation(path.display().to_string(), message)
}

fn parse_f64(path: &Path, s: &str) -> LabResult<f64> {
    s.trim()
        .parse()
        .map_err(|_| malformed(path, format!("`{s}` is not a number")))
}

fn parse_usize(path: &Path, s: &str) -> LabResult<usize> {
    s.trim()
        .parse()
        .map_err(|_| malformed(path, format!("`{s}` is not a count")))
}

fn parse_list(path: &Path, s: &str) -> LabResult<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|v| parse_f64(path, v)).collect()
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// `key = value` lines, as used by every sidecar file.
pub fn render_meta(entries: &[(&str, String)]) -> String {
    entries
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

pub fn parse_meta(path: &Path, text: &str) -> LabResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| malformed(path, format!("bad metadata line `{line}`")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn meta_field<'a>(
    path: &Path,
    meta: &'a BTreeMap<String, String>,
    key: &str,
) -> LabResult<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| malformed(path, format!("missing metadata key `{key}`")))
}

/// Sidecar path next to a data file: `dataset.csv` becomes `dataset.meta`.
pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

fn csv_error(path: &Path, e: csv::Error) -> LabError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::io(path, io),
        other => malformed(path, format!("{other:?}")),
    }
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> LabResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| malformed(path, e.to_string()))?;
    write_file(path, &bytes)
}

fn read_csv(path: &Path, expected_header: &[String]) -> LabResult<Vec<csv::StringRecord>> {
    let text = read_file(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(expected_header.iter().map(String::as_str)) {
        return Err(malformed(
            path,
            format!("expected header `{}`", expected_header.join(",")),
        ));
    }
    r.records()
        .map(|rec| rec.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn dataset_header(state_dim: usize, action_dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..state_dim).map(|i| format!("s{i}")).collect();
    h.extend((0..action_dim).map(|i| format!("a{i}")));
    h.push("r".into());
    h.extend((0..state_dim).map(|i| format!("ns{i}")));
    h.push("terminal".into());
    h
}

/// Writes `path` (CSV) and its `.meta` sidecar.
pub fn write_dataset(path: &Path, transitions: &[Transition], meta: &DatasetMeta) -> LabResult<()> {
    let first = transitions
        .first()
        .ok_or_else(|| malformed(path, "dataset is empty"))?;
    let (sd, ad) = (first.state.len(), first.action.len());
    let rows = transitions.iter().map(|t| {
        let mut row: Vec<String> = t
            .state
            .iter()
            .chain(&t.action)
            .map(f64::to_string)
            .collect();
        row.push(t.reward.to_string());
        row.extend(t.next_state.iter().map(f64::to_string));
        row.push(if t.terminal { "1" } else { "0" }.into());
        row
    });
    write_csv(path, &dataset_header(sd, ad), rows)?;
    let sidecar_text = render_meta(&[
        ("env", meta.env.clone()),
        ("seed", meta.seed.to_string()),
        ("mix", meta.mix.clone()),
        ("size", meta.size.to_string()),
        ("state_dim", sd.to_string()),
        ("action_dim", ad.to_string()),
    ]);
    write_file(&sidecar(path), sidecar_text.as_bytes())
}

pub fn read_dataset(path: &Path) -> LabResult<(Vec<Transition>, DatasetMeta)> {
    let meta_path = sidecar(path);
    let meta = parse_meta(&meta_path, &read_file(&meta_path)?)?;
    let sd = parse_usize(&meta_path, meta_field(&meta_path, &meta, "state_dim")?)?;
    let ad = parse_usize(&meta_path, meta_field(&meta_path, &meta, "action_dim")?)?;
    let dm = DatasetMeta {
        env: meta_field(&meta_path, &meta, "env")?.to_string(),
        mix: meta_field(&meta_path, &meta, "mix")?.to_string(),
        seed: meta_field(&meta_path, &meta, "seed")?
            .parse()
            .map_err(|_| malformed(&meta_path, "bad seed"))?,
        size: parse_usize(&meta_path, meta_field(&meta_path, &meta, "size")?)?,
    };
    let mut out = Vec::new();
    for rec in read_csv(path, &dataset_header(sd, ad))? {
        let v: Vec<f64> = rec
            .iter()
            .map(|s| parse_f64(path, s))
            .collect::<LabResult<_>>()?;
        let terminal = match rec.get(2 * sd + ad + 1) {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(malformed(path, "terminal must be 0 or 1")),
        };
        out.push(Transition {
            state: v[..sd].to_vec(),
            action: v[sd..sd + ad].to_vec(),
            reward: v[sd + ad],
            next_state: v[sd + ad + 1..2 * sd + ad + 1].to_vec(),
            terminal,
        });
    }
    if out.len() != dm.size {
        return Err(malformed(
            path,
            format!("expected {} rows, found {}", dm.size, out.len()),
        ));
    }
    Ok((out, dm))
}

/// Named networks plus free-form metadata.
///
/// ```text
/// o2o-checkpoint 1
/// meta <key> <value>
/// net <name> <residual> <n_records>
/// tensor <layer> <weight|bias> <dims...>
/// <row-major values separated by spaces>
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub nets: Vec<(String, Mlp)>,
}

const CHECKPOINT_MAGIC: &str = "o2o-checkpoint 1";

impl Checkpoint {
    pub fn render(&self) -> String {
        let mut out = String::from(CHECKPOINT_MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, net) in &self.nets {
            let records = net.to_records();
            let _ = writeln!(out, "net {name} {} {}", net.residual(), records.len());
            for r in records {
                let dims: Vec<String> = r.shape.iter().map(usize::to_string).collect();
                let _ = writeln!(
                    out,
                    "tensor {} {} {}",
                    r.layer,
                    r.role.as_str(),
                    dims.join(" ")
                );
                let _ = writeln!(
                    out,
                    "{}",
                    r.values
                        .iter()
                        .map(f64::to_string)
                        .collect::<Vec<_>>()
                        .join(" ")
                );
            }
        }
        out
    }

    pub fn parse(path: &Path, text: &str) -> LabResult<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(malformed(path, "not a checkpoint file"));
        }
        let mut ck = Checkpoint::default();
        while let Some(line) = lines.next() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("meta") => {
                    let key = parts
                        .next()
                        .ok_or_else(|| malformed(path, "meta line without key"))?;
                    let value = line.splitn(3, ' ').nth(2).unwrap_or("");
                    ck.meta.push((key.to_string(), value.to_string()));
                }
                Some("net") => {
                    let name = parts
                        .next()
                        .ok_or_else(|| malformed(path, "net line without name"))?;
                    let residual = parts
                        .next()
                        .and_then(|s| s.parse::<bool>().ok())
                        .ok_or_else(|| malformed(path, "bad residual flag"))?;
                    let n = parse_usize(path, parts.next().unwrap_or(""))?;
                    let mut records = Vec::with_capacity(n);
                    for _ in 0..n {
                        let head = lines
                            .next()
                            .ok_or_else(|| malformed(path, "truncated net"))?;
                        let mut h = head.split_whitespace();
                        if h.next() != Some("tensor") {
                            return Err(malformed(path, "expected a tensor line"));
                        }
                        let layer = parse_usize(path, h.next().unwrap_or(""))?;
                        let role = h
                            .next()
                            .and_then(Role::parse)
                            .ok_or_else(|| malformed(path, "bad tensor role"))?;
                        let shape: Vec<usize> =
                            h.map(|d| parse_usize(path, d)).collect::<LabResult<_>>()?;
                        let body = lines
                            .next()
                            .ok_or_else(|| malformed(path, "missing tensor values"))?;
                        let values: Vec<f64> = body
                            .split_whitespace()
                            .map(|v| parse_f64(path, v))
                            .collect::<LabResult<_>>()?;
                        if values.len() != shape.iter().product::<usize>() {
                            return Err(malformed(
                                path,
                                format!("tensor of net `{name}` has the wrong value count"),
                            ));
                        }
                        records.push(TensorRecord {
                            layer,
                            role,
                            shape,
                            values,
                        });
                    }
                    let net = Mlp::from_records(&records, residual)
                        .map_err(|e| malformed(path, e.to_string()))?;
                    ck.nets.push((name.to_string(), net));
                }
                Some(other) => return Err(malformed(path, format!("unexpected line `{other}`"))),
                None => {}
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> LabResult<()> {
        write_file(path, self.render().as_bytes())
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        Self::parse(path, &read_file(path)?)
    }

    pub fn meta(&self, path: &Path, key: &str) -> LabResult<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| malformed(path, format!("missing checkpoint metadata `{key}`")))
    }

    fn take_net(&mut self, path: &Path, name: &str) -> LabResult<Mlp> {
        let i = self
            .nets
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| malformed(path, format!("missing net `{name}`")))?;
        Ok(self.nets.remove(i).1)
    }
}

pub fn save_agent(path: &Path, agent: &Agent, env: &str) -> LabResult<()> {
    let p = &agent.params;
    Checkpoint {
        meta: vec![
            ("kind".into(), "agent".into()),
            ("env".into(), env.into()),
            ("state_dim".into(), agent.state_dim.to_string()),
            ("action_dim".into(), agent.action_dim.to_string()),
        ],
        nets: vec![
            ("critic".into(), p.critic.clone()),
            ("target_critic".into(), p.target_critic.clone()),
            ("value".into(), p.value.clone()),
            ("policy".into(), p.policy.clone()),
        ],
    }
    .save(path)
}

/// Restores the networks; optimizer state starts fresh.
pub fn load_agent(path: &Path) -> LabResult<(Agent, String)> {
    let mut ck = Checkpoint::load(path)?;
    if ck.meta(path, "kind")? != "agent" {
        return Err(malformed(path, "not an agent checkpoint"));
    }
    let env = ck.meta(path, "env")?.to_string();
    let sd = parse_usize(path, ck.meta(path, "state_dim")?)?;
    let ad = parse_usize(path, ck.meta(path, "action_dim")?)?;
    let params = AgentParams {
        critic: ck.take_net(path, "critic")?,
        target_critic: ck.take_net(path, "target_critic")?,
        value: ck.take_net(path, "value")?,
        policy: ck.take_net(path, "policy")?,
    };
    let agent = Agent::from_params(params, sd, ad);
    agent.check().map_err(|e| malformed(path, e.to_string()))?;
    Ok((agent, env))
}

/// Writes the denoiser checkpoint and the codec statistics to its sidecar.
pub fn save_denoiser(path: &Path, denoiser: &Denoiser, codec: &TransitionCodec) -> LabResult<()> {
    Checkpoint {
        meta: vec![
            ("kind".into(), "denoiser".into()),
            ("data_dim".into(), denoiser.data_dim.to_string()),
            ("sigma_features".into(), denoiser.sigma_features.to_string()),
            ("p_uncond".into(), denoiser.p_uncond.to_string()),
            ("sigma_data".into(), denoiser.sigma_data.to_string()),
        ],
        nets: vec![("denoiser".into(), denoiser.net.clone())],
    }
    .save(path)?;
    let text = render_meta(&[
        ("state_dim", codec.state_dim.to_string()),
        ("action_dim", codec.action_dim.to_string()),
        ("mean", join(&codec.mean)),
        ("std", join(&codec.std)),
    ]);
    write_file(&sidecar(path), text.as_bytes())
}

pub fn load_denoiser(path: &Path) -> LabResult<(Denoiser, TransitionCodec)> {
    let mut ck = Checkpoint::load(path)?;
    if ck.meta(path, "kind")? != "denoiser" {
        return Err(malformed(path, "not a denoiser checkpoint"));
    }
    let data_dim = parse_usize(path, ck.meta(path, "data_dim")?)?;
    let sigma_features = parse_usize(path, ck.meta(path, "sigma_features")?)?;
    let p_uncond = parse_f64(path, ck.meta(path, "p_uncond")?)?;
    let sigma_data = parse_f64(path, ck.meta(path, "sigma_data")?)?;
    let net = ck.take_net(path, "denoiser")?;
    let denoiser = Denoiser::from_net(net, data_dim, sigma_features, p_uncond, sigma_data)
        .map_err(|e| malformed(path, e.to_string()))?;
    let meta_path = sidecar(path);
    let meta = parse_meta(&meta_path, &read_file(&meta_path)?)?;
    let codec = TransitionCodec {
        state_dim: parse_usize(&meta_path, meta_field(&meta_path, &meta, "state_dim")?)?,
        action_dim: parse_usize(&meta_path, meta_field(&meta_path, &meta, "action_dim")?)?,
        mean: parse_list(&meta_path, meta_field(&meta_path, &meta, "mean")?)?,
        std: parse_list(&meta_path, meta_field(&meta_path, &meta, "std")?)?,
    };
    if codec.mean.len() != data_dim || codec.std.len() != data_dim {
        return Err(malformed(
            &meta_path,
            "codec statistics do not match the denoiser width",
        ));
    }
    Ok((denoiser, codec))
}

pub const CURVE_HEADER: [&str; 6] = [
    "step",
    "return",
    "normalized_score",
    "loss_q",
    "loss_pi",
    "loss_v",
];

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> LabResult<()> {
    let body = rows.iter().map(|r| {
        vec![
            r.step.to_string(),
            r.episode_return.to_string(),
            r.normalized_score.to_string(),
            r.loss_q.to_string(),
            r.loss_pi.to_string(),
            r.loss_v.to_string(),
        ]
    });
    write_csv(path, &header(&CURVE_HEADER), body)
}

pub fn read_curve(path: &Path) -> LabResult<Vec<CurveRow>> {
    read_csv(path, &header(&CURVE_HEADER))?
        .iter()
        .map(|rec| {
            let f = |i: usize| parse_f64(path, rec.get(i).unwrap_or(""));
            Ok(CurveRow {
                step: rec
                    .get(0)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| malformed(path, "bad step"))?,
                episode_return: f(1)?,
                normalized_score: f(2)?,
                loss_q: f(3)?,
                loss_pi: f(4)?,
                loss_v: f(5)?,
            })
        })
        .collect()
}

pub const DIVERGENCE_HEADER: [&str; 3] = ["quantity", "pair", "value"];

pub fn write_divergence(path: &Path, entries: &[DivergenceEntry]) -> LabResult<()> {
    let body = entries.iter().map(|e| {
        vec![
            e.quantity.as_str().into(),
            e.pair.as_str().into(),
            e.value.to_string(),
        ]
    });
    write_csv(path, &header(&DIVERGENCE_HEADER), body)
}

/// `(quantity, pair, value)` rows of a divergence report.
pub fn read_divergence(path: &Path) -> LabResult<Vec<(String, String, f64)>> {
    read_csv(path, &header(&DIVERGENCE_HEADER))?
        .iter()
        .map(|rec| {
            Ok((
                rec[0].to_string(),
                rec[1].to_string(),
                parse_f64(path, &rec[2])?,
            ))
        })
        .collect()
}

pub const REPORT_HEADER: [&str; 5] = ["step", "mode", "mean", "std", "n_seeds"];

pub fn write_report(path: &Path, rows: &[(String, AggregatePoint)]) -> LabResult<()> {
    let body = rows.iter().map(|(mode, p)| {
        vec![
            p.step.to_string(),
            mode.clone(),
            p.mean.to_string(),
            p.std.to_string(),
            p.n.to_string(),
        ]
    });
    write_csv(path, &header(&REPORT_HEADER), body)
}

pub const FINAL_HEADER: [&str; 5] = [
    "mode",
    "mean_return",
    "mean_normalized_score",
    "std_normalized_score",
    "n_seeds",
];

pub fn write_final_scores(path: &Path, rows: &[(String, f64, AggregatePoint)]) -> LabResult<()> {
    let body = rows.iter().map(|(mode, ret, p)| {
        vec![
            mode.clone(),
            ret.to_string(),
            p.mean.to_string(),
            p.std.to_string(),
            p.n.to_string(),
        ]
    });
    write_csv(path, &header(&FINAL_HEADER), body)
}
