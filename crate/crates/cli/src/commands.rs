use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Serialize;
use teleop_core::kinematics::KinematicChain;
use teleop_core::mapping::CalibrationBuilder;
use teleop_core::retargeting::{HandFrame, HandModel, HandRetargeter, RetargetConfig};
use teleop_core::simulator::{
    run_session, verify as verify_recording, GameConfig, NoisyOperator, OperatorSource,
    OptimalOperator, Recording, ReplayOperator, SessionMetrics,
};
use teleop_server::{Server, ServerConfig};

use crate::error::{Failure, Kind};

/// A variant file, or a shipped variant by name when no such file exists.
fn load_game(arg: &str) -> Result<GameConfig, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        Ok(GameConfig::load(path)?)
    } else {
        GameConfig::builtin(arg).map_err(|_| {
            Failure::new(
                Kind::Config,
                format!("`{arg}` is neither a file nor a shipped variant"),
            )
        })
    }
}

fn replay_path(arg: &str) -> Option<&str> {
    arg.strip_prefix("replay:")
}

fn operator_for(arg: &str, cfg: &GameConfig) -> Result<Box<dyn OperatorSource>, Failure> {
    let o = &cfg.operator;
    if arg == "optimal" {
        return Ok(Box::new(OptimalOperator::new(o.human_speed)));
    }
    if arg == "noisy" {
        return Ok(Box::new(NoisyOperator::from_config(cfg)));
    }
    if let Some(sigma) = arg.strip_prefix("noisy:") {
        let sigma: f64 = sigma
            .parse()
            .map_err(|_| Failure::new(Kind::Config, format!("bad noise level in `{arg}`")))?;
        let mut c = cfg.clone();
        c.operator.noise_sigma = sigma;
        let c = c.validated()?;
        return Ok(Box::new(NoisyOperator::from_config(&c)));
    }
    if let Some(path) = replay_path(arg) {
        let rec = Recording::load(path)?;
        return Ok(Box::new(ReplayOperator::from_recording(&rec, cfg.arms.len())?));
    }
    Err(Failure::new(
        Kind::Config,
        format!("unknown operator `{arg}`; expected optimal, noisy, noisy:<sigma> or replay:<file>"),
    ))
}

fn file_stem_of(arg: &str) -> String {
    arg.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| v.to_string())
}

pub fn metrics_line(config: &str, operator: &str, seed: u64, m: &SessionMetrics) -> String {
    format!(
        "config={config} operator={operator} seed={seed} success_rate={} effective_ratio={} \
         avg_reach_time={} avg_reach_velocity={} avg_ee_velocity={} completed={} timed_out={}",
        m.success_rate,
        opt(m.effective_ratio),
        opt(m.avg_reach_time),
        opt(m.avg_reach_velocity),
        m.avg_ee_velocity,
        m.completed,
        m.timed_out,
    )
}

fn play(
    cfg: &GameConfig,
    operator: &str,
    recordings: Option<&Path>,
) -> Result<(SessionMetrics, Option<PathBuf>), Failure> {
    let mut op = operator_for(operator, cfg)?;
    let (metrics, rec) = run_session(cfg, op.as_mut())?;
    let path = match recordings {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!(
                "{}-{}-seed{}.jsonl",
                cfg.name,
                file_stem_of(operator),
                cfg.rng_seed
            ));
            rec.save(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok((metrics, path))
}

pub fn run(config: &str, operator: &str, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load_game(config)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let (metrics, path) = play(&cfg, operator, Some(out))?;
    println!("{}", metrics_line(&cfg.name, operator, cfg.rng_seed, &metrics));
    if let Some(p) = path {
        eprintln!("recording: {}", p.display());
    }
    Ok(())
}

fn parse_seeds(arg: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::new(Kind::Config, format!("bad seed range `{arg}`; expected a..b or a"));
    match arg.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![arg.trim().parse().map_err(|_| bad())?]),
    }
}

#[derive(Serialize)]
struct BatchRow<'a> {
    config: &'a str,
    operator: &'a str,
    seed: u64,
    config_hash: &'a str,
    avg_reach_time: Option<f64>,
    avg_reach_velocity: Option<f64>,
    avg_ee_velocity: f64,
    effective_ratio: Option<f64>,
    success_rate: f64,
    completed: usize,
    timed_out: usize,
}

pub fn batch(
    configs: &Path,
    operators: &str,
    seeds: &str,
    out: &Path,
    recordings: Option<&Path>,
) -> Result<(), Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(configs)
        .map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", configs.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::new(
            Kind::Config,
            format!("no variant files in {}", configs.display()),
        ));
    }
    let games = files
        .iter()
        .map(GameConfig::load)
        .collect::<Result<Vec<_>, _>>()?;
    let operators: Vec<&str> = operators.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let seeds = parse_seeds(seeds)?;

    let mut w = csv::Writer::from_path(out)?;
    let mut rows = 0;
    for game in &games {
        for op in &operators {
            for &seed in &seeds {
                let cfg = game.clone().with_seed(seed);
                let (m, _) = play(&cfg, op, recordings)?;
                let hash = cfg.hash();
                w.serialize(BatchRow {
                    config: &cfg.name,
                    operator: op,
                    seed,
                    config_hash: &hash,
                    avg_reach_time: m.avg_reach_time,
                    avg_reach_velocity: m.avg_reach_velocity,
                    avg_ee_velocity: m.avg_ee_velocity,
                    effective_ratio: m.effective_ratio,
                    success_rate: m.success_rate,
                    completed: m.completed,
                    timed_out: m.timed_out,
                })?;
                rows += 1;
            }
        }
    }
    w.flush()?;
    eprintln!("{rows} sessions written to {}", out.display());
    Ok(())
}

pub fn serve(
    config: &str,
    listen: SocketAddr,
    out: &Path,
    exoskeleton: Option<&Path>,
    snapshot_hz: f64,
) -> Result<(), Failure> {
    let game = load_game(config)?;
    let mut cfg = ServerConfig::new(game, out);
    if let Some(p) = exoskeleton {
        cfg.exoskeleton = KinematicChain::load(p)?;
        cfg.exoskeleton.require_exoskeleton()?;
    }
    if !(snapshot_hz > 0.0) {
        return Err(Failure::new(Kind::Config, "snapshot rate must be positive"));
    }
    cfg.snapshot_hz = snapshot_hz;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let server = Server::bind(listen, cfg).await?;
        println!("listening on ws://{}", server.local_addr()?);
        server
            .run(|r| match r {
                Ok(s) => println!(
                    "session {} ended ({:?}): success_rate={} recording={}",
                    s.session_id,
                    s.reason,
                    s.metrics.success_rate,
                    s.recording.display()
                ),
                Err(e) => eprintln!("connection failed: {e}"),
            })
            .await
    })?;
    Ok(())
}

pub fn calibrate(input: &str, out: &Path, arm: usize) -> Result<(), Failure> {
    let path = replay_path(input).unwrap_or(input);
    let rec = Recording::load(path)?;
    let mut b = CalibrationBuilder::new();
    for i in rec.inputs() {
        let pose = i.poses.get(arm).ok_or_else(|| {
            Failure::new(
                Kind::Contract,
                format!("recording has {} arms, asked for arm {arm}", i.poses.len()),
            )
        })?;
        b.push(pose);
    }
    let calib = b.finish()?;
    std::fs::write(out, calib.to_toml())?;
    eprintln!(
        "{} samples: center {:?}, radius {}",
        b.samples(),
        calib.human_center,
        calib.human_radius
    );
    Ok(())
}

#[derive(Serialize)]
struct RetargetLine<'a> {
    timestamp: f64,
    q: &'a [f64],
}

pub fn retarget(
    model: &Path,
    keypoints: &Path,
    out: &Path,
    alpha: Option<f64>,
    beta: f64,
) -> Result<(), Failure> {
    let model = HandModel::load(model)?;
    let input = File::open(keypoints)
        .map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", keypoints.display())))?;
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: HandFrame = serde_json::from_str(&line)
            .map_err(|e| Failure::new(Kind::Contract, format!("keypoints line {}: {e}", i + 1)))?;
        frames.push(f);
    }
    let Some(first) = frames.first() else {
        return Err(Failure::new(Kind::Contract, "keypoint stream is empty"));
    };
    let alpha = alpha
        .or(model.alpha())
        .unwrap_or_else(|| model.default_alpha(first));
    let cfg = RetargetConfig::with_alpha(alpha).with_beta(beta);
    let mut r = HandRetargeter::new(model, cfg)?;
    let mut w = BufWriter::new(File::create(out)?);
    for (i, f) in frames.iter().enumerate() {
        let q = r
            .step(f)
            .map_err(|e| Failure::new(Kind::Contract, format!("frame {i}: {e}")))?;
        let line = serde_json::to_string(&RetargetLine {
            timestamp: f.timestamp(),
            q: q.as_slice(),
        })
        .expect("line serializes");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    eprintln!("{} frames retargeted with alpha {alpha}", frames.len());
    Ok(())
}

pub fn verify(path: &Path) -> Result<(), Failure> {
    let rec = Recording::load(path)?;
    let report = verify_recording(&rec);
    if report.ok() {
        println!(
            "ok: {} ticks, metrics match (success_rate={})",
            rec.trailer.ticks, report.recomputed.success_rate
        );
        Ok(())
    } else {
        Err(Failure::new(
            Kind::Mismatch,
            format!("recording does not verify:\n  {}", report.mismatches.join("\n  ")),
        ))
    }
}
