//! Session loop and the line-delimited JSON recording format.
//!
//! A recording is one `header` line, then `input` and `frame` lines in the
//! order they happened, then one `trailer` line. Inputs carry the tick that
//! consumed them; frames carry the state after that tick's step.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose6D, Sphere, Vec3};
use crate::mapping::{map_position, MappingParams};

use super::config::{GameConfig, SimulatorError};
use super::operators::{Observation, OperatorPoll, OperatorSource};
use super::rng::RNG_NAME;
use super::{compute_metrics, reached, GameState, Outcome, PairRecord, SessionMetrics};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub rng: String,
    pub config_hash: String,
    pub seed: u64,
    pub operator: String,
    pub config: GameConfig,
    pub initial_human: Vec<Pose6D>,
    pub initial_ee: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRecord {
    pub tick: u64,
    pub poses: Vec<Pose6D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub tick: u64,
    pub clock: f64,
    pub human: Vec<Pose6D>,
    pub ee: Vec<[f64; 3]>,
    pub target_id: u64,
    pub targets: Vec<[f64; 3]>,
    pub inside: Vec<bool>,
    pub keep_timer: f64,
    pub event: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trailer {
    pub ticks: u64,
    pub received: u64,
    pub recorded: u64,
    pub dropped: u64,
    pub truncated: bool,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RecordLine {
    Header(Header),
    Input(InputRecord),
    Frame(FrameRecord),
    Trailer(Trailer),
}

impl RecordLine {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub header: Header,
    pub body: Vec<RecordLine>,
    pub trailer: Trailer,
}

impl Recording {
    pub fn frames(&self) -> impl Iterator<Item = &FrameRecord> {
        self.body.iter().filter_map(|l| match l {
            RecordLine::Frame(f) => Some(f),
            _ => None,
        })
    }

    pub fn inputs(&self) -> impl Iterator<Item = &InputRecord> {
        self.body.iter().filter_map(|l| match l {
            RecordLine::Input(i) => Some(i),
            _ => None,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", RecordLine::Header(self.header.clone()).to_json())?;
        for l in &self.body {
            writeln!(w, "{}", l.to_json())?;
        }
        writeln!(w, "{}", RecordLine::Trailer(self.trailer.clone()).to_json())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, SimulatorError> {
        let mut header = None;
        let mut trailer = None;
        let mut body = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| SimulatorError::Recording(format!("line {}: {e}", n + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            if trailer.is_some() {
                return Err(SimulatorError::Recording(format!("line {}: data after trailer", n + 1)));
            }
            let rec: RecordLine = serde_json::from_str(&line)
                .map_err(|e| SimulatorError::Recording(format!("line {}: {e}", n + 1)))?;
            match rec {
                RecordLine::Header(h) if header.is_none() && n == 0 => {
                    if h.format_version != FORMAT_VERSION || h.rng != RNG_NAME {
                        return Err(SimulatorError::Recording(format!(
                            "unsupported format {} / rng {}",
                            h.format_version, h.rng
                        )));
                    }
                    header = Some(h);
                }
                RecordLine::Header(_) => {
                    return Err(SimulatorError::Recording(format!("line {}: unexpected header", n + 1)))
                }
                _ if header.is_none() => {
                    return Err(SimulatorError::Recording("missing header".into()))
                }
                RecordLine::Trailer(t) => trailer = Some(t),
                other => body.push(other),
            }
        }
        Ok(Self {
            header: header.ok_or_else(|| SimulatorError::Recording("empty recording".into()))?,
            body,
            trailer: trailer.ok_or_else(|| SimulatorError::Recording("missing trailer".into()))?,
        })
    }

    pub fn parse(text: &str) -> Result<Self, SimulatorError> {
        Self::read_from(text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimulatorError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|source| SimulatorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SimulatorError> {
        let path = path.as_ref();
        let io = |source| SimulatorError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }
}

/// A running session. Inputs are submitted, then `tick` advances the game
/// one fixed step with the latest wrist poses held.
pub struct Simulation {
    config: GameConfig,
    mappings: Vec<MappingParams>,
    state: GameState,
    human: Vec<Pose6D>,
    tick: u64,
    received: u64,
    recorded: u64,
    header: Header,
    body: Vec<RecordLine>,
    writer: Option<Box<dyn Write + Send>>,
}

impl Simulation {
    pub fn new(config: GameConfig, operator: impl Into<String>) -> Self {
        let mappings = config.mappings();
        let human: Vec<Pose6D> = config
            .arms
            .iter()
            .map(|a| Pose6D::from_position(Vec3::from(a.human_center)))
            .collect();
        let ee: Vec<Vec3> = human
            .iter()
            .zip(&mappings)
            .map(|(h, m)| map_position(h, m).position)
            .collect();
        let state = GameState::new(&config, &ee);
        let header = Header {
            format_version: FORMAT_VERSION,
            rng: RNG_NAME.into(),
            config_hash: config.hash(),
            seed: config.rng_seed,
            operator: operator.into(),
            config: config.clone(),
            initial_human: human.clone(),
            initial_ee: ee.iter().map(|p| (*p).into()).collect(),
        };
        Self {
            config,
            mappings,
            state,
            human,
            tick: 0,
            received: 0,
            recorded: 0,
            header,
            body: Vec::new(),
            writer: None,
        }
    }

    /// Streams every line to `w` as it is produced, starting with the header.
    pub fn with_writer(mut self, mut w: Box<dyn Write + Send>) -> std::io::Result<Self> {
        writeln!(w, "{}", RecordLine::Header(self.header.clone()).to_json())?;
        self.writer = Some(w);
        Ok(self)
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn mappings(&self) -> &[MappingParams] {
        &self.mappings
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn human(&self) -> &[Pose6D] {
        &self.human
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn done(&self) -> bool {
        self.tick >= self.config.ticks()
    }

    pub fn observation(&self) -> Observation<'_> {
        Observation {
            tick: self.tick,
            clock: self.state.clock,
            dt: self.config.dt(),
            target_id: self.state.current.id,
            targets: self.state.targets(),
            ee: self.state.arms.iter().map(|a| a.ee).collect(),
            human: &self.human,
            mappings: &self.mappings,
            config: &self.config,
        }
    }

    fn emit(&mut self, line: RecordLine) {
        if let Some(w) = self.writer.as_mut() {
            if writeln!(w, "{}", line.to_json()).is_err() {
                // Keep the in-memory copy; the file sink is best effort.
                self.writer = None;
            }
        }
        self.body.push(line);
    }

    /// Accepts one set of per-arm wrist poses for the coming tick.
    pub fn submit(&mut self, poses: Vec<Pose6D>) -> Result<(), SimulatorError> {
        self.received += 1;
        if poses.len() != self.human.len() {
            return Err(SimulatorError::OperatorArity {
                expected: self.human.len(),
                got: poses.len(),
            });
        }
        if poses.iter().any(|p| !p.is_finite()) {
            return Err(SimulatorError::Recording("non-finite wrist pose".into()));
        }
        self.recorded += 1;
        self.human = poses.clone();
        self.emit(RecordLine::Input(InputRecord {
            tick: self.tick,
            poses,
        }));
        Ok(())
    }

    /// Counts an input that was rejected before reaching the session.
    pub fn note_dropped(&mut self) {
        self.received += 1;
    }

    pub fn step(&mut self) -> FrameRecord {
        let ee: Vec<Vec3> = self
            .human
            .iter()
            .zip(&self.mappings)
            .map(|(h, m)| map_position(h, m).position)
            .collect();
        let target_id = self.state.current.id;
        let targets: Vec<Sphere> = self.state.targets();
        let result = self.state.step(&ee, self.config.dt());
        let frame = FrameRecord {
            tick: self.tick,
            clock: self.state.clock,
            human: self.human.clone(),
            ee: ee.iter().map(|p| (*p).into()).collect(),
            target_id,
            targets: targets.iter().map(|t| t.center().into()).collect(),
            inside: result.inside,
            keep_timer: result.keep_timer,
            event: result.outcome,
        };
        self.tick += 1;
        self.emit(RecordLine::Frame(frame.clone()));
        frame
    }

    pub fn metrics(&self) -> SessionMetrics {
        self.state.metrics()
    }

    pub fn finish(mut self, truncated: bool) -> Recording {
        let trailer = Trailer {
            ticks: self.tick,
            received: self.received,
            recorded: self.recorded,
            dropped: self.received - self.recorded,
            truncated,
            metrics: self.state.metrics(),
        };
        if let Some(w) = self.writer.as_mut() {
            let _ = writeln!(w, "{}", RecordLine::Trailer(trailer.clone()).to_json());
            let _ = w.flush();
        }
        Recording {
            header: self.header,
            body: self.body,
            trailer,
        }
    }
}

/// Runs a headless session to completion or operator exhaustion.
pub fn run_session(
    config: &GameConfig,
    operator: &mut dyn OperatorSource,
) -> Result<(SessionMetrics, Recording), SimulatorError> {
    let mut sim = Simulation::new(config.clone(), operator.name());
    let mut truncated = false;
    while !sim.done() {
        match operator.poll(&sim.observation()) {
            OperatorPoll::Exhausted => {
                truncated = true;
                break;
            }
            OperatorPoll::Inputs(sets) => {
                for poses in sets {
                    sim.submit(poses)?;
                }
            }
        }
        sim.step();
    }
    let rec = sim.finish(truncated);
    Ok((rec.trailer.metrics.clone(), rec))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub recomputed: SessionMetrics,
    pub mismatches: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes metrics and bookkeeping from the frames alone and compares
/// them with the trailer.
pub fn verify(rec: &Recording) -> VerifyReport {
    let cfg = &rec.header.config;
    let mut mismatches = Vec::new();
    if cfg.hash() != rec.header.config_hash {
        mismatches.push("config hash does not match header config".into());
    }
    let arms = rec.header.initial_ee.len();
    let tolerance = cfg.target_radius - cfg.ee_radius;
    let mut prev: Vec<Vec3> = rec.header.initial_ee.iter().map(|p| Vec3::from(*p)).collect();
    let mut total = vec![0.0; arms];
    let mut records: Vec<PairRecord> = Vec::new();
    let mut spawn: (f64, Vec<Vec3>) = (0.0, prev.clone());
    let mut current: Option<PairRecord> = None;
    let mut clock = 0.0;
    let mut frames = 0u64;
    for f in rec.frames() {
        if f.tick != frames {
            mismatches.push(format!("frame {frames} has tick {}", f.tick));
        }
        frames += 1;
        clock = f.clock;
        let cur = current.get_or_insert_with(|| PairRecord {
            id: f.target_id,
            spawn_time: spawn.0,
            spawn_ee: spawn.1.clone(),
            targets: f.targets.iter().map(|t| Vec3::from(*t)).collect(),
            path: vec![0.0; arms],
            resolved: None,
        });
        if cur.id != f.target_id {
            mismatches.push(format!("tick {}: target changed without an event", f.tick));
        }
        for i in 0..arms {
            let p = Vec3::from(f.ee[i]);
            let d = (p - prev[i]).norm();
            total[i] += d;
            cur.path[i] += d;
            prev[i] = p;
            let ee = Sphere::new(p, cfg.ee_radius).expect("validated radius");
            let target = Sphere::new(Vec3::from(f.targets[i]), cfg.target_radius).expect("validated radius");
            if reached(&ee, &target) != f.inside[i] {
                mismatches.push(format!("tick {}: inside flag of arm {i} disagrees", f.tick));
            }
        }
        if let Some(o) = f.event {
            let mut done = current.take().expect("pair in progress");
            done.resolved = Some((o, f.clock));
            records.push(done);
            spawn = (f.clock, prev.clone());
        }
    }
    let recomputed = compute_metrics(&records, &total, clock, tolerance);
    let t = &rec.trailer;
    if recomputed != t.metrics {
        mismatches.push(format!("metrics differ: recomputed {recomputed:?}, trailer {:?}", t.metrics));
    }
    if frames != t.ticks {
        mismatches.push(format!("{frames} frames, trailer says {}", t.ticks));
    }
    let inputs = rec.inputs().count() as u64;
    if inputs != t.recorded {
        mismatches.push(format!("{inputs} inputs, trailer says {}", t.recorded));
    }
    if t.received < t.recorded || t.dropped != t.received - t.recorded {
        mismatches.push("dropped count is not received − recorded".into());
    }
    VerifyReport {
        recomputed,
        mismatches,
    }
}
