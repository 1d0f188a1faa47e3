use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Position, Vec2};

pub type AgentId = u64;

/// Frame interval of the ETH/UCY and SDD recordings, in seconds.
pub const ETH_UCY_FRAME_DT: f64 = 0.4;
/// Frame interval of the downsampled NBA recordings, in seconds.
pub const NBA_FRAME_DT: f64 = 0.12;

/// One contiguous run of positions of an agent, starting at frame index
/// `first`. An agent that disappears and reappears owns several tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub agent: AgentId,
    pub first: usize,
    pub positions: Vec<Position>,
}

impl Track {
    pub fn last(&self) -> usize {
        self.first + self.positions.len() - 1
    }

    pub fn at(&self, frame: usize) -> Option<Position> {
        frame
            .checked_sub(self.first)
            .and_then(|k| self.positions.get(k))
            .copied()
    }
}

/// All agents of one recording, indexed by frame.
#[derive(Debug, Clone)]
pub struct TrajectoryScene {
    pub scene_id: String,
    pub frame_dt: f64,
    pub unit_scale: f64,
    /// Raw frame ids, strictly increasing. Frame indices used everywhere
    /// else are positions in this list.
    pub frames: Vec<i64>,
    pub tracks: Vec<Track>,
    presence: Vec<Vec<usize>>,
}

impl TrajectoryScene {
    pub fn new(
        scene_id: impl Into<String>,
        frame_dt: f64,
        unit_scale: f64,
        frames: Vec<i64>,
        tracks: Vec<Track>,
    ) -> Result<Self> {
        if frame_dt.is_nan() || frame_dt <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "frame_dt must be > 0, got {frame_dt}"
            )));
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("frame ids must be strictly increasing".into()));
        }
        let mut presence = vec![Vec::new(); frames.len()];
        for (k, track) in tracks.iter().enumerate() {
            if track.positions.is_empty() || track.last() >= frames.len() {
                return Err(Error::Data(format!(
                    "track of agent {} lies outside the frame range",
                    track.agent
                )));
            }
            for f in track.first..=track.last() {
                if presence[f]
                    .iter()
                    .any(|&o: &usize| tracks[o].agent == track.agent)
                {
                    return Err(Error::Data(format!(
                        "agent {} appears twice in frame {}",
                        track.agent, frames[f]
                    )));
                }
                presence[f].push(k);
            }
        }
        Ok(Self {
            scene_id: scene_id.into(),
            frame_dt,
            unit_scale,
            frames,
            tracks,
            presence,
        })
    }

    /// Builds a scene from per-agent lists of (frame index, position).
    /// Consecutive frame indices form one track; gaps start a new one.
    pub fn from_samples(
        scene_id: impl Into<String>,
        frame_dt: f64,
        unit_scale: f64,
        frames: Vec<i64>,
        samples: BTreeMap<AgentId, Vec<(usize, Position)>>,
    ) -> Result<Self> {
        let mut tracks = Vec::new();
        for (agent, rows) in samples {
            let mut current: Option<Track> = None;
            for (f, p) in rows {
                match current.as_mut() {
                    Some(t) if t.last() + 1 == f => t.positions.push(p),
                    _ => {
                        if let Some(t) = current.take() {
                            tracks.push(t);
                        }
                        current = Some(Track {
                            agent,
                            first: f,
                            positions: vec![p],
                        });
                    }
                }
            }
            tracks.extend(current);
        }
        Self::new(scene_id, frame_dt, unit_scale, frames, tracks)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_agents(&self) -> usize {
        let mut ids: Vec<AgentId> = self.tracks.iter().map(|t| t.agent).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Tracks present at a frame index, in track order.
    pub fn present(&self, frame: usize) -> impl Iterator<Item = &Track> + '_ {
        self.presence
            .get(frame)
            .into_iter()
            .flatten()
            .map(move |&k| &self.tracks[k])
    }

    pub fn position(&self, agent: AgentId, frame: usize) -> Option<Position> {
        self.present(frame)
            .find(|t| t.agent == agent)
            .and_then(|t| t.at(frame))
    }

    /// Per-frame displacement of an agent arriving at `frame`; zero when the
    /// agent was not present at the previous frame.
    pub fn displacement(&self, agent: AgentId, frame: usize) -> Vec2 {
        match (self.position(agent, frame), frame.checked_sub(1)) {
            (Some(p), Some(prev)) => self
                .position(agent, prev)
                .map(|q| p - q)
                .unwrap_or(Vec2::ZERO),
            _ => Vec2::ZERO,
        }
    }

    /// Returns a copy with every position shifted by `offset`.
    pub fn translated(&self, offset: Vec2) -> Self {
        let mut out = self.clone();
        for t in &mut out.tracks {
            for p in &mut t.positions {
                *p = *p + offset;
            }
        }
        out
    }
}

/// Column layout and unit handling for plain-text trajectory files.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Field indices of frame id, agent id, x and y.
    pub columns: [usize; 4],
    /// `None` splits on any run of whitespace.
    pub delimiter: Option<char>,
    pub unit_scale: f64,
    pub frame_dt: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            columns: [0, 1, 2, 3],
            delimiter: None,
            unit_scale: 1.0,
            frame_dt: ETH_UCY_FRAME_DT,
        }
    }
}

fn parse_number(field: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot read {what} from {field:?}"),
    })
}

/// Parses "frame agent x y" rows. Blank lines and lines starting with '#'
/// are skipped. Line numbers in errors are 1-based.
pub fn parse_trajectory_str(
    text: &str,
    scene_id: &str,
    opts: &ParseOptions,
) -> Result<TrajectoryScene> {
    let need = opts.columns.iter().max().copied().unwrap_or(3) + 1;
    let mut rows: Vec<(i64, AgentId, Position)> = Vec::new();
    let mut last_frame: BTreeMap<AgentId, i64> = BTreeMap::new();

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match opts.delimiter {
            None => trimmed.split_whitespace().collect(),
            Some(c) => trimmed.split(c).map(str::trim).collect(),
        };
        if fields.len() < need.max(4) {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "expected at least {} fields, found {}",
                    need.max(4),
                    fields.len()
                ),
            });
        }
        let [cf, ci, cx, cy] = opts.columns;
        let frame = parse_number(fields[cf], line, "frame id")?;
        let agent = parse_number(fields[ci], line, "agent id")?;
        let x = parse_number(fields[cx], line, "x")?;
        let y = parse_number(fields[cy], line, "y")?;
        if frame.fract() != 0.0 || agent.fract() != 0.0 || agent < 0.0 {
            return Err(Error::Parse {
                line,
                msg: "frame and agent ids must be integral".into(),
            });
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Parse {
                line,
                msg: "non-finite coordinate".into(),
            });
        }
        let (frame, agent) = (frame as i64, agent as AgentId);
        if let Some(&prev) = last_frame.get(&agent) {
            if frame <= prev {
                return Err(Error::Data(format!(
                    "line {line}: agent {agent} frame {frame} does not follow frame {prev}"
                )));
            }
        }
        last_frame.insert(agent, frame);
        rows.push((
            frame,
            agent,
            Position::new(x * opts.unit_scale, y * opts.unit_scale),
        ));
    }

    let mut frames: Vec<i64> = rows.iter().map(|r| r.0).collect();
    frames.sort_unstable();
    frames.dedup();

    let mut samples: BTreeMap<AgentId, Vec<(usize, Position)>> = BTreeMap::new();
    for (frame, agent, p) in rows {
        let idx = frames.binary_search(&frame).expect("frame collected above");
        samples.entry(agent).or_default().push((idx, p));
    }
    TrajectoryScene::from_samples(scene_id, opts.frame_dt, opts.unit_scale, frames, samples)
}

pub fn parse_trajectory_file(
    path: impl AsRef<Path>,
    opts: &ParseOptions,
) -> Result<TrajectoryScene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let scene_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_trajectory_str(&text, &scene_id, opts)
}
