//! Training and evaluation windows from trajectory files or a generated
//! scene, with an optional on-disk cache.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tvae_core::data::{
    make_windows, parse_trajectory_file, synthetic_scene, ObservationWindow, SynthConfig,
};

use crate::config::{EvalSplit, RunConfig};
use crate::container::{self, Record};

/// Keys whose values determine the window lists.
const DATA_KEYS: &[&str] = &[
    "train_paths",
    "test_paths",
    "data_dir",
    "test_scene",
    "delimiter",
    "columns",
    "unit_scale",
    "frame_dt",
    "synthetic",
    "synthetic_agents",
    "synthetic_frames",
    "synthetic_seed",
    "synthetic_train_fraction",
    "obs_len",
    "pred_len",
    "stride",
    "radius",
];

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<ObservationWindow>,
    pub test: Vec<ObservationWindow>,
}

impl Dataset {
    /// Loads both splits, then applies the window limits.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let mut ds = if cfg.window_cache.is_empty() {
            Self::build(cfg)?
        } else {
            Self::cached(cfg, Path::new(&cfg.window_cache))?
        };
        truncate(&mut ds.train, cfg.max_train_windows);
        truncate(&mut ds.test, cfg.max_test_windows);
        Ok(ds)
    }

    /// The split selected by `eval_split`.
    pub fn evaluation(self, cfg: &RunConfig) -> Vec<ObservationWindow> {
        match cfg.eval_split {
            EvalSplit::Train => self.train,
            EvalSplit::Test => self.test,
        }
    }

    pub fn build(cfg: &RunConfig) -> Result<Self> {
        if cfg.synthetic {
            return synthetic_split(cfg);
        }
        let (train_paths, test_paths) = resolve_paths(cfg);
        Ok(Self {
            train: windows_from(cfg, &collect_files(&train_paths)?)?,
            test: windows_from(cfg, &collect_files(&test_paths)?)?,
        })
    }

    fn cached(cfg: &RunConfig, path: &Path) -> Result<Self> {
        let key = cache_key(cfg);
        if path.exists() {
            let bytes = std::fs::read(path)?;
            let records = container::read_records(&mut bytes.as_slice())
                .with_context(|| format!("reading window cache {}", path.display()))?;
            let get = |name: &str| records.iter().find(|r| r.name == name);
            if let (Some(k), Some(train), Some(test)) = (get("key"), get("train"), get("test")) {
                if k.as_bytes()? == key.as_bytes() {
                    return Ok(Self {
                        train: serde_json::from_slice(train.as_bytes()?)?,
                        test: serde_json::from_slice(test.as_bytes()?)?,
                    });
                }
            }
        }
        let ds = Self::build(cfg)?;
        let records = vec![
            Record::bytes("key", key.into_bytes()),
            Record::bytes("train", serde_json::to_vec(&ds.train)?),
            Record::bytes("test", serde_json::to_vec(&ds.test)?),
        ];
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, container::to_bytes(&records)?)
            .with_context(|| format!("writing window cache {}", path.display()))?;
        Ok(ds)
    }
}

fn truncate(windows: &mut Vec<ObservationWindow>, max: usize) {
    if max > 0 {
        windows.truncate(max);
    }
}

fn cache_key(cfg: &RunConfig) -> String {
    cfg.to_text()
        .lines()
        .filter(|l| {
            l.split_once(" = ")
                .is_some_and(|(k, _)| DATA_KEYS.contains(&k))
        })
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Explicit paths win; otherwise `data_dir/test_scene/{train,test}`.
fn resolve_paths(cfg: &RunConfig) -> (Vec<PathBuf>, Vec<PathBuf>) {
    let held = Path::new(&cfg.data_dir).join(&cfg.test_scene);
    let pick = |explicit: &[String], sub: &str| -> Vec<PathBuf> {
        if !explicit.is_empty() {
            explicit.iter().map(PathBuf::from).collect()
        } else if !cfg.test_scene.is_empty() {
            vec![held.join(sub)]
        } else {
            Vec::new()
        }
    };
    (
        pick(&cfg.train_paths, "train"),
        pick(&cfg.test_paths, "test"),
    )
}

/// Files under `paths`, directories walked recursively, in sorted order.
/// Hidden entries are skipped.
pub fn collect_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(p: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.sort();
            for e in entries {
                let hidden = e
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with('.'));
                if !hidden {
                    walk(&e, out)?;
                }
            }
        } else if p.is_file() {
            out.push(p.to_path_buf());
        } else {
            bail!("no such file or directory: {}", p.display());
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in paths {
        walk(p, &mut out)?;
    }
    Ok(out)
}

fn windows_from(cfg: &RunConfig, files: &[PathBuf]) -> Result<Vec<ObservationWindow>> {
    let opts = cfg.parse_options();
    let spec = cfg.window_spec();
    let mut out = Vec::new();
    for f in files {
        let scene =
            parse_trajectory_file(f, &opts).with_context(|| format!("parsing {}", f.display()))?;
        out.extend(make_windows(&scene, &spec)?);
    }
    Ok(out)
}

/// One generated scene cut in time: training windows end before the split
/// frame, evaluation windows start at or after it.
fn synthetic_split(cfg: &RunConfig) -> Result<Dataset> {
    let synth = SynthConfig {
        num_agents: cfg.synthetic_agents,
        num_frames: cfg.synthetic_frames,
        frame_dt: cfg.frame_dt,
        ..SynthConfig::default()
    };
    if synth.num_frames < synth.lifespan.1 {
        bail!("synthetic_frames must be at least {}", synth.lifespan.1);
    }
    let scene = synthetic_scene(&synth, cfg.synthetic_seed);
    let split = (cfg.synthetic_train_fraction * cfg.synthetic_frames as f64).floor() as i64;
    let span = (cfg.obs_len + cfg.pred_len) as i64;
    let all = make_windows(&scene, &cfg.window_spec())?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for w in all {
        if w.start_frame + span <= split {
            train.push(w);
        } else if w.start_frame >= split {
            test.push(w);
        }
    }
    Ok(Dataset { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_cfg() -> RunConfig {
        let mut c = RunConfig::default();
        c.apply_overrides(&[
            "synthetic=true",
            "synthetic_agents=20",
            "synthetic_frames=120",
        ])
        .unwrap();
        c
    }

    #[test]
    fn synthetic_split_is_disjoint_in_time() {
        let cfg = synth_cfg();
        let ds = Dataset::load(&cfg).unwrap();
        assert!(!ds.train.is_empty() && !ds.test.is_empty());
        assert!(ds.train.iter().all(|w| w.start_frame + 20 <= 60));
        assert!(ds.test.iter().all(|w| w.start_frame >= 60));
    }

    #[test]
    fn limits_keep_the_leading_windows() {
        let mut cfg = synth_cfg();
        let full = Dataset::load(&cfg).unwrap();
        cfg.set("max_train_windows", "3").unwrap();
        let cut = Dataset::load(&cfg).unwrap();
        assert_eq!(cut.train, full.train[..3].to_vec());
        assert_eq!(cut.test, full.test);
    }

    #[test]
    fn files_are_collected_sorted_and_split_by_scene_folder() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let line = |a: u32| -> String {
            (0..25)
                .map(|f| format!("{} {a} {} 1.0\n", f * 10, f as f64 * 0.3))
                .collect()
        };
        std::fs::create_dir_all(root.join("eth/train/sub")).unwrap();
        std::fs::create_dir_all(root.join("eth/test")).unwrap();
        std::fs::write(root.join("eth/train/b.txt"), line(1)).unwrap();
        std::fs::write(root.join("eth/train/sub/a.txt"), line(2)).unwrap();
        std::fs::write(root.join("eth/train/.hidden"), "garbage").unwrap();
        std::fs::write(root.join("eth/test/c.txt"), line(3)).unwrap();

        let files = collect_files(&[root.join("eth/train")]).unwrap();
        let names: Vec<_> = files
            .iter()
            .map(|f| f.file_name().unwrap().to_owned())
            .collect();
        assert_eq!(names, ["b.txt", "a.txt"]);

        let cfg = RunConfig {
            data_dir: root.to_string_lossy().into_owned(),
            test_scene: "eth".into(),
            ..RunConfig::default()
        };
        let ds = Dataset::load(&cfg).unwrap();
        assert_eq!(ds.train.len(), 12);
        assert_eq!(ds.test.len(), 6);
        assert!(ds.test.iter().all(|w| w.scene_id == "c"));
    }

    #[test]
    fn missing_path_is_an_error() {
        let cfg = RunConfig {
            train_paths: vec!["/definitely/not/here".into()],
            ..RunConfig::default()
        };
        assert!(Dataset::load(&cfg).is_err());
    }

    #[test]
    fn cache_is_reused_and_rebuilt_on_change() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synth_cfg();
        cfg.window_cache = dir.path().join("w.svae").to_string_lossy().into_owned();
        let first = Dataset::load(&cfg).unwrap();
        let again = Dataset::load(&cfg).unwrap();
        assert_eq!(first.train, again.train);
        assert_eq!(first.test, again.test);

        cfg.set("synthetic_seed", "3").unwrap();
        let other = Dataset::load(&cfg).unwrap();
        assert_eq!(other.train, Dataset::build(&cfg).unwrap().train);
        assert_ne!(other.train, first.train);
    }
}
