//! Runs the `tvae` binary end to end on a tiny generated scene.

use std::path::Path;
use std::process::Command;

use tvae_cli::checkpoint::Checkpoint;

const SETTINGS: &[&str] = &[
    "synthetic=true",
    "synthetic_agents=16",
    "synthetic_frames=100",
    "max_train_windows=16",
    "max_test_windows=4",
    "obs_len=5",
    "pred_len=4",
    "latent_dim=3",
    "obs_hidden=6",
    "rnn_hidden=6",
    "embed_dim=6",
    "attn_dim=3",
    "head_hidden=6",
    "batch_size=8",
    "steps=20",
    "checkpoint_every=10",
    "k=3",
    "fpc_rate=4",
    "nll_samples=50",
    "heatmap_samples=40",
    "heatmap_bins=8",
    "sweep_rates=2,4",
    "latent_samples=5",
    "latent_speeds=0.5",
    "latent_turns=-30,30",
    "latent_turn_frame=3",
];

fn tvae(out: &Path, args: &[&str]) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tvae"));
    cmd.args(args).arg("--out").arg(out).args(["--seed", "3"]);
    for s in SETTINGS {
        cmd.args(["--set", s]);
    }
    let res = cmd.output().unwrap();
    assert!(
        res.status.success(),
        "tvae {args:?} failed: {}",
        String::from_utf8_lossy(&res.stderr)
    );
    String::from_utf8(res.stdout).unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn every_command_writes_its_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    tvae(out, &["train"]);
    let loss = read(out.join("loss.csv"));
    assert!(loss.starts_with("step,loss,recon,kl\n"));
    assert_eq!(loss.lines().count(), 21);

    let eval = tvae(out, &["eval"]);
    assert!(
        eval.starts_with("variant,scene,count,ade,fde,nll,nll_total\n"),
        "{eval}"
    );
    let json: serde_json::Value = serde_json::from_str(&read(out.join("metrics.json"))).unwrap();
    assert_eq!(json["without_fpc"]["count"], 4);
    assert!(json["with_fpc"]["nll"].as_f64().unwrap().is_finite());
    assert_eq!(read(out.join("metrics.csv")), eval);
    assert_eq!(tvae(out, &["eval", "--threads", "2"]), eval);

    tvae(out, &["predict"]);
    let samples = read(out.join("samples.csv"));
    assert!(samples.starts_with("window,sample,t,x,y\n"));
    assert_eq!(samples.lines().count(), 1 + 4 * 3 * 4);
    let grid = read(out.join("heatmaps/heatmap_00000.csv"));
    assert_eq!(grid.lines().count(), 8);
    let cells: u32 = grid
        .lines()
        .flat_map(|l| l.split(',').map(|c| c.parse::<u32>().unwrap()))
        .sum();
    assert_eq!(cells, 40 * 4);
    for line in read(out.join("attention.jsonl")).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let w = v["weight"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&w));
        assert!(v["frame"].as_u64().unwrap() >= 1);
    }

    let sweep = tvae(out, &["fpc-sweep"]);
    let rates: Vec<&str> = sweep
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(rates, ["1", "2", "4"]);
    assert!(sweep.lines().nth(1).unwrap().ends_with(",1,1"));

    tvae(out, &["latent-dump"]);
    let latents = read(out.join("latents.csv"));
    assert!(latents.starts_with("speed,turn_deg,sample,z0,z1,z2\n"));
    assert_eq!(latents.lines().count(), 1 + 2 * 5);

    let base = tvae(out, &["baseline"]);
    assert!(base.starts_with("scene,count,ade,fde,nll,nll_total\n"));

    let again = tempfile::tempdir().unwrap();
    tvae(again.path(), &["train"]);
    assert_eq!(read(again.path().join("loss.csv")), loss);
    let a = Checkpoint::load(&again.path().join("checkpoint.svae")).unwrap();
    let b = Checkpoint::load(&out.join("checkpoint.svae")).unwrap();
    assert_eq!(
        (a.step, &a.params, &a.optimizer),
        (b.step, &b.params, &b.optimizer)
    );
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_tvae"))
        .args(["baseline", "--set", "no_such_key=1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("no_such_key"));
}
