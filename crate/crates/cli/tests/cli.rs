use std::path::Path;
use std::process::{Command, Output};

fn ssnerf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssnerf")).args(args).output().expect("binary runs")
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

const TINY: &str = "\
width = 16
height = 16
samples = 12
hidden_width = 12
trunk_depth = 2
pos_frequencies = 3
dir_frequencies = 1
pretrain_steps = 4
pretrain_batch_rays = 16
finetune_steps = 3
real_batch_rays = 8
patch_side = 6
refresh_every = 2
eval_every = 2
flicker_frames = 3
";

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn usage_on_bad_invocations() {
    let out = ssnerf(&[]);
    assert!(!out.status.success());
    assert!(text(&out).contains("Usage"));
    let out = ssnerf(&["teleport"]);
    assert!(!out.status.success());
    assert!(text(&out).contains("Usage"));
    let out = ssnerf(&["pretrain", "x.toml", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn invalid_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "kappa = 2.0\n");
    let out = ssnerf(&["pretrain", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(text(&out).contains("kappa"));
    let cfg = write(dir.path(), "unknown.toml", "speed = 3\n");
    assert!(!ssnerf(&["pretrain", &cfg]).status.success());
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "tiny.toml", TINY);
    let pre = d.join("pre");
    let out = ssnerf(&["pretrain", &cfg, "--out", pre.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    let ckpt = pre.join("pretrain.ckpt");
    assert!(ckpt.is_file());
    let metrics = std::fs::read_to_string(pre.join("pretrain_metrics.csv")).unwrap();
    assert!(metrics.starts_with("# ssnerf-metrics v1"));
    assert_eq!(metrics.lines().count(), 2 + 4);

    let fine = d.join("fine");
    let out = ssnerf(&["finetune", &cfg, ckpt.to_str().unwrap(), "--out", fine.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    let teacher = fine.join("teacher.ckpt");
    assert!(teacher.is_file());

    let png = d.join("view.png");
    let out = ssnerf(&["render", ckpt.to_str().unwrap(), "identity", png.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(png.is_file());
    let png2 = d.join("orbit.png");
    let out = ssnerf(&["render", teacher.to_str().unwrap(), "orbit:15,20,2.2", png2.to_str().unwrap(), "--config", &cfg]);
    assert!(out.status.success(), "{}", text(&out));

    let out = ssnerf(&["evaluate", teacher.to_str().unwrap(), &cfg]);
    assert!(out.status.success(), "{}", text(&out));
    let report = text(&out);
    assert!(report.contains("heldout"));
    assert!(report.contains("drop"));
    assert!(report.contains("flicker"));

    let out = ssnerf(&["analyze-layers", ckpt.to_str().unwrap(), teacher.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(text(&out).contains("head.rgb"));
}

#[test]
fn architecture_mismatch_and_missing_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "tiny.toml", TINY);
    let out_dir = d.join("pre");
    assert!(ssnerf(&["pretrain", &cfg, "--out", out_dir.to_str().unwrap()]).status.success());
    let ckpt = out_dir.join("pretrain.ckpt");
    let wide = write(d, "wide.toml", &TINY.replace("hidden_width = 12", "hidden_width = 20"));
    let out = ssnerf(&["evaluate", ckpt.to_str().unwrap(), &wide]);
    assert!(!out.status.success());
    assert!(text(&out).contains("error"));
    let out = ssnerf(&["finetune", &cfg, d.join("missing.ckpt").to_str().unwrap()]);
    assert!(!out.status.success());
    let out = ssnerf(&["render", ckpt.to_str().unwrap(), "sideways", d.join("x.png").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "tiny.toml", TINY);
    let run = |name: &str, seed: Option<&str>| {
        let out = d.join(name);
        let mut args = vec!["pretrain", cfg.as_str(), "--out", out.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert!(ssnerf(&args).status.success());
        std::fs::read(out.join("pretrain.ckpt")).unwrap()
    };
    let a = run("a", None);
    let b = run("b", Some("0"));
    let c = run("c", Some("17"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
