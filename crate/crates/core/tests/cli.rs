use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_event-stories"))
}

#[test]
fn gen_run_eval_stats() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let spec = dir.path().join("gen.cfg");
    fs::write(&spec, "stories = 8\nsources = 2\n").unwrap();
    let st = bin()
        .args(["gen", "--seed", "4", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap();
    assert!(st.success());

    let config = dir.path().join("engine.cfg");
    fs::write(&config, "window_hours = 12\nalpha_v = 0.3\ndimension.entities.weight = 0.5\ndimension.topics.weight = 0.5\n").unwrap();
    let out = dir.path().join("out");
    let st = bin()
        .arg("run")
        .arg("--data")
        .arg(&data)
        .arg("--config")
        .arg(&config)
        .args(["--mode", "round", "--workers", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    for f in ["metrics.csv", "stories.csv", "aligned.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(fs::read_to_string(out.join("aligned.csv"))
        .unwrap()
        .starts_with("cluster_id,source,aligned_story_id\n"));

    let truth = dir.path().join("data.jsonl.truth.csv");
    let eval = bin()
        .arg("eval")
        .arg("--stories")
        .arg(out.join("stories.csv"))
        .arg("--truth")
        .arg(&truth)
        .output()
        .unwrap();
    assert!(eval.status.success());
    let text = String::from_utf8(eval.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("precision,recall,f_measure"));
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));

    let stats = bin()
        .arg("stats")
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert!(stats.status.success());
    assert!(String::from_utf8(stats.stdout)
        .unwrap()
        .starts_with("day,source,count\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "alpha_v = 7\n").unwrap();
    let data = dir.path().join("d.jsonl");
    fs::write(&data, "").unwrap();
    let code = |args: &[&std::ffi::OsStr]| bin().args(args).status().unwrap().code();

    // validation
    assert_eq!(
        code(&[
            "run".as_ref(),
            "--data".as_ref(),
            data.as_os_str(),
            "--config".as_ref(),
            bad_cfg.as_os_str(),
            "--out".as_ref(),
            dir.path().as_os_str()
        ]),
        Some(1)
    );
    fs::write(&data, "{not json}\n").unwrap();
    assert_eq!(
        code(&["stats".as_ref(), "--data".as_ref(), data.as_os_str()]),
        Some(1)
    );
    // runtime
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(
        code(&["stats".as_ref(), "--data".as_ref(), missing.as_os_str()]),
        Some(2)
    );
}
