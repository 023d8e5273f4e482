use std::path::Path;
use std::process::Command;

fn recsel(args: &[&str], dir: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_recsel"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn step_by_step_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    recsel(&["synth", "--users", "80", "--items", "200", "-o", "u.data"], d);
    recsel(&["prepare", "u.data", "--min-ratings", "20", "-o", "split.csv"], d);
    let split = std::fs::read_to_string(d.join("split.csv")).unwrap();
    assert!(split.starts_with("user_id,item_id,rating,fold\n"));
    recsel(
        &["fit", "--split", "split.csv", "--factors", "8", "--epochs", "5", "-o", "model.csv"],
        d,
    );
    let model = std::fs::read_to_string(d.join("model.csv")).unwrap();
    assert!(model.lines().nth(1).unwrap().starts_with("meta,0,1,"));

    for (method, extra) in [
        ("top-n", vec![]),
        ("mv", vec!["--alpha", "0.3"]),
        ("dro", vec!["--formulation", "plain"]),
    ] {
        let out = format!("{method}.csv");
        let mut args = vec![
            "select",
            "--split",
            "split.csv",
            "--model",
            "model.csv",
            "--method",
            method,
            "--users",
            "4",
            "-o",
            &out,
        ];
        args.extend(extra);
        recsel(&args, d);
        let text = std::fs::read_to_string(d.join(&out)).unwrap();
        assert!(text.starts_with("run,user_id,method,param,rank,item_id\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 3);
    }
    let table = recsel(
        &["evaluate", "--split", "split.csv", "top-n.csv", "mv.csv", "dro.csv", "-o", "eval"],
        d,
    );
    assert!(table.contains("top_n") && table.contains("dro"));
    let report = std::fs::read_to_string(d.join("eval/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
}

#[test]
fn config_driven_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let default = recsel(&["config"], d);
    assert!(default.contains("split_ratio = 0.6"));
    std::fs::write(
        d.join("exp.toml"),
        r#"
runs = 1
users_per_run = 4
list_sizes = [3]
min_ratings = 20

[dataset]
kind = "synthetic"
users = 60
items = 120
median_ratings = 35.0

[predictor]
factors = 8
epochs = 5

[methods.mean_variance]
alphas = [0.2]

[methods.dro]
kappas = [[0.1, 0.1]]
formulation = { kind = "plain" }
"#,
    )
    .unwrap();
    recsel(&["run", "exp.toml", "-o", "a", "--no-timing"], d);
    recsel(&["run", "exp.toml", "-o", "b", "--no-timing"], d);
    let a = std::fs::read(d.join("a/report.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/report.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 4);
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_recsel"))
        .args(["prepare", "missing.data", "-o", "s.csv"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.data"));
}
