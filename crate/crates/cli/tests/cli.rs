use std::path::Path;
use std::process::{Command, Output};

fn rectex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rectex"))
        .args(args)
        .output()
        .expect("rectex runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn setup(dir: &Path) -> String {
    let data = dir.join("planted.csv");
    stdout(&rectex(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--rows",
        "200",
    ]));
    let conf = dir.join("run.conf");
    std::fs::write(
        &conf,
        "version = 1\ndataset = planted.csv\nlabel = class\ntrees = 20\nsamples = 200\n\
         kernel_width = 1\nridge = 0.1\nflip_probability = 0.2\nrank = 4\nr_max = 3\noutput = out\n",
    )
    .unwrap();
    conf.to_str().unwrap().to_owned()
}

#[test]
fn extract_then_render() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    let text = stdout(&rectex(&["extract", "-c", &conf]));
    assert!(text.contains("category 1 (A)"), "{text}");
    let out = dir.path().join("out");
    for file in ["rules.json", "report.txt", "catalog.txt", "run.conf"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let rendered = stdout(&rectex(&[
        "render",
        out.join("rules.json").to_str().unwrap(),
    ]));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(rendered, report);
}

#[test]
fn written_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    stdout(&rectex(&["extract", "-c", &conf]));
    let out = dir.path().join("out");
    let again = dir.path().join("again");
    stdout(&rectex(&[
        "extract",
        "-c",
        out.join("run.conf").to_str().unwrap(),
        "-o",
        again.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(out.join("rules.json")).unwrap(),
        std::fs::read(again.join("rules.json")).unwrap()
    );
}

#[test]
fn dump_and_extract_from_contributions() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    let dump = dir.path().join("dump");
    let text = stdout(&rectex(&[
        "explain-dump",
        "-c",
        &conf,
        "-o",
        dump.to_str().unwrap(),
    ]));
    assert!(text.contains("2 contribution matrices"), "{text}");
    let direct = dir.path().join("direct");
    let staged = dir.path().join("staged");
    stdout(&rectex(&[
        "extract",
        "-c",
        &conf,
        "-o",
        direct.to_str().unwrap(),
    ]));
    stdout(&rectex(&[
        "extract",
        "-c",
        &conf,
        "-o",
        staged.to_str().unwrap(),
        "--contributions",
        dump.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(direct.join("rules.json")).unwrap(),
        std::fs::read(staged.join("rules.json")).unwrap()
    );
}

#[test]
fn ksweep_and_purity_tables() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    let sweep = stdout(&rectex(&["ksweep", "-c", &conf, "-k", "2,4"]));
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "k\tmacro_f1_train\tmacro_f1_test");
    assert_eq!(lines.len(), 3);
    let purity = stdout(&rectex(&["purity", "-c", &conf, "-r", "1,2,3"]));
    assert_eq!(purity.lines().count(), 4, "{purity}");
}

#[test]
fn rank_above_bound_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    let out = rectex(&["extract", "-c", &conf, "--set", "rank=500"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("rank k = 500 violates k <= min(2M, N)"),
        "{err}"
    );
}

#[test]
fn malformed_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    let out = rectex(&["extract", "-c", &conf, "--set", "rank"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("KEY=VALUE"));
    let out = rectex(&["extract", "-c", &conf, "--set", "colour=blue"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn saved_model_serves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let conf = setup(dir.path());
    let model = dir.path().join("model.json");
    let text = stdout(&rectex(&[
        "train-model",
        "-c",
        &conf,
        "--model-out",
        model.to_str().unwrap(),
    ]));
    assert!(text.contains("test accuracy"), "{text}");
    let oracle = dir.path().join("oracle.conf");
    std::fs::write(
        &oracle,
        format!(
            "version = 1\ndataset = planted.csv\nlabel = class\nmodel = oracle\n\
             oracle_command = {} serve-oracle --model {}\noracle_categories = 2\n\
             samples = 200\nkernel_width = 1\nridge = 0.1\nflip_probability = 0.2\nrank = 4\nr_max = 3\noutput = oracle\n",
            env!("CARGO_BIN_EXE_rectex"),
            model.display()
        ),
    )
    .unwrap();
    stdout(&rectex(&["extract", "-c", oracle.to_str().unwrap()]));
    stdout(&rectex(&["extract", "-c", &conf]));
    let rules = |d: &str| {
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(d).join("rules.json")).unwrap())
                .unwrap();
        v["categories"].clone()
    };
    assert_eq!(rules("oracle"), rules("out"));
}
