use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use shmx_core::config::CANONICAL_CONFIG;
use shmx_core::detect::DamageReport;
use shmx_core::granger::GcReport;
use shmx_core::varx::VarxModel;

fn shmx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shmx")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = shmx(args);
    assert!(
        out.status.success(),
        "shmx {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn standalone_stages_reproduce_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CANONICAL_CONFIG);
    let run = dir.path().join("run");
    ok(&["pipeline", "--config", &cfg, "--out", s(&run), "--master-seed", "3"]);

    // simulate
    let healthy = dir.path().join("healthy.csv");
    ok(&["simulate", "--config", &cfg, "--scenario", "healthy", "--out", s(&healthy), "--master-seed", "3"]);
    assert_eq!(fs::read(&healthy).unwrap(), fs::read(run.join("data/healthy.csv")).unwrap());

    // identify
    let model = dir.path().join("model.json");
    ok(&[
        "identify", "--data", s(&healthy), "--endog", "z6x,z6y,z7x,z7y,z8x,z8y", "--exog", "z4x,z4y,z5x,z5y",
        "--p", "2", "--q", "1", "--out", s(&model),
    ]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(run.join("model.json")).unwrap());
    let m = VarxModel::from_json(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m.a().len(), 2);
    assert_eq!(m.a()[0].shape(), (6, 6));
    assert_eq!(m.b()[0].shape(), (6, 4));

    // gc
    let gc = dir.path().join("gc.json");
    ok(&[
        "gc", "--data", s(&healthy), "--groups", "6:z6x,z6y;7:z7x,z7y;8:z8x,z8y", "--order-policy", "aic:20",
        "--select", "2", "--out", s(&gc),
    ]);
    assert_eq!(fs::read(&gc).unwrap(), fs::read(run.join("gc_report.json")).unwrap());
    let report = GcReport::from_json(&fs::read_to_string(&gc).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.summary.len(), 3);

    // detect, with the pipeline's baseline
    let reports = dir.path().join("reports");
    for scenario in ["healthy", "k13", "k67", "k78"] {
        let data = run.join(format!("data/{scenario}.csv"));
        for set in ["7", "8", "7+8"] {
            let out = reports.join(format!("{scenario}__{set}.json"));
            ok(&[
                "detect", "--model", s(&model), "--data", s(&data), "--suppress", &set.replace('+', ","),
                "--baseline", s(&run.join(format!("baseline/{set}.json"))), "--out", s(&out),
            ]);
            let standalone = DamageReport::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
            let piped =
                DamageReport::from_json(&fs::read_to_string(run.join(format!("reports/{scenario}__{set}.json"))).unwrap())
                    .unwrap();
            assert_eq!(
                DamageReport {
                    scenario_index: piped.scenario_index,
                    suppression_index: piped.suppression_index,
                    ..standalone
                },
                piped
            );
        }
    }

    // plot-data over the pipeline's own reports reproduces its CSV
    let plot = dir.path().join("plot.csv");
    ok(&["plot-data", "--reports", s(&run.join("reports")), "--out", s(&plot)]);
    assert_eq!(fs::read(&plot).unwrap(), fs::read(run.join("di_plot.csv")).unwrap());
}

#[test]
fn detect_reports_suppressed_channels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CANONICAL_CONFIG);
    let run = dir.path().join("run");
    ok(&["pipeline", "--config", &cfg, "--out", s(&run)]);
    let out = dir.path().join("r.json");
    let stdout = ok(&[
        "detect", "--model", s(&run.join("model.json")), "--data", s(&run.join("data/k67.csv")), "--suppress", "7,8",
        "--out", s(&out),
    ]);
    assert!(stdout.contains("unclassified"), "{stdout}");
    let r = DamageReport::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.scenario, "k67");
    let suppressed: Vec<String> = r.suppressed.iter().map(ToString::to_string).collect();
    assert_eq!(suppressed, ["z7x", "z7y", "z8x", "z8y"]);
    assert_eq!(r.m, 2);
    assert!(r.damaged.is_none());
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let code = |args: &[&str]| shmx(args).status.code().unwrap();

    assert_eq!(code(&["pipeline", "--config", s(&missing), "--out", s(dir.path())]), 3);

    let bad = write_config(dir.path(), &CANONICAL_CONFIG.replace("loss = 0.2", "loss = 1.5"));
    let out = shmx(&["pipeline", "--config", &bad, "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("damage[0].loss"));

    let huge = write_config(dir.path(), &CANONICAL_CONFIG.replace("p = 2", "p = 900"));
    assert_eq!(code(&["pipeline", "--config", &huge, "--out", s(&dir.path().join("y"))]), 2);

    assert_eq!(code(&["identify", "--data", s(&missing)]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);

    let garbled = dir.path().join("garbled.csv");
    fs::write(&garbled, "t,z6x\n0.0,1.0\n0.001,abc\n").unwrap();
    let out = shmx(&["gc", "--data", s(&garbled), "--groups", "6:z6x", "--out", s(&dir.path().join("g"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}
