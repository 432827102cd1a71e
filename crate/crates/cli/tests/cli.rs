use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn golden(name: &str) -> String {
    fs::read_to_string(format!("{}/../core/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn coeffs_prints_fractions() {
    let o = msfuse(&["coeffs", "--family", "ab", "--steps", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "-9/24 37/24 -59/24 55/24\n");
    let o = msfuse(&["coeffs", "--family", "am", "--steps", "1"]);
    assert_eq!(stdout(&o), "1/2 1/2\n");
    let o = msfuse(&["coeffs", "--family", "AM", "--steps", "3"]);
    assert_eq!(stdout(&o), "1/24 -5/24 19/24 9/24\n");
}

#[test]
fn unsupported_schemes_are_usage_errors() {
    for args in [
        ["coeffs", "--family", "ab", "--steps", "9"],
        ["coeffs", "--family", "am", "--steps", "4"],
        ["coeffs", "--family", "bdf", "--steps", "2"],
    ] {
        let o = msfuse(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn unknown_command_and_flag_exit_two() {
    assert_eq!(msfuse(&["bogus"]).status.code(), Some(2));
    assert_eq!(msfuse(&["trace", "--L", "4", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(msfuse(&[]).status.code(), Some(2));
}

#[test]
fn trace_matches_schedule_goldens() {
    for levels in [2, 3, 4, 5, 6, 8] {
        let o = msfuse(&["trace", "--L", &levels.to_string()]);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(stdout(&o), golden(&format!("trace_L{levels}.txt")), "L={levels}");
    }
    assert_eq!(msfuse(&["trace", "--L", "1"]).status.code(), Some(2));
    assert_eq!(msfuse(&["trace", "--L", "5", "--max-order", "7"]).status.code(), Some(2));
}

#[test]
fn capped_trace_uses_low_order_schemes() {
    let o = msfuse(&["trace", "--L", "4", "--max-order", "1"]);
    let text = stdout(&o);
    assert!(text.lines().all(|l| l.contains("pred=AB1 ")), "{text}");
    assert!(text.lines().take(3).all(|l| l.contains("corr=AM1 ")));
}

#[test]
fn numerical_checks_exit_zero() {
    let o = msfuse(&["ode-check"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("# a=0.5 b=1 drive=1\nlevels,y_final,exact,error\n"));

    let o = msfuse(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().last().unwrap().starts_with("PASS"));
}

#[test]
fn order_study_writes_csv_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = msfuse(&["order-study", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let csv = fs::read_to_string(&a).unwrap();
    assert_eq!(csv, fs::read_to_string(&b).unwrap());
    assert_eq!(
        csv.lines().next(),
        Some("scheme,steps,nominal_order,delta,max_error,empirical_order")
    );
    assert!(csv.lines().any(|l| l.starts_with("AM3@decay,128,4,")));
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_missing_or_bad_config() {
    assert_eq!(msfuse(&["train", "--config", "missing.cfg"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "max_order = 9\n");
    assert_eq!(msfuse(&["train", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn synth_train_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = msfuse(&["synth", "--out", data.to_str().unwrap(), "--n", "3", "--size", "16", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("# seed=7\n"));
    let header = fs::read(data.join("img_0002.pgm")).unwrap();
    assert!(header.starts_with(b"P5\n# seed=7\n16 16\n255\n"));
    assert!(data.join("mask_0000.pgm").exists());

    let cfg = write_config(
        dir.path(),
        "# quick run\nlevels = 3\nheight = 16\nwidth = 16\nn_train = 4\nn_val = 2\nepochs = 3\n",
    );
    let metrics = dir.path().join("metrics.csv");
    let ckpt = dir.path().join("ckpt");
    let run = |m: &Path| {
        msfuse(&[
            "train",
            "--config",
            &cfg,
            "--seed",
            "11",
            "--metrics",
            m.to_str().unwrap(),
            "--ckpt",
            ckpt.to_str().unwrap(),
        ])
    };
    let o = run(&metrics);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("# seed=11\n"));
    let csv = fs::read_to_string(&metrics).unwrap();
    assert!(csv.starts_with("# seed=11\nepoch,train_loss,val_dice\n"));
    assert_eq!(csv.lines().count(), 2 + 3);

    let again = dir.path().join("metrics2.csv");
    run(&again);
    assert_eq!(csv, fs::read_to_string(&again).unwrap());

    let o = msfuse(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("samples=3 dice="));
}

#[test]
fn eval_missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let nowhere = dir.path().join("nope");
    let o = msfuse(&["eval", "--ckpt", nowhere.to_str().unwrap(), "--data", nowhere.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = msfuse(&["synth", "--out", dir.path().to_str().unwrap(), "--size", "8"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_config_is_the_default() {
    let path = format!("{}/../../configs/toy.conf", env!("CARGO_MANIFEST_DIR"));
    let cfg = msfuse::toyseg::TrainConfig::parse(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cfg, msfuse::toyseg::TrainConfig::default());
}
