use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use srclpm::LabeledDictionary;

const SMALL: &[&str] = &[
    "--image-size",
    "64x64",
    "--block-shape",
    "16x8",
    "--num-train-images",
    "3",
    "--num-test-images",
    "2",
    "--blocks-per-train-image",
    "6",
    "--atoms-per-class",
    "5",
    "--test-blocks",
    "4",
    "--trials",
    "2",
    "--odl-epochs",
    "1",
];

fn srclpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srclpm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_small(args: &[&str]) -> Vec<String> {
    args.iter().chain(SMALL).map(|s| s.to_string()).collect()
}

fn run(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    srclpm(&refs)
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("srclpm-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for format in ["json", "csv"] {
        let a = run(&with_small(&["bench", "--format", format]));
        let b = run(&with_small(&["bench", "--format", format]));
        assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout);
    }
    let csv = run(&with_small(&["bench", "--format", "csv"]));
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("arm,scope,accuracy_mean,accuracy_std")
    );
    // Three scopes for each of the three default arms.
    assert_eq!(text.lines().count(), 1 + 9);
}

#[test]
fn out_flag_matches_stdout() {
    let dir = scratch_dir("out");
    let path = dir.join("report.json");
    let stdout = run(&with_small(&["bench"]));
    let mut args = with_small(&["bench", "--out"]);
    args.insert(2, path.to_str().unwrap().to_string());
    let written = run(&args);
    assert!(written.status.success());
    assert_eq!(fs::read(&path).unwrap(), stdout.stdout);
}

#[test]
fn noise_sweep_zero_density_equals_clean_run() {
    let clean = run(&with_small(&[
        "bench",
        "--format",
        "json",
        "--arms",
        "lpm_random",
    ]));
    let sweep = run(&with_small(&[
        "noise-sweep",
        "--format",
        "json",
        "--arms",
        "lpm_random",
        "--noise-densities",
        "0,0.3",
    ]));
    assert!(
        sweep.status.success(),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    let clean: serde_json::Value = serde_json::from_slice(&clean.stdout).unwrap();
    let sweep: serde_json::Value = serde_json::from_slice(&sweep.stdout).unwrap();
    assert_eq!(sweep[0]["density"], 0.0);
    assert_eq!(sweep[0]["metrics"], clean);
    assert_eq!(sweep.as_array().unwrap().len(), 2);
}

#[test]
fn generate_train_classify_round_trip() {
    let dir = scratch_dir("pipeline");
    let data = dir.join("data");
    let out = run(&with_small(&["gen-data", "--out", data.to_str().unwrap()]));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(data.join("test_manifest.json")).unwrap()).unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 4);
    let test_image = data.join(entries[0]["path"].as_str().unwrap());

    for arm in ["lpm_dl", "lpm_random", "global_src"] {
        let dict_path = dir.join(format!("{arm}.srcd"));
        let train = run(&with_small(&[
            "train",
            "--manifest",
            data.join("train_manifest.json").to_str().unwrap(),
            "--out",
            dict_path.to_str().unwrap(),
            "--arm",
            arm,
        ]));
        assert!(
            train.status.success(),
            "{}",
            String::from_utf8_lossy(&train.stderr)
        );

        let bytes = fs::read(&dict_path).unwrap();
        let dict = LabeledDictionary::from_bytes(&bytes).unwrap();
        assert_eq!(dict.to_bytes(), bytes);
        assert_eq!(dict.num_classes(), 2);

        let classify = run(&with_small(&[
            "classify",
            "--dictionary",
            dict_path.to_str().unwrap(),
            "--image",
            test_image.to_str().unwrap(),
        ]));
        assert!(
            classify.status.success(),
            "{}",
            String::from_utf8_lossy(&classify.stderr)
        );
        let decision: serde_json::Value = serde_json::from_slice(&classify.stdout).unwrap();
        assert!(decision["predicted"].as_u64().unwrap() < 2);
        if arm == "global_src" {
            assert_eq!(decision["scores"].as_array().unwrap().len(), 2);
        } else {
            assert_eq!(decision["blocks"].as_array().unwrap().len(), 4);
            assert_eq!(decision["fusion"], "ml");
        }
    }
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = scratch_dir("codes");
    // Parameter errors.
    assert_eq!(srclpm(&["bench", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(
        srclpm(&["bench", "--arms", "sift_svm"]).status.code(),
        Some(2)
    );
    assert_eq!(srclpm(&["bench", "--format", "xml"]).status.code(), Some(2));
    let missing = dir.join("missing.json");
    assert_eq!(
        srclpm(&["bench", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    // Input errors.
    let junk = dir.join("junk.srcd");
    fs::write(&junk, b"not a dictionary").unwrap();
    let image = dir.join("img.pgm");
    fs::write(&image, b"P2\n2 2\n255\n0 1 2 3\n").unwrap();
    let out = srclpm(&[
        "classify",
        "--dictionary",
        junk.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
    let out = srclpm(&[
        "classify",
        "--dictionary",
        dir.join("nope.srcd").to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
