//! The `ssws` binary: exit codes, determinism, file formats.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use ssws::codec::{write_wav, AudioBuffer, MuLaw};
use ssws::mushra::{reference_plan, write_flags, Assignment, ErrorCategory, ErrorFlag, Severity};
use ssws::service::EvalStore;

fn ssws(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssws"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ssws(&[], dir.path()).status.code(), Some(2));
    assert_eq!(ssws(&["design"], dir.path()).status.code(), Some(2));
    assert_eq!(
        ssws(
            &["analyze", "--ratings", "r.csv", "--alpha", "x"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
    let missing = ssws(&["design", "--plan", "nope.tsv"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.tsv"));
    assert!(ssws(&["--help"], dir.path()).status.success());
}

#[test]
fn design_is_deterministic_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plan.tsv"), reference_plan(0).to_text()).unwrap();
    ok(&ssws(
        &[
            "design", "--plan", "plan.tsv", "--seed", "9", "--output", "a.json",
        ],
        dir.path(),
    ));
    ok(&ssws(
        &[
            "design", "--plan", "plan.tsv", "--seed", "9", "--output", "b.json",
        ],
        dir.path(),
    ));
    ok(&ssws(
        &[
            "design", "--plan", "plan.tsv", "--seed", "10", "--output", "c.json",
        ],
        dir.path(),
    ));
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_ne!(read("a.json"), read("c.json"));
    let a = Assignment::load(&dir.path().join("a.json")).unwrap();
    assert_eq!(a.seed, 9);
    assert_eq!(a.listeners.len(), 50);
    ok(&ssws(
        &["validate", "--plan", "plan.tsv", "--assignment", "a.json"],
        dir.path(),
    ));

    // Tamper: swap one screen's utterance for another domain's.
    let mut bad = a.clone();
    bad.listeners[0].screens[0].utterance_id = bad.listeners[1].screens[5].utterance_id.clone();
    std::fs::write(dir.path().join("bad.json"), bad.to_json()).unwrap();
    let out = ssws(
        &["validate", "--plan", "plan.tsv", "--assignment", "bad.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_and_errors_report_write_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let plan = reference_plan(2);
    let asg = ssws::mushra::build_assignment(&plan).unwrap();
    std::fs::write(dir.path().join("assignment.json"), asg.to_json()).unwrap();
    let mut store = EvalStore::new(asg.clone(), dir.path(), "s");
    common::rate_everything(&mut store, &asg).unwrap();
    std::fs::write(
        dir.path().join("ratings.csv"),
        store.export_ratings().unwrap(),
    )
    .unwrap();

    let out = ssws(
        &[
            "analyze",
            "--ratings",
            "ratings.csv",
            "--systems",
            "recordings,SSWS,hybrid,SPSS",
            "--output-dir",
            "stats",
        ],
        dir.path(),
    );
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("SSWS"));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("stats/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["alpha"], 0.01);
    assert_eq!(
        json["systems"],
        serde_json::json!(["recordings", "SSWS", "hybrid", "SPSS"])
    );
    assert_eq!(json["overall"]["pairs"].as_array().unwrap().len(), 6);
    assert_eq!(json["domains"].as_array().unwrap().len(), 9);
    let header = |f: &str| {
        let text = std::fs::read_to_string(dir.path().join("stats").join(f)).unwrap();
        text.lines().next().unwrap().to_string()
    };
    assert_eq!(
        header("summary.csv"),
        "family,system,n_screens,mean_score,median_score,mean_rank,median_rank"
    );
    assert!(header("pairwise.csv")
        .starts_with("family,system_a,system_b,n_screens,mean_difference,t,p_t,p_t_adjusted"));
    assert_eq!(
        header("plot_data.csv"),
        "listener_id,utterance_id,domain,system,score,rank"
    );
    let plot_rows = std::fs::read_to_string(dir.path().join("stats/plot_data.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(plot_rows, 1 + 2000 * 4);

    let utt = &asg.utterances[0];
    let flags = vec![
        ErrorFlag {
            annotator_id: "A1".into(),
            utterance_id: utt.id.clone(),
            system: "SSWS".into(),
            category: ErrorCategory::AudioGlitch,
            severity: Severity::Minor,
            note: String::new(),
        };
        3
    ];
    write_flags(
        std::fs::File::create(dir.path().join("flags.csv")).unwrap(),
        &flags,
    )
    .unwrap();
    let out = ssws(
        &[
            "errors-report",
            "--flags",
            "flags.csv",
            "--assignment",
            "assignment.json",
        ],
        dir.path(),
    );
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("Audio glitch") && text.contains(&utt.domain),
        "{text}"
    );
    let out = ssws(
        &[
            "errors-report",
            "--flags",
            "flags.csv",
            "--assignment",
            "assignment.json",
            "--category",
            "bogus",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn codec_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<f32> = (0..400).map(|i| ((i as f32) * 0.05).sin() * 0.8).collect();
    write_wav(
        &dir.path().join("in.wav"),
        &AudioBuffer::new(16_000, samples.clone()).unwrap(),
    )
    .unwrap();
    ok(&ssws(
        &[
            "codec", "encode", "--input", "in.wav", "--output", "bins.txt", "--bins", "256",
        ],
        dir.path(),
    ));
    let bins: Vec<usize> = std::fs::read_to_string(dir.path().join("bins.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    let codec = MuLaw::new(256).unwrap();
    let wav = ssws::codec::read_wav(&dir.path().join("in.wav")).unwrap();
    assert_eq!(bins, codec.encode_all(wav.samples()).unwrap());
    ok(&ssws(
        &[
            "codec",
            "decode",
            "--input",
            "bins.txt",
            "--output",
            "out.wav",
            "--bins",
            "256",
            "--sample-rate",
            "16000",
        ],
        dir.path(),
    ));
    let out = ssws::codec::read_wav(&dir.path().join("out.wav")).unwrap();
    assert_eq!(out.sample_rate(), 16_000);
    assert_eq!(out.len(), 400);
}
