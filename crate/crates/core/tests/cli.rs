use std::process::Command;

fn corefkit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_corefkit"))
        .args(args)
        .env_remove("COREFKIT_SEED")
        .output()
        .unwrap()
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere/manifest.txt");
    let vocab = dir.path().join("vocab.txt");
    std::fs::write(&vocab, "").unwrap();
    let out = corefkit(&[
        "train",
        "--out",
        dir.path().to_str().unwrap(),
        "--manifest",
        missing.to_str().unwrap(),
        "--vocab",
        vocab.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let out = corefkit(&["stats", "--set", "sed=1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sed") && err.contains("seed"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "steps = 5\nbogus = 1\n").unwrap();
    assert_eq!(
        corefkit(&["stats", "--config", conf.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(corefkit(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = concat!(env!("CARGO_MANIFEST_DIR"), "/data/stories.txt");
    let d = dir.path();
    let path = |p: &str| d.join(p).to_str().unwrap().to_string();
    let run = |args: &[&str]| {
        let out = corefkit(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };
    let common = ["--set", "tagger=pretagged", "--seed", "3"];
    run(&[
        &["build-vocab", "--corpus", corpus, "--out", &path("v")],
        &common[..],
    ]
    .concat());
    run(&[
        &[
            "preprocess",
            "--corpus",
            corpus,
            "--vocab",
            &path("v/vocab.txt"),
            "--out",
            &path("s"),
        ],
        &common[..],
    ]
    .concat());
    let stats = run(&["stats", "--manifest", &path("s/manifest.txt")]);
    assert!(stats.contains("masked_token_fraction=0.1"), "{stats}");
    let shown = run(&[
        "inspect",
        &path("s"),
        "--vocab",
        &path("v/vocab.txt"),
        "--limit",
        "1",
    ]);
    assert!(
        shown.contains("[CLS]") && shown.contains("[MASK]"),
        "{shown}"
    );
    let trained = run(&[
        &[
            "train",
            "--manifest",
            &path("s/manifest.txt"),
            "--vocab",
            &path("v/vocab.txt"),
            "--out",
            &path("t"),
        ],
        &[
            "--set",
            "steps=5",
            "--set",
            "batch_size=2",
            "--set",
            "hidden=8",
            "--set",
            "ffn=8",
        ][..],
    ]
    .concat());
    assert!(trained.contains("model.cpkm"));
    let metrics = std::fs::read_to_string(d.join("t/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 6);
    assert!(metrics.starts_with("step,lr,L,L_MRP,L_MLM\n"));
}
