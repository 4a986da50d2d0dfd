//! End-to-end tests of the `commscope` binary: exit codes, output
//! determinism, config-file handling, and the fixture matrix.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_commscope"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn commscope")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn model_path(name: &str) -> String {
    configs_dir().join("models").join(name).to_string_lossy().into_owned()
}

const TINY: &[&str] = &[
    "--layers", "1", "--hidden", "4", "--vocab", "8", "--seq", "2", "--mbs", "1",
];

#[test]
fn predict_tiny_zero3_totals() {
    let out = run(&[&["predict"], TINY, &["--devices", "4", "--zero", "3"]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("scheme: zero3"), "{text}");
    assert!(text.contains("total: 684 elems, 1368 bytes"), "{text}");
}

#[test]
fn validate_reports_exact_oracle_match() {
    let out = run(&[&["validate"], TINY, &["--devices", "4", "--zero", "3"]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("oracle match: exact"));
}

#[test]
fn schedule_parse_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("run.trace");
    let out = run(&[
        &["schedule"],
        TINY,
        &["--devices", "4", "--zero", "3", "--out", trace.to_str().unwrap()],
    ]
    .concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("#commscope-trace v1\n"));

    let out = run(&["parse", "--trace", trace.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let parsed = stdout(&out);
    assert!(parsed.contains("allgather"), "{parsed}");
    assert!(parsed.contains("reducescatter"), "{parsed}");
}

#[test]
fn compare_self_passes_and_cross_stage_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let z3 = dir.path().join("z3.trace");
    let z2 = dir.path().join("z2.trace");
    for (stage, path) in [("3", &z3), ("2", &z2)] {
        let out = run(&[
            &["schedule"],
            TINY,
            &["--devices", "4", "--zero", stage, "--out", path.to_str().unwrap()],
        ]
        .concat());
        assert!(out.status.success());
    }

    let out = run(&[
        &["compare"],
        TINY,
        &["--devices", "4", "--zero", "3", "--trace", z3.to_str().unwrap()],
    ]
    .concat());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("comparison: PASS"));

    let out = run(&[
        &["compare"],
        TINY,
        &["--devices", "4", "--zero", "3", "--trace", z2.to_str().unwrap()],
    ]
    .concat());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stdout(&out).contains("comparison: FAIL"));
}

#[test]
fn sweep_seq_doubles_p2p() {
    let out = run(&[
        "sweep", "--vocab", "100", "--hidden", "64", "--layers", "4", "--seq", "512",
        "--mbs", "1", "--devices", "2", "--pp", "2", "--var", "seq",
        "--values", "512,1024,2048", "--format", "csv",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let send_col = headers.iter().position(|h| h == "send_elems").unwrap();
    let sends: Vec<u64> = reader
        .records()
        .map(|r| r.unwrap()[send_col].parse().unwrap())
        .collect();
    assert_eq!(sends, vec![32768, 65536, 131072]);
}

#[test]
fn estimate_from_fabric_preset() {
    let fabric = configs_dir().join("fabrics").join("slingshot11-like.cfg");
    let out = run(&[
        &["estimate", "--fabric", fabric.to_str().unwrap()],
        TINY,
        &["--devices", "4", "--zero", "1", "--compute-us", "100"],
    ]
    .concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("fabric: slingshot11-like"));
    assert!(text.contains("communication fraction"));
    assert!(text.contains("placeholder"), "{text}");
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args: Vec<&str> = [&["predict"], TINY, &["--devices", "8", "--zero", "2", "--format", "json"]]
        .concat();
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn validation_errors_exit_one_and_name_the_field() {
    let out = run(&[&["predict"], TINY, &["--devices", "8", "--tp", "3"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("devices (8)"), "{}", stderr(&out));

    let out = run(&["predict", "--model", "/nonexistent/x.cfg", "--devices", "4"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&[&["predict"], TINY, &["--devices", "4", "--zero", "9"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--zero"));
}

#[test]
fn model_file_conflicts_with_inline_flags() {
    let out = run(&[
        "predict", "--model", &model_path("19m.cfg"), "--hidden", "4", "--devices", "4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("conflicts"));
}

#[test]
fn malformed_trace_lines_exit_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.trace");
    std::fs::write(&trace, "1|allreduce|64|4||\n2|fooreduce|64|4||\n").unwrap();
    let out = run(&["parse", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("line 2") && err.contains("fooreduce"), "{err}");
}

/// Every fixture model parses and predicts under every ZeRO mode and under
/// the TP/PP layouts its divisibility permits; the impossible combinations
/// fail as clean validation errors.
#[test]
fn fixture_matrix_predicts_or_rejects_cleanly() {
    let fixtures = [
        ("19m.cfg", 8u64, 6u64),
        ("125m.cfg", 12, 12),
        ("1.3b.cfg", 16, 24),
        ("13b.cfg", 40, 40),
    ];
    let zero_modes = ["none", "1", "2", "3"];
    let tp_pp = [(1u64, 1u64), (2, 1), (8, 1), (1, 2), (2, 2)];

    for (file, heads, layers) in fixtures {
        let path = model_path(file);
        for zero in zero_modes {
            for (tp, pp) in tp_pp {
                let devices = (tp * pp * 2).to_string();
                let args = [
                    "predict", "--model", &path, "--devices", &devices,
                    "--tp", &tp.to_string(), "--pp", &pp.to_string(), "--zero", zero,
                ];
                let out = run(&args);
                let divisible = heads % tp == 0 && layers % pp == 0;
                let zero3_pp = zero == "3" && pp > 1;
                if divisible && !zero3_pp {
                    assert_eq!(
                        out.status.code(),
                        Some(0),
                        "{file} zero={zero} tp={tp} pp={pp}: {}",
                        stderr(&out)
                    );
                } else {
                    // Clean validation error, never a crash.
                    assert_eq!(
                        out.status.code(),
                        Some(1),
                        "{file} zero={zero} tp={tp} pp={pp} should be rejected"
                    );
                    let err = stderr(&out);
                    assert!(err.starts_with("error: "), "{err}");
                }
            }
        }
    }
}

/// The published failure mode: a head count that does not divide by the
/// tensor degree is a validation error naming the fields.
#[test]
fn heads_indivisible_by_tensor_is_a_clean_error() {
    let out = run(&[
        "predict", "--model", &model_path("125m.cfg"), "--devices", "8", "--tp", "8",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("attn_heads (12)") && err.contains("tensor (8)"), "{err}");
}

#[test]
fn json_output_carries_schema_version() {
    let out = run(&[&["predict"], TINY, &["--devices", "4", "--format", "json"]].concat());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\"schema\": \"commscope.report.v1\""), "{text}");
}
