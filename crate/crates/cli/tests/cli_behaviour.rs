//! End-to-end behaviour of the `coarse-rays` binary: exit codes, JSON
//! document shapes against the bundled schemas, window grammar variants,
//! deterministic reruns, and file round trips through `--out`.
//!
//! Every command runs from the repository root so the bundled `models/`,
//! `inputs/`, and `schemas/` directories resolve.

use jsonschema::JSONSchema;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .expect("workspace root")
        .to_path_buf()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coarse-rays"))
        .args(args)
        .current_dir(repo_root())
        .output()
        .expect("binary runs")
}

fn run_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coarse-rays"))
        .args(args)
        .env(key, value)
        .current_dir(repo_root())
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| {
        panic!(
            "stderr is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

/// Validate an instance against one of the bundled schemas, panicking with
/// the full error list on mismatch.
fn assert_schema(schema_file: &str, instance: &Value) {
    let path = repo_root().join("schemas").join(schema_file);
    let text = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    let schema: Value = serde_json::from_str(&text).expect("schema is JSON");
    let compiled = JSONSchema::compile(&schema)
        .unwrap_or_else(|e| panic!("{schema_file} compiles: {e}"));
    let msgs: Vec<String> = match compiled.validate(instance) {
        Ok(()) => return,
        Err(errors) => errors
            .map(|e| format!("  {} (at instance path `{}`)", e, e.instance_path))
            .collect(),
    };
    panic!("instance violates {schema_file}:\n{}", msgs.join("\n"));
}

#[test]
fn exit_codes_follow_the_result_convention() {
    // Definite positive.
    assert_eq!(code(&run(&["analyze", "--model", "models/lattice2d.json", "--alpha-max", "2"])), 0);
    // Definite negative.
    assert_eq!(code(&run(&["analyze", "--model", "models/cluster_geometric.json", "--alpha-max", "8"])), 2);
    // Budget too small for the positive certificate.
    assert_eq!(code(&run(&["analyze", "--model", "models/lattice2d.json", "--alpha-max", "1/2"])), 3);
    // Input errors.
    assert_eq!(code(&run(&["analyze", "--model", "models/no_such_model.json", "--alpha-max", "2"])), 1);
    // Usage errors from argument parsing.
    assert_eq!(code(&run(&["analyze", "--alpha-max", "2"])), 1);
    // Help is not an error.
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn error_documents_follow_the_error_schema() {
    let cases: Vec<(&[&str], &str)> = vec![
        (
            &["analyze", "--model", "models/no_such_model.json", "--alpha-max", "2"],
            "model_file",
        ),
        (
            &["analyze", "--model", "models/lattice2d.json", "--alpha-max", "2", "--window", "disc:0:1"],
            "invalid_region",
        ),
        (
            // Separation must exceed twice the pitch.
            &["net", "--domain", "inputs/domain_square.json", "--pitch", "1/2", "--separation", "1"],
            "invalid_input",
        ),
        (
            // The declared floor sits above the actual minimal eigenvalue.
            &["wannier", "--spec", "inputs/wannier_bumps.json", "--frame", "--tol", "0.99"],
            "operator_input",
        ),
    ];
    for (args, kind) in cases {
        let out = run(args);
        assert_eq!(code(&out), 1, "args {args:?}");
        assert!(out.stdout.is_empty(), "errors print nothing to stdout");
        let doc = stderr_json(&out);
        assert_schema("error.schema.json", &doc);
        assert_eq!(doc["error"]["kind"], *kind, "args {args:?}: {doc}");
    }
}

#[test]
fn refusal_documents_follow_the_refused_schema() {
    // No ray structure exists when finite components persist.
    let out = run(&["rays", "--model", "models/cluster_geometric.json", "--alpha", "2"]);
    assert_eq!(code(&out), 2);
    let doc = stdout_json(&out);
    assert_schema("refused.schema.json", &doc);

    // A unit lattice component is never isolated far enough to transfer.
    let out = run(&[
        "transfer",
        "--model", "models/lattice1d.json",
        "--target", "models/lattice1d_shifted.json",
        "--labels", "0",
        "--alpha", "1",
        "--constant", "3/10",
    ]);
    assert_eq!(code(&out), 2);
    let doc = stdout_json(&out);
    assert_schema("refused.schema.json", &doc);
    assert!(
        doc["refused"].as_str().unwrap().contains("not isolated"),
        "{doc}"
    );
}

#[test]
fn reports_follow_their_schemas() {
    let cases: Vec<(&[&str], &str, i32)> = vec![
        (&["analyze", "--model", "models/lattice2d.json", "--alpha-max", "2"], "analyze.schema.json", 0),
        (&["analyze", "--model", "models/cluster_geometric.json", "--alpha-max", "8"], "analyze.schema.json", 2),
        (&["analyze", "--model", "models/lattice2d.json", "--alpha-max", "1/2"], "analyze.schema.json", 3),
        (&["analyze", "--model", "models/wedge3.json", "--alpha-max", "2"], "analyze.schema.json", 0),
        (&["analyze", "--model", "models/lattice2d_defects.json", "--alpha-max", "2"], "analyze.schema.json", 0),
        (&["bm", "--model", "models/lattice1d.json", "--alpha-max", "2"], "bm.schema.json", 0),
        (&["bm", "--model", "models/cluster_geometric.json", "--alpha-max", "6"], "bm.schema.json", 2),
        (&["rays", "--model", "models/lattice2d.json", "--alpha", "1"], "rays.schema.json", 0),
        (&["rays", "--model", "models/wedge2.json", "--alpha", "1"], "rays.schema.json", 0),
        (
            &["net", "--domain", "inputs/domain_square.json", "--pitch", "1/4", "--separation", "1", "--declared-connected"],
            "net.schema.json",
            0,
        ),
        (
            &["net", "--domain", "inputs/domain_two_boxes.json", "--pitch", "1/4", "--separation", "1", "--declared-connected"],
            "net.schema.json",
            2,
        ),
        (
            &[
                "transfer",
                "--model", "models/cluster_geometric.json",
                "--target", "models/cluster_geometric_shifted.json",
                "--labels", "c2.0;c2.1",
                "--alpha", "8/5",
                "--constant", "3/10",
            ],
            "transfer.schema.json",
            0,
        ),
        (&["mvn", "--ranks", "1,0,2,1"], "mvn.schema.json", 0),
        (&["mvn", "--sites", "6", "--seed", "3", "--dump-matrices"], "mvn.schema.json", 0),
        (&["wannier", "--spec", "inputs/wannier_blocks.json"], "wannier.schema.json", 0),
        (&["wannier", "--spec", "inputs/wannier_bumps.json", "--frame", "--dump-matrices"], "wannier.schema.json", 0),
    ];
    for (args, schema, expected) in cases {
        let out = run(args);
        assert_eq!(code(&out), expected, "args {args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert_schema(schema, &stdout_json(&out));
    }
}

#[test]
fn bundled_files_follow_the_input_schemas() {
    let root = repo_root();
    let mut model_count = 0;
    for entry in fs::read_dir(root.join("models")).expect("models dir") {
        let path = entry.expect("entry").path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let doc: Value =
            serde_json::from_str(&fs::read_to_string(&path).expect("read model")).expect("json");
        assert_schema("model.schema.json", &doc);
        model_count += 1;
    }
    assert!(model_count >= 10, "bundle holds {model_count} models");

    for name in ["domain_square.json", "domain_two_boxes.json"] {
        let doc: Value = serde_json::from_str(
            &fs::read_to_string(root.join("inputs").join(name)).expect("read domain"),
        )
        .expect("json");
        assert_schema("domain.schema.json", &doc);
    }
    for name in ["wannier_blocks.json", "wannier_bumps.json"] {
        let doc: Value = serde_json::from_str(
            &fs::read_to_string(root.join("inputs").join(name)).expect("read spec"),
        )
        .expect("json");
        assert_schema("wannier_input.schema.json", &doc);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = run(&["analyze", "--model", "models/lattice2d_defects.json", "--alpha-max", "2"]);
    let b = run(&["analyze", "--model", "models/lattice2d_defects.json", "--alpha-max", "2"]);
    assert_eq!(a.stdout, b.stdout);

    // The threaded scan merges into the same document as the sequential one.
    let c = run(&[
        "analyze", "--model", "models/lattice2d_defects.json", "--alpha-max", "2", "--threads", "4",
    ]);
    assert_eq!(a.stdout, c.stdout);

    // Randomized commands are reproducible through the seed.
    let d = run(&["mvn", "--sites", "8", "--seed", "5"]);
    let e = run(&["mvn", "--sites", "8", "--seed", "5"]);
    assert_eq!(d.stdout, e.stdout);
    let f = run(&["mvn", "--sites", "8", "--seed", "6"]);
    assert_ne!(d.stdout, f.stdout, "the seed selects the sequence");
}

#[test]
fn window_grammar_selects_the_right_points() {
    // Box windows list rational corners.
    let out = run(&["analyze", "--model", "models/lattice1d.json", "--alpha-max", "2", "--window", "box:0:3"]);
    assert_eq!(code(&out), 0);
    let doc = stdout_json(&out);
    assert_eq!(doc["window"]["kind"], "box");
    assert_eq!(doc["window"]["min"][0], "0");
    assert_eq!(doc["window"]["max"][0], "3");

    // Ball windows name a center point; wedge labels themselves contain a
    // colon, so the radius is the part after the last one.
    let out = run(&["analyze", "--model", "models/wedge3.json", "--alpha-max", "2", "--window", "ball:r1:2:3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["window"]["kind"], "ball");
    assert_eq!(doc["window"]["center"], "r1:2");
    assert_eq!(doc["window"]["radius"], "3");

    // Explicit windows enumerate labels.
    let out = run(&[
        "analyze", "--model", "models/finite_cloud_line.json", "--alpha-max", "2",
        "--window", "explicit:p0;p1;p4",
    ]);
    assert_eq!(code(&out), 2, "finite models fail the criterion");
    let doc = stdout_json(&out);
    assert_eq!(doc["window"]["kind"], "explicit");
    assert_eq!(doc["window"]["labels"].as_array().unwrap().len(), 3);

    // A region file supplies the same structure.
    let dir = tempfile::tempdir().expect("tempdir");
    let region_path = dir.path().join("region.json");
    fs::write(&region_path, r#"{"kind":"box","min":["0"],"max":["3"]}"#).expect("write region");
    let spec = format!("@{}", region_path.display());
    let out = run(&["analyze", "--model", "models/lattice1d.json", "--alpha-max", "2", "--window", &spec]);
    assert_eq!(code(&out), 0);
    let doc = stdout_json(&out);
    assert_eq!(doc["window"]["kind"], "box");
    assert_eq!(doc["window"]["max"][0], "3");
}

#[test]
fn ray_structures_round_trip_through_files() {
    let dir = tempfile::tempdir().expect("tempdir");
    let rays_path = dir.path().join("rays.json");
    let out = run(&[
        "rays", "--model", "models/lattice2d.json", "--alpha", "1",
        "--out", rays_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty(), "--out suppresses stdout");

    let doc: Value =
        serde_json::from_str(&fs::read_to_string(&rays_path).expect("read rays")).expect("json");
    assert_schema("rays.schema.json", &doc);
    assert_eq!(doc["validation"]["ok"], true);

    // The embedded structure is itself a witness document.
    let structure = doc["structure"].clone();
    assert_schema("witness.schema.json", &structure);
    let witness_path = dir.path().join("witness.json");
    fs::write(&witness_path, serde_json::to_string_pretty(&structure).unwrap()).expect("write");

    let out = run(&[
        "verify", "--model", "models/lattice2d.json",
        "--witness", witness_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let doc = stdout_json(&out);
    assert_schema("verify.schema.json", &doc);
    assert_eq!(doc["validation"]["ok"], true);

    // Tampering with the claimed step bound must be caught.
    let mut bad = structure.clone();
    bad["lipschitz_c"] = serde_json::json!({"approx": 0.0, "exact": "0"});
    let bad_path = dir.path().join("tampered.json");
    fs::write(&bad_path, serde_json::to_string_pretty(&bad).unwrap()).expect("write");
    let out = run(&[
        "verify", "--model", "models/lattice2d.json",
        "--witness", bad_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "tampered witness is rejected");
    let doc = stdout_json(&out);
    assert_schema("verify.schema.json", &doc);
    assert_eq!(doc["validation"]["ok"], false);
    assert!(!doc["validation"]["failures"].as_array().unwrap().is_empty());
}

#[test]
fn net_models_round_trip_through_files() {
    let dir = tempfile::tempdir().expect("tempdir");
    let model_path = dir.path().join("net_model.json");
    let out = run(&[
        "net", "--domain", "inputs/domain_square.json", "--pitch", "1/4", "--separation", "1",
        "--declared-connected",
        "--out-model", model_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let doc = stdout_json(&out);
    assert_eq!(doc["model_written"], model_path.display().to_string());

    // The written net is a loadable model file.
    let model_doc: Value =
        serde_json::from_str(&fs::read_to_string(&model_path).expect("read model")).expect("json");
    assert_schema("model.schema.json", &model_doc);
    let out = run(&[
        "analyze", "--model", model_path.to_str().unwrap(), "--alpha-max", "2",
    ]);
    // A finite cloud always keeps a finite component.
    assert_eq!(code(&out), 2);
    let analyzed = stdout_json(&out);
    assert_eq!(
        analyzed["criterion"]["verdict"]["verdict"],
        "fails_persistently"
    );
}

#[test]
fn tolerance_env_var_sets_the_frame_floor() {
    // The environment floor only applies when the family file declares
    // none, so start from the bundled file with its `lambda_min` removed.
    let dir = tempfile::tempdir().expect("tempdir");
    let mut spec: Value = serde_json::from_str(
        &fs::read_to_string(repo_root().join("inputs/wannier_bumps.json")).expect("read spec"),
    )
    .expect("json");
    spec.as_object_mut().unwrap().remove("lambda_min");
    let spec_path = dir.path().join("bumps_no_floor.json");
    fs::write(&spec_path, serde_json::to_string_pretty(&spec).unwrap()).expect("write");
    let spec_arg = spec_path.to_str().unwrap();

    // Without a floor anywhere the build succeeds against the default.
    let out = run(&["wannier", "--spec", spec_arg, "--frame"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // A floor above the actual minimal eigenvalue makes the build refuse.
    let out = run_with_env(&["wannier", "--spec", spec_arg, "--frame"], "COARSE_RAYS_TOL", "0.99");
    assert_eq!(code(&out), 1);
    let doc = stderr_json(&out);
    assert_eq!(doc["error"]["kind"], "operator_input");

    // An explicit --tol takes precedence over the environment.
    let out = run_with_env(
        &["wannier", "--spec", spec_arg, "--frame", "--tol", "0.5"],
        "COARSE_RAYS_TOL",
        "0.99",
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // A spec-declared floor outranks the environment: the bundled spec
    // declares 0.5, which the actual spectrum clears.
    let out = run_with_env(
        &["wannier", "--spec", "inputs/wannier_bumps.json", "--frame"],
        "COARSE_RAYS_TOL",
        "0.99",
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
