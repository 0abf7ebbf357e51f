mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use selfedit_core::dataset::{build_dataset, Provenance, MAX_TARGETS};
use selfedit_core::generator::{CountingBackend, GeneratorConfig, RateLimiter};
use selfedit_core::jsonl::to_jsonl_bytes;
use selfedit_core::pipeline::{
    file_sha256, resume, resume_until, run_pipeline, run_until, stage_names, Manifest, RunStatus, MANIFEST_FILE,
};
use selfedit_core::sandbox::SandboxConfig;
use selfedit_core::store::Corpus;

use common::{data_dir, e2e_config};

/// Every file under `dir` except `meta/`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_file() {
            out.insert(name, fs::read(&path).unwrap());
        } else {
            assert_eq!(name, "meta", "unexpected directory {}", path.display());
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical_outside_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let a = e2e_config(&tmp.path().join("a"));
    let b = e2e_config(&tmp.path().join("b"));
    let ra = run_pipeline(&a).unwrap();
    let rb = run_pipeline(&b).unwrap();
    assert_eq!(ra, rb);
    let (sa, sb) = (snapshot(&a.output_dir), snapshot(&b.output_dir));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (name, bytes) in &sa {
        assert!(bytes == &sb[name], "{name} differs between runs");
    }
    assert!(a.output_dir.join("meta/timings.json").is_file());
}

#[test]
fn stopped_run_resumes_without_touching_finished_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let config = e2e_config(&tmp.path().join("run"));
    let dir = config.output_dir.clone();
    assert_eq!(
        run_until(&config, Some("comment-r1")).unwrap(),
        RunStatus::Stopped("comment-r1".into())
    );
    let manifest = Manifest::load(&dir).unwrap();
    let done: Vec<&str> = manifest.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(done, ["generate", "exec-example-r1", "comment-r1"]);
    assert!(!manifest.complete);
    let before: BTreeMap<String, String> = manifest
        .stages
        .iter()
        .flat_map(|s| s.outputs.keys())
        .map(|f| (f.clone(), file_sha256(&dir.join(f)).unwrap()))
        .collect();

    // starting over on the same directory is refused
    assert!(run_until(&config, None).is_err());

    let report = resume(&dir).unwrap();
    assert_eq!(report.overall.rows[0].pass_at_k, 50.0);
    assert_eq!(report.overall.rows[0].edit_pass_at_k, Some(100.0));
    // the generator was called once per sample, across both invocations
    assert_eq!(report.meta["generator_calls"], 20);
    for (file, sha) in &before {
        assert_eq!(
            &file_sha256(&dir.join(file)).unwrap(),
            sha,
            "{file} rewritten on resume"
        );
    }
    let manifest = Manifest::load(&dir).unwrap();
    assert!(manifest.complete);
    let all: Vec<String> = manifest.stages.iter().map(|s| s.name.clone()).collect();
    assert_eq!(all, stage_names(1));

    // resuming a finished run changes nothing
    let finished = snapshot(&dir);
    assert_eq!(resume(&dir).unwrap().overall, report.overall);
    assert_eq!(snapshot(&dir), finished);

    // same result as an uninterrupted run
    let fresh = e2e_config(&tmp.path().join("fresh"));
    let full = run_pipeline(&fresh).unwrap();
    assert_eq!(snapshot(&dir), snapshot(&fresh.output_dir));
    assert_eq!(full.overall, report.overall);
}

#[test]
fn resume_rejects_tampered_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = e2e_config(&tmp.path().join("run"));
    let dir = config.output_dir.clone();
    run_until(&config, Some("generate")).unwrap();
    let cands = dir.join("cands.jsonl");
    let mut text = fs::read_to_string(&cands).unwrap();
    text.push('\n');
    fs::write(&cands, text).unwrap();
    let err = resume_until(&dir, None).unwrap_err().to_string();
    assert!(err.contains("cands.jsonl") && err.contains("modified"), "{err}");

    fs::write(dir.join(MANIFEST_FILE), "not json").unwrap();
    let err = resume(&dir).unwrap_err().to_string();
    assert!(err.contains("corrupted"), "{err}");
    assert!(resume(&tmp.path().join("nothing-here")).is_err());
}

#[test]
fn resume_rejects_a_changed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = e2e_config(&tmp.path().join("run"));
    let dir = config.output_dir.clone();
    run_until(&config, Some("generate")).unwrap();
    let path = dir.join("config.json");
    let text = fs::read_to_string(&path).unwrap().replace("\"seed\": 7", "\"seed\": 8");
    fs::write(&path, text).unwrap();
    assert!(resume(&dir).is_err());
}

#[test]
fn unknown_stop_stage_leaves_no_run_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let config = e2e_config(&tmp.path().join("run"));
    assert!(run_until(&config, Some("exec-example-r2")).is_err());
    assert!(!config.output_dir.exists());
    run_until(&config, Some("generate")).unwrap();
}

#[test]
fn editor_dataset_build_is_deterministic() {
    let corpus = Corpus::load(&data_dir().join("e2e/corpus.jsonl")).unwrap();
    let config = GeneratorConfig::mock(data_dir().join("e2e/fixtures"), 2);
    let sandbox = SandboxConfig {
        time_limit_ms: 1000,
        ..SandboxConfig::default()
    };
    let build = |jobs| {
        let backend = CountingBackend::new(config.build_backend(RateLimiter::unlimited().into()).unwrap());
        let build = build_dataset(corpus.problems(), &config, &backend, &sandbox, jobs).unwrap();
        (build, backend.calls())
    };
    let (one, calls) = build(1);
    let (four, _) = build(4);
    assert_eq!(calls, 20);
    assert_eq!(to_jsonl_bytes(&one.examples), to_jsonl_bytes(&four.examples));
    assert_eq!(one.summary, four.summary);

    // every sample becomes an example, the passing one with the pass comment
    assert_eq!(one.examples.len(), 20);
    assert_eq!(one.summary.comment_distribution[0].class, "pass");
    assert_eq!(one.summary.comment_distribution[0].count, 10);
    for ex in &one.examples {
        assert!(!ex.targets.is_empty() && ex.targets.len() <= MAX_TARGETS);
        assert_eq!(ex.targets[0].provenance, Provenance::GeneratedPassing);
        let gt = &corpus.get(&ex.problem_id).unwrap().ground_truths[0];
        // the passing sample equals the reference solution, so it is listed once
        assert_eq!(ex.targets.len(), 1, "{}", ex.problem_id);
        assert_eq!(&ex.targets[0].program, gt);
    }
}
