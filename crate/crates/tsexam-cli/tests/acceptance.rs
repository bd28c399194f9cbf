//! Acceptance criterion 11: end-to-end reproducibility. `gen`, `refine`,
//! and `agent` runs with the mock provider produce byte-identical artifact
//! trees across two invocations with the same config and seed. Criteria
//! 1-10 live in the library crate's acceptance target.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const DEMO_TEMPLATE: &str = r#"
name = "demo_trend_probe"
domain = "demo"
category = "pattern_recognition"
subcategory = "trend"
question = "This series is labeled {label}. Does the data confirm a clear upward drift?"

[selection]
metadata = ["label"]
filter = "meta.label == 'uptrend'"
min_window = 24
max_window = 64

[hyperparameters]
slope_cut = 0.2

[features]
slope = "ols_slope(window)"

[[options]]
text = "Yes, the fitted slope is clearly positive"
[[options]]
text = "No, the series drifts down or sideways"

[[rules]]
when = "slope > slope_cut"
choose = 0
[[rules]]
default = true
choose = 1
"#;

fn write_config(dir: &Path, out_dir: &Path) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("demo_template.toml"), DEMO_TEMPLATE).unwrap();
    let config = format!(
        r#"
seed = 7
out_dir = "{out}"

[dataset]
kind = "synthetic_demo"

[pipeline]
task_description = "Build a short demo exam testing trend recognition."
domain = "demo"
num_templates = 2

[refine]
candidates = ["candidate", "strong", "weak"]
rounds = 2
epochs = 200

[administer]
modality = "text"

[models.generator]
provider = "mock"
model_id = "generator"

[models.verifier]
provider = "mock"
model_id = "verifier"

[models.strong]
provider = "mock"
model_id = "strong"

[models.weak]
provider = "mock"
model_id = "weak"

[models.candidate]
provider = "mock"
model_id = "candidate"

[[mock.rules]]
model = "generator"
pattern = "distinct demo concepts"
replies = ["trend direction\nnoise level"]

[[mock.rules]]
model = "generator"
reply_files = ["demo_template.toml"]

[[mock.rules]]
model = "verifier"
replies = ["1"]

[[mock.rules]]
model = "strong"
replies = ["[A]"]

[[mock.rules]]
model = "weak"
replies = ["[B]"]

[[mock.rules]]
model = "candidate"
replies = ["I will go with [A]"]
"#,
        out = out_dir.display()
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

/// Every file under `dir`, keyed by relative path, as raw bytes.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let relative = path.strip_prefix(dir).unwrap().display().to_string();
                files.insert(relative, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn run(config: &Path, args: &[&str]) {
    let mut full = vec!["tsexam", "--config", config.to_str().unwrap()];
    full.extend_from_slice(args);
    tsexam_cli::run(full).unwrap();
}

#[test]
fn criterion_11_end_to_end_reproducibility() {
    let result = std::panic::catch_unwind(|| {
        let base = std::env::temp_dir().join("tsexam-acceptance-11");
        let _ = std::fs::remove_dir_all(&base);

        // Two invocations of the same config and seed must leave the same
        // bytes behind.
        for (label, command) in [
            ("gen", vec!["gen", "--count", "pattern_recognition=8", "--count", "noise_understanding=4"]),
            ("agent", vec!["agent"]),
        ] {
            let dir = base.join(label);
            let out = dir.join("out");
            let config = write_config(&dir, &out);
            let mut snapshots = Vec::new();
            for _ in 0..2 {
                run(&config, &command.iter().map(|s| &**s).collect::<Vec<_>>());
                snapshots.push(snapshot(&out));
            }
            assert_eq!(
                snapshots[0].keys().collect::<Vec<_>>(),
                snapshots[1].keys().collect::<Vec<_>>(),
                "{label}: artifact sets differ"
            );
            for (path, bytes) in &snapshots[0] {
                assert_eq!(
                    bytes, &snapshots[1][path],
                    "{label}: artifact `{path}` differs between invocations"
                );
            }
        }

        // refine consumes an exam produced by gen in the same tree.
        let dir = base.join("refine");
        let out = dir.join("out");
        let config = write_config(&dir, &out);
        run(&config, &["gen", "--count", "pattern_recognition=8", "--count", "noise_understanding=4"]);
        let exam = out.join("exam.jsonl");
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            run(&config, &["refine", "--exam", exam.to_str().unwrap()]);
            snapshots.push(snapshot(&out));
        }
        for (path, bytes) in &snapshots[0] {
            assert_eq!(
                bytes, &snapshots[1][path],
                "refine: artifact `{path}` differs between invocations"
            );
        }
    });
    let status = if result.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance 11 end-to-end reproducibility: {status}");
    if let Err(panic) = result {
        std::panic::resume_unwind(panic);
    }
}
