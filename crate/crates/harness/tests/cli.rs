use std::path::Path;
use std::process::Command;

fn actvocab(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_actvocab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "actvocab {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stage_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = data.join("manifest.txt");
    actvocab(&[
        "synth", "--out", p(&data), "--classes", "3", "--videos-per-class", "6",
        "--features-per-video", "20", "--words-per-class", "3", "--shared-words", "2",
    ]);
    let stats = actvocab(&["stats", "--manifest", p(&manifest)]);
    assert!(stats.contains("20"), "{stats}");

    let pool = tmp.path().join("pool.bin");
    let vocab = tmp.path().join("vocab.bin");
    let enc = tmp.path().join("enc.bin");
    let model = tmp.path().join("model.bin");
    let preds = tmp.path().join("preds.tsv");
    actvocab(&["sample", "--manifest", p(&manifest), "--k", "4", "--out", p(&pool)]);
    actvocab(&[
        "fit-vocab", "--pool", p(&pool), "--manifest", p(&manifest), "--scheme", "2b",
        "--representation", "3a", "--k", "4", "--out", p(&vocab),
    ]);
    actvocab(&[
        "encode", "--manifest", p(&manifest), "--vocab", p(&vocab), "--representation", "3a",
        "--out", p(&enc),
    ]);
    actvocab(&["train", "--encodings", p(&enc), "--manifest", p(&manifest), "--out", p(&model)]);
    let line = actvocab(&[
        "predict", "--model", p(&model), "--encodings", p(&enc), "--manifest", p(&manifest),
        "--out", p(&preds),
    ]);
    assert!(line.starts_with("acc "), "{line}");
    let tsv = std::fs::read_to_string(&preds).unwrap();
    assert!(tsv.starts_with("video\ttruth\tpredicted\n"));
    assert!(tsv.lines().count() > 1);
}

#[test]
fn run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    actvocab(&[
        "synth", "--out", p(&data), "--classes", "3", "--videos-per-class", "6",
        "--features-per-video", "20",
    ]);
    let cfg = tmp.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "manifest = \"data/manifest.txt\"\noutput_dir = \"out\"\nk = [2]\nrepresentations = [\"3a\"]\nsampling = [\"1a\"]\n",
    )
    .unwrap();
    let table = actvocab(&["run", "--config", p(&cfg)]);
    assert!(table.contains("3a-2a-1a"), "{table}");
    assert!(table.contains("best acc"), "{table}");
    let again = actvocab(&["report", "--dir", p(&tmp.path().join("out"))]);
    assert_eq!(again, table);
}
