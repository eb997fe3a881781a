use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codex_cli::artifact::RunArtifact;
use codex_cli::svg::render_scatter;
use codex_core::hdbscan::ClusterLabels;

fn codex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = codex(args);
    assert!(
        out.status.success(),
        "codex {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, env: &str, n: usize, seed: u64) -> Vec<PathBuf> {
    ok(&["gen", "--env", env, "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", s(dir)]);
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

fn svg_doc(text: &str) -> roxmltree::Document<'_> {
    roxmltree::Document::parse(text).expect("well-formed SVG")
}

fn count_class(doc: &roxmltree::Document<'_>, class: &str) -> usize {
    doc.descendants()
        .filter(|n| n.attribute("class").is_some_and(|c| c.split(' ').any(|w| w == class)))
        .count()
}

#[test]
fn gen_writes_files_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = gen(a.path(), "four_rooms", 5, 42);
    let fb = gen(b.path(), "four_rooms", 5, 42);
    assert_eq!(fa.len(), 5);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(codex(&["gen", "--env", "mars", "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(codex(&["pipeline", "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(codex(&["frobnicate"]).status.code(), Some(2));
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "colour=blue\n").unwrap();
    let eps = gen(&dir.path().join("eps"), "door_key", 1, 0);
    let out = codex(&["--config", s(&bad), "pipeline", "--episode", s(&eps[0]), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tag_writes_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let eps = gen(&dir.path().join("eps"), "multi_entity", 1, 3);
    let tsv = dir.path().join("tags.tsv");
    ok(&["tag", "--episode", s(&eps[0]), "--out", s(&tsv)]);
    let text = std::fs::read_to_string(&tsv).unwrap();
    assert!(text.lines().count() > 10);
    let stdout = ok(&["tag", "--episode", s(&eps[0])]);
    assert_eq!(stdout, text);
}

#[test]
fn pipeline_writes_artifact_summary_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let eps = gen(&dir.path().join("eps"), "door_key", 1, 5);
    let out = dir.path().join("run");
    let stdout = ok(&["pipeline", "--episode", s(&eps[0]), "--out", s(&out), "--n-epochs", "200"]);
    assert!(stdout.starts_with("tags="));
    assert!(stdout.contains("clustered_pct="));

    let artifact = RunArtifact::load(&out.join("run.json")).unwrap();
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary, artifact.summary.render());
    let texts: Vec<&str> = artifact.corpus.texts().collect();
    for l in &artifact.summary.lines {
        assert!(texts.contains(&l.text.as_str()));
    }

    let svg = std::fs::read_to_string(out.join("clusters.svg")).unwrap();
    let doc = svg_doc(&svg);
    assert_eq!(count_class(&doc, "centroid"), artifact.labels.n_clusters);
    assert_eq!(count_class(&doc, "cluster-label"), artifact.labels.n_clusters);
    assert_eq!(count_class(&doc, "point"), artifact.corpus.len());
    assert_eq!(count_class(&doc, "summary-line"), artifact.summary.lines.len() + 1);
    let legend = doc.descendants().find(|n| n.attribute("class") == Some("legend")).unwrap();
    assert!(legend.text().unwrap().starts_with(&format!("{} tags", artifact.corpus.len())));
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let eps = gen(&dir.path().join("eps"), "multi_entity", 1, 9);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["--threads", "1", "pipeline", "--episode", s(&eps[0]), "--out", s(&a), "--n-epochs", "150"]);
    ok(&["--threads", "4", "pipeline", "--episode", s(&eps[0]), "--out", s(&b), "--n-epochs", "150"]);
    for f in ["run.json", "summary.txt", "clusters.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let eps = gen(&dir.path().join("eps"), "multi_entity", 1, 2);
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "min_cluster_size=20\nsum_thresh=0.7\nn_neighbors=12\nn_epochs=100\n").unwrap();
    let out = dir.path().join("run");
    ok(&["--config", s(&conf), "pipeline", "--episode", s(&eps[0]), "--out", s(&out), "--mcs", "15"]);
    let art = RunArtifact::load(&out.join("run.json")).unwrap();
    assert_eq!(art.config.hdbscan.min_cluster_size, 15);
    assert_eq!(art.config.summary.sum_thresh, 0.7);
    assert_eq!(art.config.umap.n_neighbors, 12);
    assert_eq!(art.config.umap.n_epochs, 100);
}

#[test]
fn arena_setting_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let eps = gen(&dir.path().join("eps"), "multi_entity", 1, 4);
    let out = dir.path().join("run");
    ok(&[
        "pipeline", "--episode", s(&eps[0]), "--out", s(&out), "--sum-thresh", "0.7", "--min-cluster-size", "20",
        "--n-epochs", "100",
    ]);
    let art = RunArtifact::load(&out.join("run.json")).unwrap();
    assert_eq!(art.config.hdbscan.min_cluster_size, 20);
    assert_eq!(art.config.summary.sum_thresh, 0.7);
    assert!(art.labels.members.iter().all(|m| m.len() >= 20));
}

fn write_vectors(path: &Path, rows: usize, dim: usize) {
    let mut text = format!("dim={dim} count={rows}\n");
    for r in 0..rows {
        let row: Vec<String> = (0..dim).map(|j| format!("{}", ((r * 7 + j * 3) % 11) as f64 + 0.5)).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn external_embeddings_count_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let eps = gen(&dir.path().join("eps"), "door_key", 1, 1);
    let tsv = dir.path().join("tags.tsv");
    ok(&["tag", "--episode", s(&eps[0]), "--out", s(&tsv)]);
    let n = std::fs::read_to_string(&tsv).unwrap().lines().count();
    let vec = dir.path().join("ext.vec");
    write_vectors(&vec, n - 1, 8);
    let out = codex(&["pipeline", "--tags", s(&tsv), "--embeddings", s(&vec), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("{}", n - 1)) && err.contains(&format!("{n}")), "{err}");
}

#[test]
fn replay_reproduces_builtin_and_external_runs() {
    let dir = tempfile::tempdir().unwrap();
    let eps = gen(&dir.path().join("eps"), "door_key", 1, 8);
    let run = dir.path().join("run");
    ok(&["pipeline", "--episode", s(&eps[0]), "--out", s(&run), "--n-epochs", "120", "--seed", "7"]);
    let stdout = ok(&["replay", "--artifact", s(&run.join("run.json"))]);
    assert!(stdout.starts_with("replay identical"));

    let tsv = dir.path().join("tags.tsv");
    ok(&["tag", "--episode", s(&eps[0]), "--out", s(&tsv)]);
    let n = std::fs::read_to_string(&tsv).unwrap().lines().count();
    let vec = dir.path().join("ext.vec");
    write_vectors(&vec, n, 8);
    let ext = dir.path().join("ext");
    ok(&["pipeline", "--tags", s(&tsv), "--embeddings", s(&vec), "--out", s(&ext), "--n-epochs", "120"]);
    let art = RunArtifact::load(&ext.join("run.json")).unwrap();
    let json = std::fs::read_to_string(ext.join("run.json")).unwrap();
    assert!(json.contains("\"sha256\""));
    assert!(matches!(art.embedding, codex_cli::artifact::EmbeddingDescriptor::External { dim: 8, .. }));
    ok(&["replay", "--artifact", s(&ext.join("run.json"))]);

    write_vectors(&vec, n, 9);
    let out = codex(&["replay", "--artifact", s(&ext.join("run.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
}

#[test]
fn sweep_tables() {
    let dir = tempfile::tempdir().unwrap();
    let eps = dir.path().join("eps");
    gen(&eps, "door_key", 10, 0);
    let csv = dir.path().join("sweep.csv");
    ok(&["sweep", "--episodes", s(&eps), "--out", s(&csv), "--n-epochs", "100"]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n_neighbors,min_cluster,clustered_pct,sil_score,global_cos_sim,mean");
    assert_eq!(lines.len(), 26);

    let one = ok(&["sweep", "--episodes", s(&eps), "--neighbors", "10", "--min-cluster", "10", "--n-epochs", "100"]);
    assert_eq!(one.lines().count(), 2);
    assert!(one.lines().nth(1).unwrap().starts_with("10,10,"));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(codex(&["sweep", "--episodes", s(&empty)]).status.code(), Some(1));
}

#[test]
fn latents_report_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lat");
    let report = ok(&["latents", "--synthetic", "--mcs", "5", "--seed", "3", "--out", s(&out)]);
    assert!(report.starts_with("# synthetic-3 steps=24 clusters=3 clustered=24"), "{report}");
    let steps: Vec<&str> = report.lines().filter(|l| l.starts_with("step=")).collect();
    assert_eq!(steps.len(), 2);
    assert!(steps[0].starts_with("step=7 ") && steps[1].starts_with("step=15 "), "{steps:?}");
    assert_eq!(std::fs::read_to_string(out.join("transitions.txt")).unwrap(), report);
    let svg = std::fs::read_to_string(out.join("latents.svg")).unwrap();
    let doc = svg_doc(&svg);
    assert_eq!(count_class(&doc, "centroid"), 3);
    assert_eq!(count_class(&doc, "annotation"), 24);

    let noisy = ok(&["latents", "--synthetic", "--mcs", "30", "--seed", "3"]);
    assert!(noisy.trim_end().ends_with("unclusterable"));
}

#[test]
fn latents_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let series = codex_core::latent::synth_latents(3, 8, 64, 0.01, 1);
    let path = dir.path().join("episode.vec");
    std::fs::write(&path, codex_core::embedding::vectors_to_text(64, &series.vectors)).unwrap();
    let report = ok(&["latents", "--input", s(&path), "--mcs", "5"]);
    assert!(report.starts_with("# episode steps=24 clusters=3"), "{report}");
    std::fs::write(&path, "dim=2 count=1\nNaN 0\n").unwrap();
    assert_eq!(codex(&["latents", "--input", s(&path)]).status.code(), Some(1));
}

fn nine_clusters() -> (Vec<Vec<f64>>, ClusterLabels) {
    let mut coords = Vec::new();
    let mut assign = Vec::new();
    for c in 0..9 {
        for k in 0..6 {
            coords.push(vec![(c % 3) as f64 * 10.0 + k as f64 * 0.1, (c / 3) as f64 * 10.0 - k as f64 * 0.1]);
            assign.push(Some(c));
        }
    }
    coords.push(vec![5.0, 5.0]);
    assign.push(None);
    let labels = ClusterLabels::from_assignment(&assign, &coords);
    (coords, labels)
}

#[test]
fn scatter_counts_and_well_formedness() {
    let (coords, labels) = nine_clusters();
    let notes = vec![(0, "a < b & \"c\"".to_string())];
    let svg = render_scatter(&coords, &labels, None, &notes).unwrap();
    let doc = svg_doc(&svg);
    assert_eq!(count_class(&doc, "centroid"), 9);
    assert_eq!(count_class(&doc, "cluster-label"), 9);
    assert_eq!(count_class(&doc, "noise"), 1);
    let note = doc.descendants().find(|n| n.attribute("class") == Some("annotation")).unwrap();
    assert_eq!(note.text(), Some("a < b & \"c\""));
    assert_eq!(svg, render_scatter(&coords, &labels, None, &notes).unwrap());
}

#[test]
fn noise_only_plot_is_grey() {
    let coords: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let labels = ClusterLabels::from_assignment(&[None; 10], &coords);
    let svg = render_scatter(&coords, &labels, None, &[]).unwrap();
    let doc = svg_doc(&svg);
    let fills: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("circle"))
        .map(|n| n.attribute("fill").unwrap())
        .collect();
    assert_eq!(fills.len(), 10);
    assert!(fills.iter().all(|f| *f == codex_cli::svg::color(None)));
    assert_eq!(count_class(&doc, "centroid"), 0);
}
