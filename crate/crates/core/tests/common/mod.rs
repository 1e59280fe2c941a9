#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

pub fn capsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capsel"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("failed to launch capsel")
}

pub fn run_cli(config: &Path, queries: Option<&Path>, out: &Path, workers: usize) -> Output {
    let workers = workers.to_string();
    let mut args = vec![
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        &workers,
    ];
    if let Some(q) = queries {
        args.extend(["--queries", q.to_str().unwrap()]);
    }
    capsel(&args)
}

const NOUNS: [&str; 10] = ["man", "woman", "jacket", "snow", "skis", "dog", "beach", "ball", "street", "bike"];
const ADJECTIVES: [&str; 4] = ["red", "blue", "young", "brown"];
const VERBS: [&str; 6] = ["walking", "running", "riding", "playing", "standing", "skiing"];
const UNKNOWN: [&str; 4] = ["seashore", "canine", "sand", "grass"];

/// Writes a seeded synthetic dataset over the golden vocabulary and returns
/// the path of its config. The query list ends with one id that has no
/// features.
pub fn synthetic_dataset(dir: &Path, seed: u64, images: usize, queries: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in ["embeddings.tsv", "stopwords.txt", "pos_lexicon.tsv", "adj_noun_lexicon.tsv"] {
        fs::copy(golden_dir().join(name), dir.join(name)).unwrap();
    }

    let mut features = String::new();
    let mut captions = String::new();
    let mut tags = String::new();
    let mut query_ids = String::new();
    for i in 0..images {
        let id = format!("s{i:04}");
        // a few clusters so neighbourhoods hold several images
        let centre = (i % 7) as f64 * 4.0;
        let f: Vec<f64> = (0..3)
            .map(|_| centre + (rng.random_range(0..200) as f64) / 100.0)
            .collect();
        writeln!(features, r#"{{"image_id": "{id}", "feature": [{}, {}, {}]}}"#, f[0], f[1], f[2]).unwrap();

        let caps: Vec<String> = (0..5).map(|_| format!("\"{}\"", random_caption(&mut rng))).collect();
        writeln!(captions, r#"{{"image_id": "{id}", "captions": [{}]}}"#, caps.join(", ")).unwrap();

        if i < queries {
            writeln!(query_ids, "{id}").unwrap();
            let mut list = Vec::new();
            if i % 5 == 4 {
                for w in UNKNOWN.choose_multiple(&mut rng, 2) {
                    list.push(format!(r#"{{"word": "{w}", "prob": 0.{}}}"#, rng.random_range(10..99)));
                }
            } else {
                for w in NOUNS.choose_multiple(&mut rng, 3) {
                    list.push(format!(r#"{{"word": "{w}", "prob": 0.{}, "pos": "noun"}}"#, rng.random_range(10..99)));
                }
                let a = ADJECTIVES.choose(&mut rng).unwrap();
                list.push(format!(r#"{{"word": "{a}", "prob": 0.{}}}"#, rng.random_range(10..99)));
                let v = VERBS.choose(&mut rng).unwrap();
                list.push(format!(r#"{{"word": "{v}", "prob": 0.{}}}"#, rng.random_range(10..99)));
            }
            writeln!(tags, r#"{{"image_id": "{id}", "tags": [{}]}}"#, list.join(", ")).unwrap();
        }
    }
    query_ids.push_str("missing_image\n");

    fs::write(dir.join("features.jsonl"), features).unwrap();
    fs::write(dir.join("captions.jsonl"), captions).unwrap();
    fs::write(dir.join("tags.jsonl"), tags).unwrap();
    fs::write(dir.join("queries.txt"), query_ids).unwrap();
    let config = dir.join("config.json");
    fs::write(
        &config,
        r#"{
  "epsilon": 0.3,
  "n_candidates": 12,
  "embedding_dimension": 4,
  "embeddings_path": "embeddings.tsv",
  "stopwords_path": "stopwords.txt",
  "pos_lexicon_path": "pos_lexicon.tsv",
  "adj_noun_lexicon_path": "adj_noun_lexicon.tsv",
  "image_features_path": "features.jsonl",
  "caption_database_path": "captions.jsonl",
  "tag_predictions_path": "tags.jsonl",
  "query_list_path": "queries.txt"
}"#,
    )
    .unwrap();
    config
}

fn random_caption(rng: &mut ChaCha8Rng) -> String {
    let subject = ["man", "woman", "dog"].choose(rng).unwrap();
    let verb = VERBS.choose(rng).unwrap();
    let place = ["snow", "beach", "street"].choose(rng).unwrap();
    match rng.random_range(0..4) {
        0 => format!("a {} {subject} {verb} on the {place}", ADJECTIVES.choose(rng).unwrap()),
        1 => format!("a {subject} in a {} jacket {verb} in the {place}", ADJECTIVES.choose(rng).unwrap()),
        2 => format!("a {subject} with a {} {verb} along the {place}", NOUNS.choose(rng).unwrap()),
        _ => format!("a {subject} {verb}"),
    }
}
