//! Regenerates the bundled synthetic fixture at fixtures/and200.
//!
//! The fixture is a 200-ad AND-rule corpus (seed 0) with 16x16 images,
//! committed so tests and demos run without network access. Output is
//! deterministic; rerunning this produces byte-identical files.
//!
//!     cargo run --example make_fixture [dir]

use std::path::PathBuf;

use polads::synth;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures/and200"));
    let corpus = synth::make_and_corpus(200, 0).expect("corpus parameters are valid");
    let paths = synth::write_fixture(&corpus, &dir).expect("fixture directory is writable");
    println!(
        "wrote {} ads to {} (+ sponsors, gazetteer, {} images)",
        corpus.ads.len(),
        paths.ads.display(),
        corpus.images.len()
    );
}
