//! Regenerates `fixtures/synthetic` from the bundled exemplars.
//!
//! cargo run -p stancemine-core --example gen_synthetic [-- <out-dir> [seed]]

use std::path::PathBuf;

use stancemine_core::synthetic::{generate, ExemplarSet, DEFAULT_SEED};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| root.join("fixtures/synthetic"));
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(DEFAULT_SEED);
    let exemplars = ExemplarSet::load(&root.join("fixtures/exemplars"))?;
    let corpus = generate(seed, &exemplars)?;
    corpus.write(&out)?;
    println!(
        "{} posts, {} comments, {} scripted replies -> {}",
        corpus.posts.len(),
        corpus.comments.len(),
        corpus.script.replies.len(),
        out.display()
    );
    Ok(())
}
