//! Writes templated stories as a pre-tagged corpus.
//!
//! `cargo run --example generate_corpus -- OUT.txt [count] [seed]`

use corefkit::synthetic::{generate_stories, to_pretagged_text, StoryConfig};

fn main() -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map(String::as_str).unwrap_or("stories.txt");
    let count = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    let seed = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(0);
    let stories = generate_stories(&StoryConfig::default(), seed, count);
    std::fs::write(out, to_pretagged_text(&stories))?;
    println!("wrote {count} stories to {out}");
    for line in to_pretagged_text(&stories[..1]).lines() {
        println!("  {line}");
    }
    Ok(())
}
