//! Tags raw text with the heuristic tagger and groups repeated nouns.

use corefkit::mentions::{detect_mention_groups, format_tagged_line, tag_words, Tagger};

fn main() -> corefkit::Result<()> {
    let text =
        "Claire filed a defense . The court heard the defense and Claire thanked the court .";
    let words: Vec<&str> = text.split_whitespace().collect();
    let tagged = tag_words(&words, Tagger::Heuristic)?;
    println!("{}", format_tagged_line(&tagged));
    for g in detect_mention_groups(&tagged) {
        let mark = if g.is_eligible() {
            "repeated"
        } else {
            "single"
        };
        println!("{:>8} {:<8} at words {:?}", g.key, mark, g.occurrences);
    }
    Ok(())
}
