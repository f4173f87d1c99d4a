//! Noun mention detection and grouping of repeated nouns.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Coarse part-of-speech tag set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Propn,
    Pron,
    Verb,
    Adj,
    Adv,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 7] = [
        PosTag::Noun,
        PosTag::Propn,
        PosTag::Pron,
        PosTag::Verb,
        PosTag::Adj,
        PosTag::Adv,
        PosTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Propn => "PROPN",
            PosTag::Pron => "PRON",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Other => "OTHER",
        }
    }

    pub fn is_mention(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Propn)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::MalformedTags(format!("unknown tag {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedWord {
    pub word: String,
    pub tag: PosTag,
}

impl TaggedWord {
    pub fn new(word: impl Into<String>, tag: PosTag) -> Self {
        TaggedWord {
            word: word.into(),
            tag,
        }
    }
}

/// Parses one pre-tagged sentence: `word/TAG` tokens separated by spaces.
/// The tag is whatever follows the last `/`, so words may contain slashes.
pub fn parse_tagged_line(line: &str) -> Result<Vec<TaggedWord>> {
    line.split_whitespace()
        .map(|token| {
            let (word, tag) = token
                .rsplit_once('/')
                .filter(|(w, _)| !w.is_empty())
                .ok_or_else(|| Error::MalformedTags(format!("token {token:?} has no tag")))?;
            Ok(TaggedWord::new(word, tag.parse()?))
        })
        .collect()
}

pub fn format_tagged_line(words: &[TaggedWord]) -> String {
    words
        .iter()
        .map(|w| format!("{}/{}", w.word, w.tag))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Where tags come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Tagger {
    /// Input tokens already carry `/TAG` suffixes.
    PreTagged,
    /// Closed-class lexicon plus suffix and capitalization rules.
    #[default]
    Heuristic,
}

/// Tags a list of words. With [`Tagger::PreTagged`] every word must be a
/// `word/TAG` token.
pub fn tag_words<S: AsRef<str>>(words: &[S], tagger: Tagger) -> Result<Vec<TaggedWord>> {
    match tagger {
        Tagger::PreTagged => {
            let line: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
            let tagged = parse_tagged_line(&line.join(" "))?;
            if tagged.len() != words.len() {
                return Err(Error::MalformedTags(format!(
                    "{} tags for {} words",
                    tagged.len(),
                    words.len()
                )));
            }
            Ok(tagged)
        }
        Tagger::Heuristic => Ok(heuristic_tags(words)),
    }
}

const PRONOUNS: &[&str] = &[
    "i",
    "me",
    "my",
    "mine",
    "myself",
    "you",
    "your",
    "yours",
    "yourself",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "it",
    "its",
    "itself",
    "we",
    "us",
    "our",
    "ours",
    "ourselves",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "who",
    "whom",
    "whose",
    "this",
    "that",
    "these",
    "those",
    "someone",
    "somebody",
    "something",
    "anyone",
    "everyone",
    "nobody",
    "nothing",
];

const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "nor", "so", "yet", "if", "then", "than", "because",
    "while", "when", "where", "as", "of", "in", "on", "at", "by", "for", "with", "about",
    "against", "between", "into", "through", "during", "before", "after", "above", "below", "to",
    "from", "up", "down", "out", "off", "over", "under", "again", "no", "not", "all", "any",
    "both", "each", "few", "more", "most", "other", "some", "such", "only", "own", "same", "too",
    "very", "which", "what", "there", "here", "every",
];

const VERBS: &[&str] = &[
    "is", "am", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having", "do",
    "does", "did", "will", "would", "shall", "should", "can", "could", "may", "might", "must",
    "said", "says", "say", "go", "goes", "went", "gone", "get", "got", "make", "made", "take",
    "took", "see", "saw", "seen", "come", "came", "know", "knew", "give", "gave", "find", "found",
    "think", "thought", "tell", "told", "met", "meet", "owns", "own", "likes", "like", "loves",
    "love", "belongs", "belong", "wants", "want", "keeps", "keep", "kept", "sees", "holds", "held",
    "feeds", "fed", "brings", "brought", "thanked", "visited",
];

const ADVERBS: &[&str] = &[
    "also", "often", "never", "always", "soon", "later", "now", "just", "still", "already", "even",
];

fn is_punct(word: &str) -> bool {
    word.chars().all(|c| !c.is_alphanumeric())
}

fn lexicon_tag(lower: &str) -> Option<PosTag> {
    if PRONOUNS.contains(&lower) {
        Some(PosTag::Pron)
    } else if FUNCTION_WORDS.contains(&lower) {
        Some(PosTag::Other)
    } else if VERBS.contains(&lower) {
        Some(PosTag::Verb)
    } else if ADVERBS.contains(&lower) {
        Some(PosTag::Adv)
    } else {
        None
    }
}

fn suffix_tag(lower: &str) -> Option<PosTag> {
    let n = lower.chars().count();
    if n > 4 && lower.ends_with("ly") {
        return Some(PosTag::Adv);
    }
    if n > 4 && (lower.ends_with("ed") || lower.ends_with("ing")) {
        return Some(PosTag::Verb);
    }
    const ADJ: [&str; 6] = ["ous", "ful", "ive", "able", "ible", "less"];
    if n > 5 && ADJ.iter().any(|s| lower.ends_with(s)) {
        return Some(PosTag::Adj);
    }
    None
}

fn heuristic_tags<S: AsRef<str>>(words: &[S]) -> Vec<TaggedWord> {
    let mut sentence_start = true;
    words
        .iter()
        .map(|w| {
            let word = w.as_ref();
            let tag =
                if word.is_empty() || is_punct(word) || word.chars().all(|c| c.is_ascii_digit()) {
                    PosTag::Other
                } else {
                    let lower = word.to_lowercase();
                    let capitalized = word.chars().next().is_some_and(char::is_uppercase);
                    match lexicon_tag(&lower) {
                        Some(tag) => tag,
                        None if capitalized && !sentence_start => PosTag::Propn,
                        None => match suffix_tag(&lower) {
                            Some(tag) => tag,
                            None if capitalized => PosTag::Propn,
                            None => PosTag::Noun,
                        },
                    }
                };
            sentence_start = matches!(word, "." | "!" | "?");
            TaggedWord::new(word, tag)
        })
        .collect()
}

/// All occurrences of one noun surface form within a sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MentionGroup {
    pub key: String,
    pub occurrences: Vec<usize>,
}

impl MentionGroup {
    /// A group needs a second occurrence to serve as a copy source.
    pub fn is_eligible(&self) -> bool {
        self.occurrences.len() >= 2
    }
}

pub fn normalize_mention(word: &str) -> String {
    word.to_lowercase()
}

/// Groups NOUN and PROPN words by case-folded surface form. Groups are
/// ordered by first occurrence.
pub fn detect_mention_groups(tagged: &[TaggedWord]) -> Vec<MentionGroup> {
    let mut slots: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<MentionGroup> = Vec::new();
    for (i, w) in tagged.iter().enumerate() {
        if !w.tag.is_mention() {
            continue;
        }
        let key = normalize_mention(&w.word);
        match slots.get(&key) {
            Some(&slot) => groups[slot].occurrences.push(i),
            None => {
                slots.insert(key.clone(), groups.len());
                groups.push(MentionGroup {
                    key,
                    occurrences: vec![i],
                });
            }
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags(words: &[&str]) -> Vec<PosTag> {
        tag_words(words, Tagger::Heuristic)
            .unwrap()
            .into_iter()
            .map(|t| t.tag)
            .collect()
    }

    #[test]
    fn heuristic_tagger_golden() {
        use PosTag::*;
        assert_eq!(
            tags(&["Claire", "filed", "a", "defense"]),
            [Propn, Verb, Other, Noun]
        );
        assert!(tags(&[]).is_empty());
        assert_eq!(
            tags(&["She", "quickly", "told", "Jane", "about", "the", "famous", "lawyer", "."]),
            [Pron, Adv, Verb, Propn, Other, Other, Adj, Noun, Other]
        );
        assert_eq!(
            tags(&["The", "dog", "barked", ".", "Dogs", "run"]),
            [Other, Noun, Verb, Other, Propn, Noun]
        );
    }

    #[test]
    fn pretagged_input() {
        let got = tag_words(&["Claire/PROPN", "filed/VERB"], Tagger::PreTagged).unwrap();
        assert_eq!(got[0], TaggedWord::new("Claire", PosTag::Propn));
        assert!(tag_words(&["Claire/PROPN", "filed"], Tagger::PreTagged).is_err());
        assert!(parse_tagged_line("Claire/PROPN filed").is_err());
        assert!(parse_tagged_line("x/NOPE").is_err());
        assert!(parse_tagged_line("/NOUN").is_err());
        let line = "and/or/OTHER Claire/PROPN";
        let parsed = parse_tagged_line(line).unwrap();
        assert_eq!(parsed[0].word, "and/or");
        assert_eq!(format_tagged_line(&parsed), line);
    }

    #[test]
    fn figure_one_groups() {
        let text = "Claire/PROPN filed/VERB a/OTHER defense/NOUN ./OTHER the/OTHER judge/NOUN believed/VERB Claire/PROPN";
        let groups = detect_mention_groups(&parse_tagged_line(text).unwrap());
        assert_eq!(groups.len(), 3);
        assert_eq!(
            groups[0],
            MentionGroup {
                key: "claire".into(),
                occurrences: vec![0, 8]
            }
        );
        assert!(groups[0].is_eligible());
        assert_eq!(groups[1].occurrences, vec![3]);
        assert!(!groups[1].is_eligible());
    }

    #[test]
    fn case_folded_grouping_and_exclusions() {
        let words: Vec<TaggedWord> = ["jane", "JANE", "Jane"]
            .iter()
            .map(|w| TaggedWord::new(*w, PosTag::Propn))
            .collect();
        let groups = detect_mention_groups(&words);
        assert_eq!(
            groups,
            vec![MentionGroup {
                key: "jane".into(),
                occurrences: vec![0, 1, 2]
            }]
        );

        let none = parse_tagged_line("she/PRON ran/VERB quickly/ADV home/OTHER").unwrap();
        assert!(detect_mention_groups(&none).is_empty());
    }

    fn arb_tagged() -> impl Strategy<Value = Vec<TaggedWord>> {
        prop::collection::vec(
            (
                prop::sample::select(vec!["cat", "Cat", "dog", "run", "it"]),
                prop::sample::select(PosTag::ALL.to_vec()),
            )
                .prop_map(|(w, t)| TaggedWord::new(w, t)),
            0..20,
        )
    }

    proptest! {
        #[test]
        fn every_mention_in_exactly_one_group(tagged in arb_tagged()) {
            let groups = detect_mention_groups(&tagged);
            let mut seen = vec![0usize; tagged.len()];
            for g in &groups {
                prop_assert!(g.occurrences.windows(2).all(|w| w[0] < w[1]));
                for &i in &g.occurrences {
                    seen[i] += 1;
                    prop_assert_eq!(normalize_mention(&tagged[i].word), g.key.clone());
                }
            }
            for (i, w) in tagged.iter().enumerate() {
                prop_assert_eq!(seen[i], usize::from(w.tag.is_mention()));
            }
        }

        #[test]
        fn eligibility_is_monotone(mut tagged in arb_tagged(), extra in 0usize..20) {
            let before = detect_mention_groups(&tagged);
            if let Some(g) = before.first() {
                let w = tagged[g.occurrences[0]].clone();
                let at = extra.min(tagged.len());
                tagged.insert(at, w);
                let after = detect_mention_groups(&tagged);
                for b in before.iter().filter(|g| g.is_eligible()) {
                    prop_assert!(after.iter().any(|a| a.key == b.key && a.is_eligible()));
                }
            }
        }
    }
}
