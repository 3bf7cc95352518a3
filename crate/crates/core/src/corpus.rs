//! Tag-interleaved training corpus and the unique-word vocabulary.
//!
//! Record `j` with words `w1, w2, ...` becomes the sequence
//! `tag{j} w1 tag{j} w2 ... tag{j}`. With a context window of one, the only
//! neighbours a word ever sees are the tags of the records it belongs to, so
//! words that share records share context.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::schema::Dataset;

/// Unique words in first-occurrence order with their global occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary with an explicit word order and counts.
    pub fn from_counts<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut v = Vocabulary::new();
        for (w, c) in entries {
            let w = w.into();
            if c == 0 {
                return Err(Error::Consistency(format!("word `{w}` has zero count")));
            }
            if v.index.contains_key(&w) {
                return Err(Error::Consistency(format!("duplicate word `{w}`")));
            }
            v.index.insert(w.clone(), v.words.len());
            v.words.push(w);
            v.counts.push(c);
        }
        Ok(v)
    }

    fn add(&mut self, word: &str) {
        match self.index.get(word) {
            Some(&i) => self.counts[i] += 1,
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.counts.push(1);
            }
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.index_of(word).map(|i| self.counts[i])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// The word with the largest count; ties go to the earliest word.
    pub fn most_frequent(&self) -> Option<&str> {
        let mut best: Option<usize> = None;
        for (i, &c) in self.counts.iter().enumerate() {
            if best.is_none_or(|b| c > self.counts[b]) {
                best = Some(i);
            }
        }
        best.map(|i| self.words[i].as_str())
    }
}

pub fn unique_words(dataset: &Dataset, column: &str) -> Result<Vocabulary> {
    let mut vocab = Vocabulary::new();
    for set in dataset.wordsets_of(column)? {
        for w in set.iter() {
            vocab.add(w);
        }
    }
    Ok(vocab)
}

pub fn tag_token(record: usize) -> String {
    format!("tag{record}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedCorpus {
    sequences: Vec<Vec<String>>,
    /// Records whose word set was empty (their sequence is the lone tag).
    degenerate: Vec<usize>,
}

impl TaggedCorpus {
    pub fn sequences(&self) -> &[Vec<String>] {
        &self.sequences
    }

    pub fn degenerate_records(&self) -> &[usize] {
        &self.degenerate
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn is_tag(token: &str) -> bool {
        token
            .strip_prefix("tag")
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    }

    /// One sequence per line, tokens separated by single spaces.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for seq in &self.sequences {
            writeln!(out, "{}", seq.join(" "))?;
        }
        Ok(())
    }
}

pub fn build_tagged_corpus(dataset: &Dataset, column: &str) -> Result<TaggedCorpus> {
    let mut sequences = Vec::with_capacity(dataset.len());
    let mut degenerate = Vec::new();
    for (j, set) in dataset.wordsets_of(column)?.enumerate() {
        let tag = tag_token(j);
        let mut seq = Vec::with_capacity(2 * set.len() + 1);
        seq.push(tag.clone());
        for w in set.iter() {
            if TaggedCorpus::is_tag(w) {
                return Err(Error::Consistency(format!(
                    "record {j}: word `{w}` collides with the tag token namespace"
                )));
            }
            seq.push(w.to_string());
            seq.push(tag.clone());
        }
        if set.is_empty() {
            degenerate.push(j);
        }
        sequences.push(seq);
    }
    Ok(TaggedCorpus {
        sequences,
        degenerate,
    })
}
