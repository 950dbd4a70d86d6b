//! Closed vocabulary over two-decimal coordinate strings, bracket/comma
//! punctuation, and a word list harvested from the training corpus.
//!
//! Coordinate tokens `0.00` ... `1.00` occupy one contiguous id range, so a
//! predicted id maps back to a coordinate with plain arithmetic. Text is
//! split on spaces, brackets and commas; each delimiter is itself a token,
//! so detokenization is literal concatenation and in-vocabulary text
//! round-trips exactly.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;

/// First coordinate token id; ids `COORD_BASE..COORD_BASE+101` are the
/// strings `0.00` through `1.00`.
pub const COORD_BASE: u32 = 4;
pub const N_COORDS: u32 = 101;

const PUNCT: [&str; 4] = ["[", "]", ",", " "];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

fn coord_string(i: u32) -> String {
    format!("{:.2}", i as f64 / 100.0)
}

impl Vocab {
    /// Builds the vocabulary: specials, coordinates, punctuation, then the
    /// words harvested from `texts` in sorted order.
    pub fn build<'a>(texts: impl Iterator<Item = &'a str>) -> Vocab {
        let mut tokens: Vec<String> = vec![
            "<bos>".to_string(),
            "<eos>".to_string(),
            "<pad>".to_string(),
            "<unk>".to_string(),
        ];
        tokens.extend((0..N_COORDS).map(coord_string));
        tokens.extend(PUNCT.iter().map(|s| s.to_string()));

        let fixed: BTreeSet<String> = tokens.iter().cloned().collect();
        let mut words = BTreeSet::new();
        for text in texts {
            for unit in split_units(text) {
                if let Unit::Word(w) = unit {
                    if !fixed.contains(w) {
                        words.insert(w.to_string());
                    }
                }
            }
        }
        tokens.extend(words);

        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    /// Restores the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn is_coord(&self, id: u32) -> bool {
        (COORD_BASE..COORD_BASE + N_COORDS).contains(&id)
    }

    /// Id of the coordinate token nearest to `v` in [0, 1].
    pub fn coord_token(&self, v: f64) -> u32 {
        let cell = (v.clamp(0.0, 1.0) * 100.0).round() as u32;
        COORD_BASE + cell.min(N_COORDS - 1)
    }

    /// Tokenizes without sequence framing. Unknown words map to `<unk>`.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        split_units(text)
            .into_iter()
            .map(|u| match u {
                Unit::Punct(p) => self.index[p],
                Unit::Word(w) => self.index.get(w).copied().unwrap_or(UNK),
            })
            .collect()
    }

    /// Literal concatenation of token strings; specials render as nothing
    /// (`<bos>`, `<eos>`, `<pad>`) or `<unk>`.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                BOS | EOS | PAD => {}
                UNK => out.push_str("<unk>"),
                _ => out.push_str(self.token(id)),
            }
        }
        out
    }
}

enum Unit<'a> {
    Word(&'a str),
    Punct(&'static str),
}

fn split_units(text: &str) -> Vec<Unit<'_>> {
    let mut units = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let punct = match c {
            ' ' => Some(" "),
            '[' => Some("["),
            ']' => Some("]"),
            ',' => Some(","),
            _ => None,
        };
        if let Some(p) = punct {
            if let Some(start) = word_start.take() {
                units.push(Unit::Word(&text[start..i]));
            }
            units.push(Unit::Punct(p));
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(start) = word_start {
        units.push(Unit::Word(&text[start..]));
    }
    units
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_vocab() -> Vocab {
        Vocab::build(
            [
                "Please provide the bounding box coordinate of the region this sentence \
                 describes: the red rectangle.",
            ]
            .into_iter(),
        )
    }

    #[test]
    fn coordinate_ids_contiguous_and_bijective() {
        let v = sample_vocab();
        assert_eq!(v.id_of("0.00"), Some(COORD_BASE));
        assert_eq!(v.id_of("1.00"), Some(COORD_BASE + 100));
        assert_eq!(v.id_of("0.52"), Some(COORD_BASE + 52));
        for id in 0..v.len() as u32 {
            assert_eq!(v.id_of(v.token(id)), Some(id));
        }
    }

    #[test]
    fn box_string_roundtrips_exactly() {
        let v = sample_vocab();
        let text = "[0.52, 0.59, 0.82, 0.83]";
        let ids = v.tokenize(text);
        let coords: Vec<u32> = ids.iter().copied().filter(|&i| v.is_coord(i)).collect();
        assert_eq!(
            coords,
            vec![
                COORD_BASE + 52,
                COORD_BASE + 59,
                COORD_BASE + 82,
                COORD_BASE + 83
            ]
        );
        assert_eq!(v.detokenize(&ids), text);
    }

    #[test]
    fn empty_text_yields_no_tokens() {
        let v = sample_vocab();
        assert!(v.tokenize("").is_empty());
    }

    #[test]
    fn unknown_word_maps_to_unk() {
        let v = sample_vocab();
        let ids = v.tokenize("zebra");
        assert_eq!(ids, vec![UNK]);
    }

    #[test]
    fn in_vocab_text_roundtrips() {
        let v = sample_vocab();
        let text = "the region, the red sentence";
        assert_eq!(v.detokenize(&v.tokenize(text)), text);
    }

    #[test]
    fn coord_token_snaps_to_grid() {
        let v = sample_vocab();
        assert_eq!(v.coord_token(0.52), COORD_BASE + 52);
        assert_eq!(v.coord_token(0.524), COORD_BASE + 52);
        assert_eq!(v.coord_token(1.7), COORD_BASE + 100);
        assert_eq!(v.coord_token(-0.3), COORD_BASE);
    }

    #[test]
    fn harvested_words_sorted_and_stable() {
        let a = Vocab::build(["b a c"].into_iter());
        let b = Vocab::build(["c b a"].into_iter());
        assert_eq!(a, b);
    }
}
