//! Joint subword vocabulary (byte-pair merging) shared across all languages,
//! plus the closed language registry.
//!
//! Words are whitespace-delimited; the last character of every word carries
//! an end-of-word marker so decoding can restore spaces. IDs 0-4 are always
//! the specials (pad, unk, bos, eos, blank); blank is reserved here so the
//! CTC projection can share the embedding table without an extra output row.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const BLANK: usize = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<unk>", "<s>", "</s>", "<blank>"];
const EOW: &str = "</w>";
const MERGE_HEADER: &str = "#MERGES";

/// Bidirectional token/id map with an ordered merge list.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
    merges: Vec<(String, String)>,
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == n {
                format!("{c}{EOW}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn apply_merge(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let joined = format!("{}{}", symbols[i], symbols[i + 1]);
            symbols[i] = joined;
            symbols.remove(i + 1);
        } else {
            i += 1;
        }
    }
}

impl Vocabulary {
    /// Greedy highest-frequency pair merging until the vocabulary reaches
    /// `target_size` or no pair occurs at least twice. Ties break by
    /// lexicographic pair order.
    pub fn train_bpe<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Vocabulary> {
        // word type -> (symbol sequence, frequency)
        let mut words: Vec<(Vec<String>, usize)> = Vec::new();
        let mut word_index: HashMap<String, usize> = HashMap::new();
        for line in corpus {
            for word in line.as_ref().split_whitespace() {
                match word_index.get(word) {
                    Some(&i) => words[i].1 += 1,
                    None => {
                        word_index.insert(word.to_string(), words.len());
                        words.push((word_symbols(word), 1));
                    }
                }
            }
        }
        if words.is_empty() {
            return Err(Error::Vocab("empty training corpus".into()));
        }

        let distinct_chars: std::collections::BTreeSet<char> = word_index
            .keys()
            .flat_map(|w| w.chars())
            .collect();
        if target_size <= distinct_chars.len() + SPECIALS.len() {
            return Err(Error::Vocab(format!(
                "target size {target_size} must exceed {} distinct characters + {} specials",
                distinct_chars.len(),
                SPECIALS.len()
            )));
        }

        let mut alphabet: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for (symbols, _) in &words {
            for s in symbols {
                alphabet.insert(s.clone());
            }
        }

        let mut id_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(alphabet.iter().cloned());
        if id_to_token.len() > target_size {
            return Err(Error::Vocab(format!(
                "target size {target_size} cannot hold the {} initial symbols plus specials",
                alphabet.len()
            )));
        }

        let mut merges: Vec<(String, String)> = Vec::new();
        while id_to_token.len() < target_size {
            let mut pair_freq: HashMap<(String, String), usize> = HashMap::new();
            for (symbols, freq) in &words {
                for pair in symbols.windows(2) {
                    *pair_freq
                        .entry((pair[0].clone(), pair[1].clone()))
                        .or_insert(0) += freq;
                }
            }
            let best = pair_freq
                .into_iter()
                .filter(|(_, f)| *f >= 2)
                .min_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let Some(((left, right), _)) = best else {
                break;
            };
            let token = format!("{left}{right}");
            for (symbols, _) in words.iter_mut() {
                apply_merge(symbols, &left, &right);
            }
            merges.push((left, right));
            id_to_token.push(token);
        }

        Ok(Vocabulary::from_parts(id_to_token, merges))
    }

    fn from_parts(id_to_token: Vec<String>, merges: Vec<(String, String)>) -> Vocabulary {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { id_to_token, token_to_id, merges }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(|s| s.as_str())
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Segment text into token ids, applying merges in training order.
    /// Characters never seen in training map to unk.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let mut symbols = word_symbols(word);
            for (l, r) in &self.merges {
                apply_merge(&mut symbols, l, r);
            }
            for s in &symbols {
                out.push(self.token_to_id.get(s).copied().unwrap_or(UNK));
            }
        }
        out
    }

    /// Concatenate tokens, restore spaces at end-of-word markers, strip
    /// specials. Errors on ids outside the vocabulary.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let token = self
                .id_to_token
                .get(id)
                .ok_or_else(|| Error::Vocab(format!("token id {id} out of range")))?;
            if id < SPECIALS.len() {
                continue;
            }
            match token.strip_suffix(EOW) {
                Some(stem) => {
                    out.push_str(stem);
                    out.push(' ');
                }
                None => out.push_str(token),
            }
        }
        Ok(out.trim_end().to_string())
    }

    /// One token per line in id order, then a "#MERGES" section. Round-trips
    /// bit-exactly through [`Vocabulary::load`].
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.id_to_token {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str(MERGE_HEADER);
        out.push('\n');
        for (l, r) in &self.merges {
            out.push_str(l);
            out.push(' ');
            out.push_str(r);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let body = fs::read_to_string(path)
            .map_err(|e| Error::Vocab(format!("cannot read {}: {e}", path.display())))?;
        let mut id_to_token = Vec::new();
        let mut merges = Vec::new();
        let mut in_merges = false;
        for line in body.lines() {
            if line == MERGE_HEADER {
                in_merges = true;
                continue;
            }
            if in_merges {
                let (l, r) = line.split_once(' ').ok_or_else(|| {
                    Error::Vocab(format!("malformed merge line {line:?} in {}", path.display()))
                })?;
                merges.push((l.to_string(), r.to_string()));
            } else {
                id_to_token.push(line.to_string());
            }
        }
        if !in_merges {
            return Err(Error::Vocab(format!(
                "{}: missing {MERGE_HEADER} section",
                path.display()
            )));
        }
        if id_to_token.len() < SPECIALS.len()
            || SPECIALS.iter().enumerate().any(|(i, s)| id_to_token[i] != *s)
        {
            return Err(Error::Vocab(format!(
                "{}: specials must occupy ids 0-4",
                path.display()
            )));
        }
        Ok(Vocabulary::from_parts(id_to_token, merges))
    }
}

/// Index into the registered language set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LanguageId(pub usize);

/// Closed set of language codes, fixed at configuration time.
#[derive(Debug, Clone)]
pub struct LanguageSet {
    codes: Vec<String>,
}

impl LanguageSet {
    pub fn new<S: AsRef<str>>(codes: &[S]) -> Result<LanguageSet> {
        let mut seen = std::collections::HashSet::new();
        let codes: Vec<String> = codes.iter().map(|c| c.as_ref().to_string()).collect();
        if codes.is_empty() {
            return Err(Error::Config("language set must not be empty".into()));
        }
        for c in &codes {
            if c.is_empty() || !seen.insert(c.clone()) {
                return Err(Error::Config(format!("invalid or duplicate language code {c:?}")));
            }
        }
        Ok(LanguageSet { codes })
    }

    pub fn get(&self, code: &str) -> Result<LanguageId> {
        self.codes
            .iter()
            .position(|c| c == code)
            .map(LanguageId)
            .ok_or_else(|| Error::Data(format!("unregistered language '{code}'")))
    }

    pub fn code(&self, id: LanguageId) -> &str {
        &self.codes[id.0]
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LanguageId, &str)> {
        self.codes.iter().enumerate().map(|(i, c)| (LanguageId(i), c.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_merge_on_repeated_word() {
        let v = Vocabulary::train_bpe(&["ab ab ab"], 64).unwrap();
        assert_eq!(v.merges()[0], ("a".to_string(), format!("b{EOW}")));
        assert!(v.id(&format!("ab{EOW}")).is_some());
    }

    #[test]
    fn single_char_word_has_no_merges() {
        let v = Vocabulary::train_bpe(&["a"], 64).unwrap();
        assert!(v.merges().is_empty());
        assert_eq!(v.size(), 6); // specials + "a</w>"
    }

    #[test]
    fn tie_breaks_lexicographically() {
        // "xab xab yba yba": pairs (a,b</w>) and (b,a</w>) both occur twice.
        let v = Vocabulary::train_bpe(&["xab xab yba yba"], 64).unwrap();
        assert_eq!(v.merges()[0], ("a".to_string(), format!("b{EOW}")));
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(Vocabulary::train_bpe(&[""; 0], 64).is_err());
        assert!(Vocabulary::train_bpe(&["   "], 64).is_err());
    }

    #[test]
    fn encode_empty_and_oov() {
        let v = Vocabulary::train_bpe(&["la casa verde", "la casa"], 64).unwrap();
        assert!(v.encode("").is_empty());
        let ids = v.encode("laq"); // 'q' never seen
        assert!(ids.contains(&UNK));
    }

    #[test]
    fn decode_strips_specials() {
        let v = Vocabulary::train_bpe(&["ab ab"], 64).unwrap();
        let x = v.id(&format!("ab{EOW}")).unwrap();
        let s = v.decode(&[BOS, x, EOS]).unwrap();
        assert_eq!(s, "ab");
        assert!(v.decode(&[]).unwrap().is_empty());
        assert!(v.decode(&[v.size()]).is_err());
    }

    #[test]
    fn corpus_round_trip() {
        let corpus = ["la casa verde", "el rio azul", "la luna", "el sol y la luna"];
        let v = Vocabulary::train_bpe(&corpus, 128).unwrap();
        for line in &corpus {
            assert_eq!(v.decode(&v.encode(line)).unwrap(), *line);
        }
    }

    #[test]
    fn size_respects_cap() {
        let corpus = ["aaab aab ab aaab aab ab b a"];
        let v = Vocabulary::train_bpe(&corpus, 12).unwrap();
        assert!(v.size() <= 12);
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(v.token(i).unwrap(), *s);
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::train_bpe(&["la casa verde", "el rio azul"], 100).unwrap();
        v.save(&path).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let v2 = Vocabulary::load(&path).unwrap();
        let path2 = dir.path().join("vocab2.txt");
        v2.save(&path2).unwrap();
        let bytes2 = std::fs::read(&path2).unwrap();
        assert_eq!(bytes1, bytes2);
        assert_eq!(v.size(), v2.size());
    }

    #[test]
    fn language_registry() {
        let set = LanguageSet::new(&["es", "en"]).unwrap();
        assert_eq!(set.get("es").unwrap(), LanguageId(0));
        assert!(set.get("xx").is_err());
        assert!(LanguageSet::new(&["es", "es"]).is_err());
    }
}
