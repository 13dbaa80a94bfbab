//! Synthetic toy corpora: tone-sequence audio with aligned transcripts and
//! rule-based word-for-word translations, written in the raw layout that
//! `prepare-data` consumes. Everything is deterministic under a seed.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::audio::write_wav;
use crate::rng::{self, tag};
use crate::{Error, Result};

const SAMPLE_RATE: u32 = 16_000;

/// Word inventory and tone base frequency per toy language.
fn lexicon(code: &str) -> Option<(f64, [&'static str; 5])> {
    match code {
        "aa" => Some((400.0, ["ka", "ri", "mo", "su", "te"])),
        "bb" => Some((460.0, ["na", "lo", "vi", "du", "pe"])),
        "xx" => Some((0.0, ["kip", "rup", "mip", "sop", "tig"])),
        "yy" => Some((0.0, ["nol", "lix", "var", "dag", "pem"])),
        _ => None,
    }
}

/// What to generate. ST pairs produce audio + transcript + translation;
/// ASR languages produce audio + transcript; NMT pairs produce text only.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub utterances_per_pair: usize,
    pub words_min: usize,
    pub words_max: usize,
    pub st_pairs: Vec<(String, String)>,
    pub asr_langs: Vec<String>,
    pub nmt_pairs: Vec<(String, String)>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            seed: 0,
            utterances_per_pair: 30,
            words_min: 2,
            words_max: 4,
            st_pairs: vec![("aa".into(), "xx".into()), ("bb".into(), "yy".into())],
            asr_langs: vec![],
            nmt_pairs: vec![],
        }
    }
}

fn tone_utterance(base_freq: f64, word_indices: &[usize]) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let silence = (0.18 * sr) as usize;
    let tone = (0.12 * sr) as usize;
    let gap = (0.04 * sr) as usize;
    let mut samples = vec![0.0f64; silence];
    for (w, &idx) in word_indices.iter().enumerate() {
        // Each word is a two-component chord so its spectral signature spans
        // well-separated mel regions and survives narrow frequency masks.
        let f1 = base_freq + idx as f64 * 70.0;
        let f2 = 2.7 * base_freq + idx as f64 * 260.0;
        for i in 0..tone {
            let t = i as f64 / sr;
            // Short fade to avoid clicks between words.
            let ramp = (i.min(tone - i) as f64 / (0.01 * sr)).min(1.0);
            let s1 = (2.0 * std::f64::consts::PI * f1 * t).sin();
            let s2 = (2.0 * std::f64::consts::PI * f2 * t).sin();
            samples.push(0.25 * ramp * (s1 + 0.8 * s2));
        }
        if w + 1 < word_indices.len() {
            samples.extend(std::iter::repeat(0.0).take(gap));
        }
    }
    samples.extend(std::iter::repeat(0.0).take(silence));
    samples
}

fn words_of(code: &str, indices: &[usize]) -> Result<String> {
    let (_, lex) = lexicon(code)
        .ok_or_else(|| Error::Data(format!("no toy lexicon for language '{code}'")))?;
    Ok(indices.iter().map(|&i| lex[i]).collect::<Vec<_>>().join(" "))
}

fn append(path: &Path, line: &str) -> Result<()> {
    use std::io::Write;
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}

/// Generate a raw corpus directory. Layout:
/// `<lang>/wav/<id>.wav`, `<lang>/transcripts.tsv`,
/// `<lang>/translations.<tgt>.tsv`, `nmt/<src>-<tgt>.tsv`.
pub fn generate_raw(dir: &Path, opts: &SynthOptions) -> Result<usize> {
    if opts.words_min == 0 || opts.words_min > opts.words_max {
        return Err(Error::Data("words_min must satisfy 0 < min <= max".into()));
    }
    fs::create_dir_all(dir)?;
    let mut total = 0usize;

    let speech_utterance = |src: &str,
                            tgt: Option<&str>,
                            pair_tag: u64,
                            i: usize|
     -> Result<()> {
        let (base, _) = lexicon(src)
            .ok_or_else(|| Error::Data(format!("no toy lexicon for language '{src}'")))?;
        let mut r = rng::stream(opts.seed, &[tag::SYNTH, pair_tag, i as u64]);
        let n_words = r.gen_range(opts.words_min..=opts.words_max);
        let indices: Vec<usize> = (0..n_words).map(|_| r.gen_range(0..5)).collect();
        let id = match tgt {
            Some(t) => format!("{src}{t}{i:04}"),
            None => format!("{src}asr{i:04}"),
        };
        let lang_dir = dir.join(src);
        fs::create_dir_all(lang_dir.join("wav"))?;
        write_wav(
            &lang_dir.join("wav").join(format!("{id}.wav")),
            &tone_utterance(base, &indices),
            SAMPLE_RATE,
        )?;
        append(
            &lang_dir.join("transcripts.tsv"),
            &format!("{id}\t{}", words_of(src, &indices)?),
        )?;
        if let Some(t) = tgt {
            append(
                &lang_dir.join(format!("translations.{t}.tsv")),
                &format!("{id}\t{}", words_of(t, &indices)?),
            )?;
        }
        Ok(())
    };

    for (pi, (src, tgt)) in opts.st_pairs.iter().enumerate() {
        for i in 0..opts.utterances_per_pair {
            speech_utterance(src, Some(tgt), 1000 + pi as u64, i)?;
            total += 1;
        }
    }
    for (li, lang) in opts.asr_langs.iter().enumerate() {
        for i in 0..opts.utterances_per_pair {
            speech_utterance(lang, None, 2000 + li as u64, i)?;
            total += 1;
        }
    }
    for (pi, (src, tgt)) in opts.nmt_pairs.iter().enumerate() {
        let nmt_dir = dir.join("nmt");
        fs::create_dir_all(&nmt_dir)?;
        for i in 0..opts.utterances_per_pair {
            let mut r = rng::stream(opts.seed, &[tag::SYNTH, 3000 + pi as u64, i as u64]);
            let n_words = r.gen_range(opts.words_min..=opts.words_max);
            let indices: Vec<usize> = (0..n_words).map(|_| r.gen_range(0..5)).collect();
            append(
                &nmt_dir.join(format!("{src}-{tgt}.tsv")),
                &format!(
                    "{src}{tgt}n{i:04}\t{}\t{}",
                    words_of(src, &indices)?,
                    words_of(tgt, &indices)?
                ),
            )?;
            total += 1;
        }
    }
    Ok(total)
}
