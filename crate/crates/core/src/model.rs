//! The unified translation model: a Conv-Transformer speech frontend and a
//! word-embedding text frontend feeding one shared semantic encoder/decoder.
//!
//! Per-language projection matrices (identity at init) are applied before
//! the sinusoidal positional encoding: source language on the encoder side,
//! target language on the decoder side. The embedding table is shared three
//! ways: input embeddings, decoder output projection, and the CTC
//! projection over the frontend output (blank is vocabulary id 4).

use rand::Rng;

use crate::audio::FeatureMatrix;
use crate::params::ParameterStore;
use crate::rng::{self, tag, StreamRng};
use crate::scalar::Scalar;
use crate::tensor::{concat_cols, conv1d, embed, Tensor};
use crate::text::{LanguageId, LanguageSet};
use crate::{Error, Result};

/// Additive mask value for blocked attention positions.
const MASK_NEG: f64 = -1e30;

/// Minimum speech frames the frontend accepts (survives three halvings).
pub const MIN_SPEECH_FRAMES: usize = 8;

/// Architecture hyperparameters. Full scale is 512/8/2048 with 6+6 layers;
/// everything scales down proportionally for toy runs.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub conv_blocks: usize,
    pub convs_per_block: usize,
    pub transformer_per_block: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub n_mels: usize,
    pub languages: LanguageSet,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.vocab_size <= crate::text::BLANK {
            return Err(Error::Config("vocab_size must cover the five specials".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.conv_blocks == 0 || self.convs_per_block < 2 {
            return Err(Error::Config(
                "frontend needs >= 1 conv block with >= 2 convs (the second is strided)".into(),
            ));
        }
        Ok(())
    }

    /// Architecture manifest used to validate checkpoint compatibility.
    pub fn manifest(&self) -> String {
        let langs: Vec<&str> = self.languages.iter().map(|(_, c)| c).collect();
        format!(
            "d_model={}\nheads={}\nffn={}\nenc_layers={}\ndec_layers={}\nconv_blocks={}\n\
             convs_per_block={}\ntransformer_per_block={}\nvocab_size={}\nn_mels={}\nlanguages={}\n",
            self.d_model,
            self.heads,
            self.ffn,
            self.enc_layers,
            self.dec_layers,
            self.conv_blocks,
            self.convs_per_block,
            self.transformer_per_block,
            self.vocab_size,
            self.n_mels,
            langs.join(",")
        )
    }
}

/// Encoder output plus its validity mask.
pub struct EncoderStates<F: Scalar> {
    pub states: Tensor<F>,
    pub mask: Vec<bool>,
}

/// Forward-pass context: training enables dropout and requires an rng.
pub struct Forward<'a> {
    pub train: bool,
    pub rng: Option<&'a mut StreamRng>,
}

impl<'a> Forward<'a> {
    pub fn eval() -> Forward<'static> {
        Forward { train: false, rng: None }
    }

    pub fn train(rng: &'a mut StreamRng) -> Forward<'a> {
        Forward { train: true, rng: Some(rng) }
    }
}

fn dropout<F: Scalar>(t: &Tensor<F>, rate: f64, fwd: &mut Forward) -> Tensor<F> {
    if !fwd.train || rate <= 0.0 {
        return t.clone();
    }
    let rng = fwd.rng.as_mut().expect("training forward pass needs an rng");
    let keep = 1.0 - rate;
    let scale = F::from_f64(1.0 / keep);
    let mask: Vec<F> = (0..t.numel())
        .map(|_| if rng.gen::<f64>() < keep { scale } else { F::zero() })
        .collect();
    t.mul_mask(mask)
}

/// Output length of the speech frontend: one stride-2 conv per block, so
/// `t -> ceil(t/2)` applied `conv_blocks` times.
pub fn frontend_output_len(t: usize, conv_blocks: usize) -> usize {
    (0..conv_blocks).fold(t, |acc, _| acc.div_ceil(2))
}

/// Sinusoidal positional encoding table for `len` positions.
fn positional_encoding<F: Scalar>(len: usize, d: usize) -> Tensor<F> {
    let mut data = vec![F::zero(); len * d];
    for pos in 0..len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10_000f64.powf(exponent);
            data[pos * d + i] = F::from_f64(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(vec![len, d], data)
}

/// Initialize all parameters: uniform Glorot for matrices and convolutions,
/// zeros for biases, ones for norm gains, identity for language projections.
pub fn init_params<F: Scalar>(cfg: &ModelConfig, seed: u64) -> ParameterStore<F> {
    let mut init = Init::<F> {
        rng: rng::stream(seed, &[tag::INIT]),
        store: ParameterStore::new(),
        d: cfg.d_model,
    };
    let d = cfg.d_model;

    init.glorot("embed.table", vec![cfg.vocab_size, d], cfg.vocab_size, d);

    for (_, code) in cfg.languages.iter() {
        let mut eye = vec![F::zero(); d * d];
        for i in 0..d {
            eye[i * d + i] = F::one();
        }
        init.store.insert(&format!("lang_proj.{code}"), Tensor::param(vec![d, d], eye));
    }

    for b in 0..cfg.conv_blocks {
        for c in 0..cfg.convs_per_block {
            let c_in = if b == 0 && c == 0 { cfg.n_mels } else { d };
            init.glorot(&format!("frontend.b{b}.conv{c}.w"), vec![d, c_in, 3], c_in * 3, d * 3);
            init.zeros(&format!("frontend.b{b}.conv{c}.b"), d);
        }
        for l in 0..cfg.transformer_per_block {
            let p = format!("frontend.b{b}.tf{l}");
            init.attn(&format!("{p}.self"));
            init.norm(&format!("{p}.ln1"));
            init.ffn(&format!("{p}.ffn"), cfg.ffn);
            init.norm(&format!("{p}.ln2"));
        }
    }
    for l in 0..cfg.enc_layers {
        let p = format!("enc.l{l}");
        init.attn(&format!("{p}.self"));
        init.norm(&format!("{p}.ln1"));
        init.ffn(&format!("{p}.ffn"), cfg.ffn);
        init.norm(&format!("{p}.ln2"));
    }
    for l in 0..cfg.dec_layers {
        let p = format!("dec.l{l}");
        init.attn(&format!("{p}.self"));
        init.norm(&format!("{p}.ln1"));
        init.attn(&format!("{p}.cross"));
        init.norm(&format!("{p}.ln2"));
        init.ffn(&format!("{p}.ffn"), cfg.ffn);
        init.norm(&format!("{p}.ln3"));
    }
    init.store
}

struct Init<F: Scalar> {
    rng: StreamRng,
    store: ParameterStore<F>,
    d: usize,
}

impl<F: Scalar> Init<F> {
    fn glorot(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, fan_out: usize) {
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<F> = (0..n).map(|_| F::from_f64(self.rng.gen_range(-r..r))).collect();
        self.store.insert(name, Tensor::param(shape, data));
    }

    fn zeros(&mut self, name: &str, n: usize) {
        self.store.insert(name, Tensor::param(vec![n], vec![F::zero(); n]));
    }

    fn norm(&mut self, prefix: &str) {
        let d = self.d;
        self.store.insert(&format!("{prefix}.g"), Tensor::param(vec![d], vec![F::one(); d]));
        self.store.insert(&format!("{prefix}.b"), Tensor::param(vec![d], vec![F::zero(); d]));
    }

    fn attn(&mut self, prefix: &str) {
        let d = self.d;
        for part in ["wq", "wk", "wv", "wo"] {
            self.glorot(&format!("{prefix}.{part}"), vec![d, d], d, d);
        }
        for part in ["bq", "bk", "bv", "bo"] {
            self.zeros(&format!("{prefix}.{part}"), d);
        }
    }

    fn ffn(&mut self, prefix: &str, ffn: usize) {
        let d = self.d;
        self.glorot(&format!("{prefix}.w1"), vec![d, ffn], d, ffn);
        self.zeros(&format!("{prefix}.b1"), ffn);
        self.glorot(&format!("{prefix}.w2"), vec![ffn, d], ffn, d);
        self.zeros(&format!("{prefix}.b2"), d);
    }
}

/// Read-only view tying a config to a parameter store for forward passes.
pub struct Model<'a, F: Scalar> {
    pub cfg: &'a ModelConfig,
    pub store: &'a ParameterStore<F>,
}

impl<'a, F: Scalar> Model<'a, F> {
    pub fn new(cfg: &'a ModelConfig, store: &'a ParameterStore<F>) -> Self {
        Model { cfg, store }
    }

    fn p(&self, name: &str) -> &Tensor<F> {
        self.store.get(name)
    }

    /// Multi-head attention with additive masking; post-norm layers wrap it.
    fn attention(
        &self,
        prefix: &str,
        queries: &Tensor<F>,
        keys_values: &Tensor<F>,
        key_mask: &[bool],
        causal: bool,
    ) -> Result<Tensor<F>> {
        let d = self.cfg.d_model;
        let heads = self.cfg.heads;
        let dh = d / heads;
        let lq = queries.shape()[0];
        let lk = keys_values.shape()[0];
        debug_assert_eq!(key_mask.len(), lk);

        let q = queries.matmul(self.p(&format!("{prefix}.wq")))?.add_bias(self.p(&format!("{prefix}.bq")));
        let k = keys_values.matmul(self.p(&format!("{prefix}.wk")))?.add_bias(self.p(&format!("{prefix}.bk")));
        let v = keys_values.matmul(self.p(&format!("{prefix}.wv")))?.add_bias(self.p(&format!("{prefix}.bv")));

        // One additive mask shared by every head.
        let neg = F::from_f64(MASK_NEG);
        let mut mask_data = vec![F::zero(); lq * lk];
        for i in 0..lq {
            for j in 0..lk {
                if !key_mask[j] || (causal && j > i) {
                    mask_data[i * lk + j] = neg;
                }
            }
        }
        let mask = Tensor::new(vec![lq, lk], mask_data);
        let inv_sqrt_dh = F::from_f64(1.0 / (dh as f64).sqrt());

        let mut ctx = Vec::with_capacity(heads);
        for h in 0..heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let scores = q
                .slice_cols(a, b)
                .matmul_nt(&k.slice_cols(a, b))?
                .scale(inv_sqrt_dh)
                .add(&mask);
            let attn = scores.softmax_rows();
            ctx.push(attn.matmul(&v.slice_cols(a, b))?);
        }
        let merged = concat_cols(&ctx);
        Ok(merged
            .matmul(self.p(&format!("{prefix}.wo")))?
            .add_bias(self.p(&format!("{prefix}.bo"))))
    }

    fn ffn(&self, prefix: &str, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(x
            .matmul(self.p(&format!("{prefix}.w1")))?
            .add_bias(self.p(&format!("{prefix}.b1")))
            .relu()
            .matmul(self.p(&format!("{prefix}.w2")))?
            .add_bias(self.p(&format!("{prefix}.b2"))))
    }

    fn norm(&self, prefix: &str, x: &Tensor<F>) -> Tensor<F> {
        x.layer_norm(self.p(&format!("{prefix}.g")), self.p(&format!("{prefix}.b")))
    }

    /// One post-norm self-attention encoder layer.
    fn encoder_layer(
        &self,
        prefix: &str,
        x: &Tensor<F>,
        mask: &[bool],
        fwd: &mut Forward,
    ) -> Result<Tensor<F>> {
        let a = self.attention(&format!("{prefix}.self"), x, x, mask, false)?;
        let x = self.norm(&format!("{prefix}.ln1"), &x.add(&dropout(&a, self.cfg.dropout, fwd)));
        let f = self.ffn(&format!("{prefix}.ffn"), &x)?;
        Ok(self.norm(&format!("{prefix}.ln2"), &x.add(&dropout(&f, self.cfg.dropout, fwd))))
    }

    /// Conv-Transformer speech frontend. Each block runs its convolutions
    /// (stride 2 in the second, 1 elsewhere) then its transformer layers;
    /// output length is `frontend_output_len(t)` with dimension `d_model`.
    pub fn frontend(&self, feats: &FeatureMatrix<F>, fwd: &mut Forward) -> Result<Tensor<F>> {
        let t = feats.num_frames();
        if t < MIN_SPEECH_FRAMES {
            return Err(Error::Model(format!(
                "speech input of {t} frames is shorter than the {MIN_SPEECH_FRAMES}-frame floor"
            )));
        }
        if feats.num_features() != self.cfg.n_mels {
            return Err(Error::Model(format!(
                "expected {} mel features, got {}",
                self.cfg.n_mels,
                feats.num_features()
            )));
        }
        let mut x = Tensor::new(vec![t, self.cfg.n_mels], feats.data().to_vec());
        for b in 0..self.cfg.conv_blocks {
            for c in 0..self.cfg.convs_per_block {
                let stride = if c == 1 { 2 } else { 1 };
                x = conv1d(
                    &x,
                    self.p(&format!("frontend.b{b}.conv{c}.w")),
                    self.p(&format!("frontend.b{b}.conv{c}.b")),
                    stride,
                )?
                .relu();
            }
            let mask = vec![true; x.shape()[0]];
            for l in 0..self.cfg.transformer_per_block {
                x = self.encoder_layer(&format!("frontend.b{b}.tf{l}"), &x, &mask, fwd)?;
            }
        }
        Ok(x)
    }

    /// Token embedding lookup scaled by sqrt(d_model). The table is the
    /// decoder output projection and CTC projection too.
    pub fn embed_text(&self, ids: &[usize]) -> Result<Tensor<F>> {
        let scale = F::from_f64((self.cfg.d_model as f64).sqrt());
        embed(self.p("embed.table"), ids, scale)
    }

    /// Apply the per-language d x d projection to every position.
    pub fn language_project(&self, h: &Tensor<F>, lang: LanguageId) -> Result<Tensor<F>> {
        if lang.0 >= self.cfg.languages.len() {
            return Err(Error::Model(format!("unregistered language id {}", lang.0)));
        }
        let code = self.cfg.languages.code(lang);
        h.matmul(self.p(&format!("lang_proj.{code}")))
    }

    fn project_and_position(
        &self,
        h: &Tensor<F>,
        lang: LanguageId,
        fwd: &mut Forward,
    ) -> Result<Tensor<F>> {
        let projected = self.language_project(h, lang)?;
        let with_pos = projected.add(&positional_encoding(projected.shape()[0], self.cfg.d_model));
        Ok(dropout(&with_pos, self.cfg.dropout, fwd))
    }

    /// Shared semantic encoder over an already-embedded input.
    pub fn encode(&self, h: &Tensor<F>, mask: &[bool], fwd: &mut Forward) -> Result<EncoderStates<F>> {
        if mask.len() != h.shape()[0] {
            return Err(Error::Model(format!(
                "mask length {} does not match sequence length {}",
                mask.len(),
                h.shape()[0]
            )));
        }
        let mut x = h.clone();
        for l in 0..self.cfg.enc_layers {
            x = self.encoder_layer(&format!("enc.l{l}"), &x, mask, fwd)?;
        }
        Ok(EncoderStates { states: x, mask: mask.to_vec() })
    }

    /// Speech path: frontend, source-language projection, positions, shared
    /// encoder. Also returns the frontend output for the CTC head.
    pub fn encode_speech(
        &self,
        feats: &FeatureMatrix<F>,
        src_lang: LanguageId,
        fwd: &mut Forward,
    ) -> Result<(EncoderStates<F>, Tensor<F>)> {
        let frontend_out = self.frontend(feats, fwd)?;
        let h = self.project_and_position(&frontend_out, src_lang, fwd)?;
        let mask = vec![true; h.shape()[0]];
        Ok((self.encode(&h, &mask, fwd)?, frontend_out))
    }

    /// Text path: embedding, source-language projection, positions, shared
    /// encoder.
    pub fn encode_text(
        &self,
        ids: &[usize],
        src_lang: LanguageId,
        fwd: &mut Forward,
    ) -> Result<EncoderStates<F>> {
        if ids.is_empty() {
            return Err(Error::Model("cannot encode an empty token sequence".into()));
        }
        let h = self.embed_text(ids)?;
        let h = self.project_and_position(&h, src_lang, fwd)?;
        let mask = vec![true; ids.len()];
        self.encode(&h, &mask, fwd)
    }

    /// Teacher-forced decoder pass: log-probabilities over the vocabulary at
    /// every position of `tgt_input` (causal self-attention, cross-attention
    /// over the encoder states, shared-table output projection).
    pub fn decode_logprobs(
        &self,
        enc: &EncoderStates<F>,
        tgt_input: &[usize],
        tgt_lang: LanguageId,
        fwd: &mut Forward,
    ) -> Result<Tensor<F>> {
        if tgt_input.is_empty() {
            return Err(Error::Model("decoder input must start with bos".into()));
        }
        let h = self.embed_text(tgt_input)?;
        let mut x = self.project_and_position(&h, tgt_lang, fwd)?;
        let self_mask = vec![true; tgt_input.len()];
        for l in 0..self.cfg.dec_layers {
            let p = format!("dec.l{l}");
            let a = self.attention(&format!("{p}.self"), &x, &x, &self_mask, true)?;
            x = self.norm(&format!("{p}.ln1"), &x.add(&dropout(&a, self.cfg.dropout, fwd)));
            let c = self.attention(&format!("{p}.cross"), &x, &enc.states, &enc.mask, false)?;
            x = self.norm(&format!("{p}.ln2"), &x.add(&dropout(&c, self.cfg.dropout, fwd)));
            let f = self.ffn(&format!("{p}.ffn"), &x)?;
            x = self.norm(&format!("{p}.ln3"), &x.add(&dropout(&f, self.cfg.dropout, fwd)));
        }
        Ok(x.matmul_nt(self.p("embed.table"))?.log_softmax_rows())
    }

    /// Log-probability row for the next token after `prefix` (evaluation
    /// mode; `prefix` must start with bos).
    pub fn decode_step(
        &self,
        enc: &EncoderStates<F>,
        prefix: &[usize],
        tgt_lang: LanguageId,
    ) -> Result<Vec<F>> {
        if prefix.first() != Some(&crate::text::BOS) {
            return Err(Error::Model("decode prefix must start with bos".into()));
        }
        let lp = self.decode_logprobs(enc, prefix, tgt_lang, &mut Forward::eval())?;
        let v = self.cfg.vocab_size;
        let last = prefix.len() - 1;
        Ok(lp.data()[last * v..(last + 1) * v].to_vec())
    }

    /// CTC head: log-softmax over the shared vocabulary at every frontend
    /// frame, projecting with the shared embedding table.
    pub fn ctc_head(&self, frontend_out: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(frontend_out.matmul_nt(self.p("embed.table"))?.log_softmax_rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            heads: 2,
            ffn: 24,
            enc_layers: 1,
            dec_layers: 1,
            conv_blocks: 3,
            convs_per_block: 3,
            transformer_per_block: 1,
            dropout: 0.0,
            vocab_size: 12,
            n_mels: 8,
            languages: LanguageSet::new(&["aa", "xx"]).unwrap(),
        }
    }

    fn random_features(t: usize, f: usize, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = rng::stream(seed, &[99]);
        FeatureMatrix::from_rows(t, f, (0..t * f).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn frontend_length_law_examples() {
        assert_eq!(frontend_output_len(98, 3), 13); // 98 -> 49 -> 25 -> 13
        assert_eq!(frontend_output_len(8, 3), 1);
        let cfg = toy_config();
        let store = init_params::<f64>(&cfg, 0);
        let model = Model::new(&cfg, &store);
        let out = model
            .frontend(&random_features(98, 8, 1), &mut Forward::eval())
            .unwrap();
        assert_eq!(out.shape(), [13, 16]);
        assert!(!out.has_non_finite());
    }

    #[test]
    fn frontend_rejects_short_input() {
        let cfg = toy_config();
        let store = init_params::<f64>(&cfg, 0);
        let model = Model::new(&cfg, &store);
        assert!(model
            .frontend(&random_features(7, 8, 1), &mut Forward::eval())
            .is_err());
    }

    #[test]
    fn identity_language_projection_is_identity() {
        let cfg = toy_config();
        let store = init_params::<f64>(&cfg, 0);
        let model = Model::new(&cfg, &store);
        let h = Tensor::new(vec![3, 16], (0..48).map(|i| i as f64 * 0.1).collect());
        let out = model.language_project(&h, cfg.languages.get("aa").unwrap()).unwrap();
        assert_eq!(out.data(), h.data());
    }

    #[test]
    fn unregistered_language_rejected() {
        let cfg = toy_config();
        let store = init_params::<f64>(&cfg, 0);
        let model = Model::new(&cfg, &store);
        let h = Tensor::zeros(vec![1, 16]);
        assert!(model.language_project(&h, LanguageId(5)).is_err());
    }

    #[test]
    fn embed_empty_sequence() {
        let cfg = toy_config();
        let store = init_params::<f64>(&cfg, 0);
        let model = Model::new(&cfg, &store);
        let e = model.embed_text(&[]).unwrap();
        assert_eq!(e.shape(), [0, 16]);
        assert!(model.embed_text(&[12]).is_err());
    }

    #[test]
    fn decode_rows_normalize() {
        let cfg = toy_config();
        let store = init_params::<f64>(&cfg, 0);
        let model = Model::new(&cfg, &store);
        let enc = model
            .encode_text(&[5, 6, 7], cfg.languages.get("aa").unwrap(), &mut Forward::eval())
            .unwrap();
        let row = model
            .decode_step(&enc, &[crate::text::BOS], cfg.languages.get("xx").unwrap())
            .unwrap();
        let total: f64 = row.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ctc_head_shape_and_normalization() {
        let cfg = toy_config();
        let store = init_params::<f64>(&cfg, 0);
        let model = Model::new(&cfg, &store);
        let fo = model
            .frontend(&random_features(40, 8, 3), &mut Forward::eval())
            .unwrap();
        let lp = model.ctc_head(&fo).unwrap();
        assert_eq!(lp.shape(), [frontend_output_len(40, 3), 12]);
        for i in 0..lp.shape()[0] {
            let s: f64 = lp.data()[i * 12..(i + 1) * 12].iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
