//! Forward graph construction: prompt overlay, patch encoder, query-based
//! local features, projector MLPs, fusion, and the causal decoder, plus
//! greedy generation.

use crate::overlay::{make_mask, BinaryMask};
use crate::raster::{preprocess, Raster, Space};
use crate::{Error, Result};

use super::params::{init_params, GroupId, ModelParams};
use super::tape::{Id, Tape};
use super::vocab::{Vocab, BOS, EOS};
use super::{Fusion, ModelConfig};

const NEG_INF: f64 = -1e30;

/// A plain rows x dim feature matrix returned by the public encode/project
/// operations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// The grounding model: config, vocabulary, parameters, and the precomputed
/// prompt mask and patch index map.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub vocab: Vocab,
    pub params: ModelParams,
    mask: BinaryMask,
    patch_index: Vec<usize>,
}

/// One recorded forward pass; keeps the leaf ids so gradients can be pulled
/// back out into parameter-shaped buffers.
pub struct ForwardPass {
    pub tape: Tape,
    /// (group, tensor, node) for every parameter leaf used by the graph.
    leaves: Vec<(usize, usize, Id)>,
    /// Logits over the text rows, (text_len, vocab).
    pub logits: Id,
    pub loss: Option<Id>,
}

impl ForwardPass {
    /// Adds this pass' parameter gradients (scaled) into `sink`.
    pub fn accumulate_grads(&self, sink: &mut [Vec<Vec<f64>>], scale: f64) {
        for &(g, t, id) in &self.leaves {
            for (dst, src) in sink[g][t].iter_mut().zip(self.tape.grad(id)) {
                *dst += scale * src;
            }
        }
    }

    pub fn loss_value(&self) -> f64 {
        self.loss.map(|l| self.tape.scalar(l)).unwrap_or(0.0)
    }
}

/// Binds parameter tensors to tape leaves on demand, one leaf per tensor.
struct Binder<'p> {
    params: &'p ModelParams,
    bound: Vec<Vec<Option<Id>>>,
}

impl<'p> Binder<'p> {
    fn new(params: &'p ModelParams) -> Self {
        let bound = params
            .groups
            .iter()
            .map(|g| vec![None; g.tensors.len()])
            .collect();
        Binder { params, bound }
    }

    fn leaf(&mut self, tape: &mut Tape, group: GroupId, name: &str) -> Id {
        let gi = group as usize;
        let ti = self.params.groups[gi].tensor_index(name);
        if let Some(id) = self.bound[gi][ti] {
            return id;
        }
        let t = &self.params.groups[gi].tensors[ti];
        let id = tape.input(t.rows, t.cols, t.data.clone());
        self.bound[gi][ti] = Some(id);
        id
    }

    fn leaves(&self) -> Vec<(usize, usize, Id)> {
        let mut out = Vec::new();
        for (g, group) in self.bound.iter().enumerate() {
            for (t, id) in group.iter().enumerate() {
                if let Some(id) = id {
                    out.push((g, t, *id));
                }
            }
        }
        out
    }
}

struct AttnIds {
    wq: Id,
    wk: Id,
    wv: Id,
    wo: Id,
    bq: Id,
    bk: Id,
    bv: Id,
    bo: Id,
}

fn mha(tape: &mut Tape, q_in: Id, kv_in: Id, w: &AttnIds, heads: usize, mask: Option<Id>) -> Id {
    let d = tape.node(q_in).cols;
    let dk = d / heads;
    let q0 = tape.matmul(q_in, w.wq);
    let q = tape.add_bias(q0, w.bq);
    let k0 = tape.matmul(kv_in, w.wk);
    let k = tape.add_bias(k0, w.bk);
    let v0 = tape.matmul(kv_in, w.wv);
    let v = tape.add_bias(v0, w.bv);
    let mut heads_out = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dk, dk);
        let kh = tape.slice_cols(k, h * dk, dk);
        let vh = tape.slice_cols(v, h * dk, dk);
        let kt = tape.transpose(kh);
        let raw = tape.matmul(qh, kt);
        let scores = tape.scale(raw, 1.0 / (dk as f64).sqrt());
        let masked = match mask {
            Some(m) => tape.add(scores, m),
            None => scores,
        };
        let probs = tape.softmax_rows(masked);
        heads_out.push(tape.matmul(probs, vh));
    }
    let cat = tape.concat_cols(&heads_out);
    let out = tape.matmul(cat, w.wo);
    tape.add_bias(out, w.bo)
}

fn attn_ids(tape: &mut Tape, b: &mut Binder, group: GroupId, prefix: &str) -> AttnIds {
    AttnIds {
        wq: b.leaf(tape, group, &format!("{prefix}.wq")),
        wk: b.leaf(tape, group, &format!("{prefix}.wk")),
        wv: b.leaf(tape, group, &format!("{prefix}.wv")),
        wo: b.leaf(tape, group, &format!("{prefix}.wo")),
        bq: b.leaf(tape, group, &format!("{prefix}.bq")),
        bk: b.leaf(tape, group, &format!("{prefix}.bk")),
        bv: b.leaf(tape, group, &format!("{prefix}.bv")),
        bo: b.leaf(tape, group, &format!("{prefix}.bo")),
    }
}

/// Pre-norm transformer block: x += attn(ln(x)); x += mlp(ln(x)).
fn self_attn_block(
    tape: &mut Tape,
    b: &mut Binder,
    group: GroupId,
    prefix: &str,
    x: Id,
    heads: usize,
    mask: Option<Id>,
) -> Id {
    let ln1_g = b.leaf(tape, group, &format!("{prefix}.ln1_g"));
    let ln1_b = b.leaf(tape, group, &format!("{prefix}.ln1_b"));
    let h = tape.layer_norm(x, ln1_g, ln1_b);
    let w = attn_ids(tape, b, group, prefix);
    let attn = mha(tape, h, h, &w, heads, mask);
    let x = tape.add(x, attn);
    ffn_block(tape, b, group, prefix, x)
}

fn ffn_block(tape: &mut Tape, b: &mut Binder, group: GroupId, prefix: &str, x: Id) -> Id {
    let ln2_g = b.leaf(tape, group, &format!("{prefix}.ln2_g"));
    let ln2_b = b.leaf(tape, group, &format!("{prefix}.ln2_b"));
    let h = tape.layer_norm(x, ln2_g, ln2_b);
    let w1 = b.leaf(tape, group, &format!("{prefix}.w1"));
    let b1 = b.leaf(tape, group, &format!("{prefix}.b1"));
    let w2 = b.leaf(tape, group, &format!("{prefix}.w2"));
    let b2 = b.leaf(tape, group, &format!("{prefix}.b2"));
    let a0 = tape.matmul(h, w1);
    let a1 = tape.add_bias(a0, b1);
    let a2 = tape.gelu(a1);
    let a3 = tape.matmul(a2, w2);
    let ffn = tape.add_bias(a3, b2);
    tape.add(x, ffn)
}

/// Two affine layers with a nonlinearity between.
fn projector(tape: &mut Tape, b: &mut Binder, group: GroupId, x: Id) -> Id {
    let w1 = b.leaf(tape, group, "w1");
    let b1 = b.leaf(tape, group, "b1");
    let w2 = b.leaf(tape, group, "w2");
    let b2 = b.leaf(tape, group, "b2");
    let a0 = tape.matmul(x, w1);
    let a1 = tape.add_bias(a0, b1);
    let a2 = tape.gelu(a1);
    let a3 = tape.matmul(a2, w2);
    tape.add_bias(a3, b2)
}

impl Model {
    pub fn new(cfg: ModelConfig, vocab: Vocab) -> Result<Self> {
        cfg.validate()?;
        if vocab.is_empty() {
            return Err(Error::contract("empty vocabulary".to_string()));
        }
        let params = init_params(&cfg, vocab.len())?;
        Self::from_parts(cfg, vocab, params)
    }

    pub fn from_parts(cfg: ModelConfig, vocab: Vocab, params: ModelParams) -> Result<Self> {
        cfg.validate()?;
        let mask = make_mask(cfg.image_side, cfg.overlay.mask_width as usize)?;
        let patch_index = patch_index(cfg.image_side, cfg.patch);
        Ok(Model {
            cfg,
            vocab,
            params,
            mask,
            patch_index,
        })
    }

    pub fn prompt_mask(&self) -> &BinaryMask {
        &self.mask
    }

    /// Preprocesses a [0,1] image to the model's standardized input.
    pub fn preprocess_input(&self, image: &Raster) -> Result<Raster> {
        if image.space != Space::Pixel01 {
            return Err(Error::contract(
                "model input must be a raster in pixel [0,1] space".to_string(),
            ));
        }
        preprocess(image, &self.cfg.preprocess_config())
    }

    /// Builds the full forward graph. `answer_ids` teacher-forces a loss;
    /// pass `None` for generation. `ablate_local` zeroes the local feature
    /// rows and blocks decoder attention to them (a component-ablation
    /// equivalence probe).
    pub fn forward(
        &self,
        image: &Raster,
        query_ids: &[u32],
        answer_ids: Option<&[u32]>,
        ablate_local: bool,
    ) -> Result<ForwardPass> {
        let cfg = &self.cfg;
        let x = self.preprocess_input(image)?;
        if x.height != cfg.image_side {
            return Err(Error::contract("preprocess produced a wrong side".to_string()));
        }

        let mut tape = Tape::new();
        let mut binder = Binder::new(&self.params);
        let npx = cfg.image_side * cfg.image_side;

        // Prompt overlay. Skipped entirely when inactive so a prompt-free
        // model and an alpha=1 model build identical graphs.
        let x_gp = if cfg.global_active() {
            let alpha = cfg.overlay.alpha;
            let delta = binder.leaf(&mut tape, GroupId::GlobalVpp, "values");
            let mut mask_data = Vec::with_capacity(npx * 3);
            for px in 0..npx {
                let m = self.mask.bits[px] as f64;
                mask_data.extend_from_slice(&[m, m, m]);
            }
            let mask_c = tape.input(npx, 3, mask_data);
            let masked = tape.mul(delta, mask_c);
            let prompt_part = tape.scale(masked, 1.0 - alpha);
            let scaled_x: Vec<f64> = x.data.iter().map(|v| alpha * v).collect();
            let xc = tape.input(npx, 3, scaled_x);
            tape.add(xc, prompt_part)
        } else {
            tape.input(npx, 3, x.data.clone())
        };

        // Patch encoder over the (possibly prompted) image.
        let patches = tape.gather(
            x_gp,
            self.patch_index.clone(),
            cfg.n_patches(),
            cfg.patch * cfg.patch * 3,
        );
        let f_gp = self.encode_from_patches(&mut tape, &mut binder, patches);
        let f_gp_p = projector(&mut tape, &mut binder, GroupId::ProjectorG, f_gp);

        // Local path: queries cross-attend to a lightweight patch trunk.
        let f_lp_p = if cfg.use_local {
            let f_lp = self.local_from_image(&mut tape, &mut binder, x_gp);
            Some(projector(&mut tape, &mut binder, GroupId::ProjectorL, f_lp))
        } else {
            None
        };

        // Fusion.
        let (fused, ablated_rows) = match f_lp_p {
            None => (f_gp_p, None),
            Some(f_lp_p) => match cfg.fusion {
                Fusion::Concat => {
                    if ablate_local {
                        let rows = tape.node(f_lp_p).rows;
                        let zeros = tape.input(rows, cfg.dim, vec![0.0; rows * cfg.dim]);
                        let n_gp = tape.node(f_gp_p).rows;
                        let fused = tape.concat_rows(&[f_gp_p, zeros]);
                        (fused, Some(n_gp..n_gp + rows))
                    } else {
                        (tape.concat_rows(&[f_gp_p, f_lp_p]), None)
                    }
                }
                Fusion::CrossAttnLpQ => {
                    let w = fusion_attn_ids(&mut tape, &mut binder);
                    let attn = mha(&mut tape, f_lp_p, f_gp_p, &w, cfg.heads, None);
                    (tape.add(f_lp_p, attn), None)
                }
                Fusion::CrossAttnGpQ => {
                    let w = fusion_attn_ids(&mut tape, &mut binder);
                    let attn = mha(&mut tape, f_gp_p, f_lp_p, &w, cfg.heads, None);
                    (tape.add(f_gp_p, attn), None)
                }
            },
        };

        // Text embedding: tokens plus learned text-relative positions.
        // Visual rows carry no decoder positions, so removing or ablating
        // them never shifts text positions.
        let mut full: Vec<u32> = Vec::with_capacity(2 + query_ids.len());
        full.push(BOS);
        full.extend_from_slice(query_ids);
        let (text_ids, targets): (Vec<u32>, Option<Vec<(usize, usize)>>) = match answer_ids {
            Some(ans) => {
                full.extend_from_slice(ans);
                full.push(EOS);
                let input = full[..full.len() - 1].to_vec();
                let q_len = query_ids.len();
                let targets: Vec<(usize, usize)> = (q_len..q_len + ans.len() + 1)
                    .map(|t| (t, full[t + 1] as usize))
                    .collect();
                (input, if ans.is_empty() { None } else { Some(targets) })
            }
            None => (full, None),
        };
        let text_len = text_ids.len();
        if text_len > cfg.max_text_len {
            return Err(Error::contract(format!(
                "text sequence of {text_len} exceeds the decoder capacity {}",
                cfg.max_text_len
            )));
        }

        let tok = binder.leaf(&mut tape, GroupId::Decoder, "tok");
        let pos = binder.leaf(&mut tape, GroupId::Decoder, "pos");
        let tok_rows: Vec<usize> = text_ids.iter().map(|&t| t as usize).collect();
        let emb = tape.gather_rows(tok, tok_rows);
        let pos_rows: Vec<usize> = (0..text_len).collect();
        let pemb = tape.gather_rows(pos, pos_rows);
        let text = tape.add(emb, pemb);

        let n_vis = tape.node(fused).rows;
        let seq = tape.concat_rows(&[fused, text]);
        let s = n_vis + text_len;

        // Causal mask over the whole sequence; optionally shuts ablated
        // visual rows out of every other row's attention.
        let mut mask_data = vec![0.0; s * s];
        for i in 0..s {
            for j in 0..s {
                let mut blocked = j > i;
                if let Some(range) = &ablated_rows {
                    if range.contains(&j) && i != j {
                        blocked = true;
                    }
                }
                if blocked {
                    mask_data[i * s + j] = NEG_INF;
                }
            }
        }
        let causal = tape.input(s, s, mask_data);

        let mut xseq = seq;
        for l in 0..cfg.decoder_layers {
            xseq = self_attn_block(
                &mut tape,
                &mut binder,
                GroupId::Decoder,
                &format!("d{l}"),
                xseq,
                cfg.heads,
                Some(causal),
            );
        }
        let lnf_g = binder.leaf(&mut tape, GroupId::Decoder, "lnf_g");
        let lnf_b = binder.leaf(&mut tape, GroupId::Decoder, "lnf_b");
        let final_seq = tape.layer_norm(xseq, lnf_g, lnf_b);
        let text_rows = tape.slice_rows(final_seq, n_vis, text_len);
        let out_w = binder.leaf(&mut tape, GroupId::Decoder, "out_w");
        let out_b = binder.leaf(&mut tape, GroupId::Decoder, "out_b");
        let raw_logits = tape.matmul(text_rows, out_w);
        let logits = tape.add_bias(raw_logits, out_b);

        let loss = targets.map(|t| tape.mean_nll(logits, t));

        Ok(ForwardPass {
            leaves: binder.leaves(),
            tape,
            logits,
            loss,
        })
    }

    fn encode_from_patches(&self, tape: &mut Tape, binder: &mut Binder, patches: Id) -> Id {
        let cfg = &self.cfg;
        let w = binder.leaf(tape, GroupId::Encoder, "patch_w");
        let b = binder.leaf(tape, GroupId::Encoder, "patch_b");
        let e0 = tape.matmul(patches, w);
        let embedded = tape.add_bias(e0, b);
        let grid = cfg.grid();
        let row_idx: Vec<usize> = (0..cfg.n_patches()).map(|p| p / grid).collect();
        let col_idx: Vec<usize> = (0..cfg.n_patches()).map(|p| p % grid).collect();
        let pr = binder.leaf(tape, GroupId::Encoder, "pos_row");
        let pc = binder.leaf(tape, GroupId::Encoder, "pos_col");
        let pre = tape.gather_rows(pr, row_idx);
        let pce = tape.gather_rows(pc, col_idx);
        let pos = tape.add(pre, pce);
        let mut x = tape.add(embedded, pos);
        for l in 0..cfg.encoder_layers {
            x = self_attn_block(
                tape,
                binder,
                GroupId::Encoder,
                &format!("e{l}"),
                x,
                cfg.heads,
                None,
            );
        }
        let g = binder.leaf(tape, GroupId::Encoder, "lnf_g");
        let bb = binder.leaf(tape, GroupId::Encoder, "lnf_b");
        tape.layer_norm(x, g, bb)
    }

    /// Query embeddings cross-attend to a patch trunk over the prompted
    /// image; one output row per query, no query-to-query mixing.
    fn local_from_image(&self, tape: &mut Tape, binder: &mut Binder, x_gp: Id) -> Id {
        let cfg = &self.cfg;
        let patches = tape.gather(
            x_gp,
            self.patch_index.clone(),
            cfg.n_patches(),
            cfg.patch * cfg.patch * 3,
        );
        let w = binder.leaf(tape, GroupId::LocalVpp, "trunk_w");
        let b = binder.leaf(tape, GroupId::LocalVpp, "trunk_b");
        let t0 = tape.matmul(patches, w);
        let embedded = tape.add_bias(t0, b);
        let grid = cfg.grid();
        let row_idx: Vec<usize> = (0..cfg.n_patches()).map(|p| p / grid).collect();
        let col_idx: Vec<usize> = (0..cfg.n_patches()).map(|p| p % grid).collect();
        let pr = binder.leaf(tape, GroupId::LocalVpp, "tpos_row");
        let pc = binder.leaf(tape, GroupId::LocalVpp, "tpos_col");
        let pre = tape.gather_rows(pr, row_idx);
        let pce = tape.gather_rows(pc, col_idx);
        let pos = tape.add(pre, pce);
        let trunk = tape.add(embedded, pos);

        let mut q = binder.leaf(tape, GroupId::LocalVpp, "queries");
        for l in 0..cfg.decoder_layers {
            let prefix = format!("l{l}");
            let ln1_g = binder.leaf(tape, GroupId::LocalVpp, &format!("{prefix}.ln1_g"));
            let ln1_b = binder.leaf(tape, GroupId::LocalVpp, &format!("{prefix}.ln1_b"));
            let qn = tape.layer_norm(q, ln1_g, ln1_b);
            let lnkv_g = binder.leaf(tape, GroupId::LocalVpp, &format!("{prefix}.lnkv_g"));
            let lnkv_b = binder.leaf(tape, GroupId::LocalVpp, &format!("{prefix}.lnkv_b"));
            let kvn = tape.layer_norm(trunk, lnkv_g, lnkv_b);
            let w = attn_ids(tape, binder, GroupId::LocalVpp, &prefix);
            let attn = mha(tape, qn, kvn, &w, cfg.heads, None);
            q = tape.add(q, attn);
            q = ffn_block(tape, binder, GroupId::LocalVpp, &prefix, q);
        }
        let g = binder.leaf(tape, GroupId::LocalVpp, "lnf_g");
        let bb = binder.leaf(tape, GroupId::LocalVpp, "lnf_b");
        tape.layer_norm(q, g, bb)
    }

    /// Teacher-forced mean NLL over the answer positions.
    pub fn loss(&self, image: &Raster, query_ids: &[u32], answer_ids: &[u32]) -> Result<f64> {
        let fp = self.forward(image, query_ids, Some(answer_ids), false)?;
        Ok(fp.loss_value())
    }

    /// Greedy decoding until EOS or `max_len` generated tokens.
    pub fn generate(&self, image: &Raster, query_ids: &[u32], max_len: usize) -> Result<Vec<u32>> {
        let mut generated: Vec<u32> = Vec::new();
        for _ in 0..max_len {
            let mut text: Vec<u32> = Vec::with_capacity(query_ids.len() + generated.len());
            text.extend_from_slice(query_ids);
            text.extend_from_slice(&generated);
            let fp = self.forward(image, &text, None, false)?;
            let node = fp.tape.node(fp.logits);
            let last = &node.data[(node.rows - 1) * node.cols..];
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for (i, &v) in last.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            if best as u32 == EOS {
                break;
            }
            generated.push(best as u32);
        }
        Ok(generated)
    }

    pub fn generate_text(&self, image: &Raster, query: &str, max_len: usize) -> Result<String> {
        let q = self.vocab.tokenize(query);
        let ids = self.generate(image, &q, max_len)?;
        Ok(self.vocab.detokenize(&ids))
    }

    /// Patch embeddings before positional terms; rows follow patch order.
    pub fn patch_embeddings(&self, image: &Raster) -> Result<FeatureMap> {
        let x = self.preprocess_input(image)?;
        let mut tape = Tape::new();
        let mut binder = Binder::new(&self.params);
        let npx = self.cfg.image_side * self.cfg.image_side;
        let xc = tape.input(npx, 3, x.data);
        let patches = tape.gather(
            xc,
            self.patch_index.clone(),
            self.cfg.n_patches(),
            self.cfg.patch * self.cfg.patch * 3,
        );
        let w = binder.leaf(&mut tape, GroupId::Encoder, "patch_w");
        let b = binder.leaf(&mut tape, GroupId::Encoder, "patch_b");
        let e0 = tape.matmul(patches, w);
        let embedded = tape.add_bias(e0, b);
        let node = tape.node(embedded);
        Ok(FeatureMap {
            rows: node.rows,
            dim: node.cols,
            values: node.data.clone(),
        })
    }

    /// Encoder features of the prompt-overlaid image (pre-projector).
    pub fn encode_image(&self, image: &Raster) -> Result<FeatureMap> {
        let x = self.preprocess_input(image)?;
        let mut tape = Tape::new();
        let mut binder = Binder::new(&self.params);
        let npx = self.cfg.image_side * self.cfg.image_side;
        let x_gp = if self.cfg.global_active() {
            let alpha = self.cfg.overlay.alpha;
            let delta = binder.leaf(&mut tape, GroupId::GlobalVpp, "values");
            let mut mask_data = Vec::with_capacity(npx * 3);
            for px in 0..npx {
                let m = self.mask.bits[px] as f64;
                mask_data.extend_from_slice(&[m, m, m]);
            }
            let mask_c = tape.input(npx, 3, mask_data);
            let masked = tape.mul(delta, mask_c);
            let prompt_part = tape.scale(masked, 1.0 - alpha);
            let scaled_x: Vec<f64> = x.data.iter().map(|v| alpha * v).collect();
            let xc = tape.input(npx, 3, scaled_x);
            tape.add(xc, prompt_part)
        } else {
            tape.input(npx, 3, x.data.clone())
        };
        let patches = tape.gather(
            x_gp,
            self.patch_index.clone(),
            self.cfg.n_patches(),
            self.cfg.patch * self.cfg.patch * 3,
        );
        let f_gp = self.encode_from_patches(&mut tape, &mut binder, patches);
        let node = tape.node(f_gp);
        Ok(FeatureMap {
            rows: node.rows,
            dim: node.cols,
            values: node.data.clone(),
        })
    }
}

fn fusion_attn_ids(tape: &mut Tape, b: &mut Binder) -> AttnIds {
    AttnIds {
        wq: b.leaf(tape, GroupId::ProjectorL, "fus_wq"),
        wk: b.leaf(tape, GroupId::ProjectorL, "fus_wk"),
        wv: b.leaf(tape, GroupId::ProjectorL, "fus_wv"),
        wo: b.leaf(tape, GroupId::ProjectorL, "fus_wo"),
        bq: b.leaf(tape, GroupId::ProjectorL, "fus_bq"),
        bk: b.leaf(tape, GroupId::ProjectorL, "fus_bk"),
        bv: b.leaf(tape, GroupId::ProjectorL, "fus_bv"),
        bo: b.leaf(tape, GroupId::ProjectorL, "fus_bo"),
    }
}

/// Flat gather indices mapping (pixel, channel) layout into
/// (patch, within-patch) layout.
fn patch_index(side: usize, patch: usize) -> Vec<usize> {
    let grid = side / patch;
    let mut idx = Vec::with_capacity(side * side * 3);
    for prow in 0..grid {
        for pcol in 0..grid {
            for dy in 0..patch {
                for dx in 0..patch {
                    for ch in 0..3 {
                        let pixel = (prow * patch + dy) * side + (pcol * patch + dx);
                        idx.push(pixel * 3 + ch);
                    }
                }
            }
        }
    }
    idx
}
