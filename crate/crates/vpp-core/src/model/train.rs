//! Seeded training loop: adaptive-moment optimizer with decoupled weight
//! decay and cosine-annealed per-group learning rates, batch gradients
//! reduced in fixed order for bit-reproducibility.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{inject_instruction, InstructionMode, Sample, Split};
use crate::raster::Raster;
use crate::{Error, Result};

use super::net::Model;
use super::params::zero_grads;
use super::vocab::Vocab;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const WEIGHT_DECAY: f64 = 0.0;

/// One teacher-forcing example: an image plus query/answer text.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub image: Raster,
    pub query: String,
    pub answer: String,
}

/// Derives text examples from scene/sample pairs, applying the instruction
/// mode. Sample-level injection edits the question text; system mode keeps
/// the record untouched and prepends the instruction at encoding time.
pub fn examples_from_pairs(
    pairs: &[(Raster, Sample)],
    mode: InstructionMode,
    split: Option<Split>,
) -> Vec<TrainExample> {
    pairs
        .iter()
        .filter(|(_, s)| split.is_none() || s.split == split)
        .map(|(img, s)| {
            let s = inject_instruction(s, mode);
            let mut query = s.first_human_text().unwrap_or_default().to_string();
            if mode == InstructionMode::System {
                query = format!("{} {query}", crate::dataset::VPP_INSTRUCTION);
            }
            TrainExample {
                image: img.clone(),
                query,
                answer: s.final_assistant_text().unwrap_or_default().to_string(),
            }
        })
        .collect()
}

/// Builds the closed vocabulary over a set of examples.
pub fn vocab_from_examples(examples: &[TrainExample]) -> Vocab {
    Vocab::build(
        examples
            .iter()
            .flat_map(|e| [e.query.as_str(), e.answer.as_str()]),
    )
}

#[derive(Debug, Clone)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for the per-epoch shuffle (independent of the model seed).
    pub shuffle_seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 5,
            batch_size: 8,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainStats {
    /// Mean teacher-forcing loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    /// Examples with empty answers contribute no loss; counted for the log.
    pub empty_answers: usize,
}

/// Trains in place. Deterministic given the schedule and model seeds under
/// single-threaded execution.
pub fn train(model: &mut Model, examples: &[TrainExample], sched: &TrainSchedule) -> Result<TrainStats> {
    if examples.is_empty() {
        return Err(Error::contract("empty training corpus".to_string()));
    }
    let n = examples.len();
    let batch = sched.batch_size.max(1);
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = (sched.epochs * steps_per_epoch).max(1);

    // Tokenize once.
    let encoded: Vec<(usize, Vec<u32>, Vec<u32>)> = examples
        .iter()
        .enumerate()
        .map(|(i, e)| (i, model.vocab.tokenize(&e.query), model.vocab.tokenize(&e.answer)))
        .collect();
    let empty_answers = encoded.iter().filter(|(_, _, a)| a.is_empty()).count();

    let mut moments_m = zero_grads(&model.params);
    let mut moments_v = zero_grads(&model.params);
    let mut grads = zero_grads(&model.params);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sched.shuffle_seed);
    let mut epoch_losses = Vec::with_capacity(sched.epochs);
    let mut step = 0usize;

    for _epoch in 0..sched.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_terms = 0usize;
        for chunk in order.chunks(batch) {
            for g in grads.iter_mut() {
                for t in g.iter_mut() {
                    t.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            let mut batch_loss = 0.0;
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let (i, q, a) = &encoded[idx];
                let mut fp = model.forward(&examples[*i].image, q, Some(a), false)?;
                if let Some(loss) = fp.loss {
                    let value = fp.tape.scalar(loss);
                    if !value.is_finite() {
                        let group = model
                            .params
                            .first_non_finite_group()
                            .unwrap_or("activations")
                            .to_string();
                        return Err(Error::NonFinite { step, group });
                    }
                    batch_loss += value;
                    fp.tape.backward(loss);
                    fp.accumulate_grads(&mut grads, scale);
                }
            }
            epoch_loss += batch_loss;
            epoch_terms += chunk.len();

            // Cosine-annealed step.
            step += 1;
            let decay = 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos());
            let t = step as f64;
            let bc1 = 1.0 - BETA1.powf(t);
            let bc2 = 1.0 - BETA2.powf(t);
            for (gi, group) in model.params.groups.iter_mut().enumerate() {
                if group.frozen {
                    continue;
                }
                let lr = group.lr * decay;
                for (ti, tensor) in group.tensors.iter_mut().enumerate() {
                    let g = &grads[gi][ti];
                    let m = &mut moments_m[gi][ti];
                    let v = &mut moments_v[gi][ti];
                    for ((p, &gv), (mi, vi)) in tensor
                        .data
                        .iter_mut()
                        .zip(g)
                        .zip(m.iter_mut().zip(v.iter_mut()))
                    {
                        *mi = BETA1 * *mi + (1.0 - BETA1) * gv;
                        *vi = BETA2 * *vi + (1.0 - BETA2) * gv * gv;
                        let mh = *mi / bc1;
                        let vh = *vi / bc2;
                        *p -= lr * (mh / (vh.sqrt() + ADAM_EPS) + WEIGHT_DECAY * *p);
                    }
                }
            }
        }
        epoch_losses.push(epoch_loss / epoch_terms as f64);
    }

    Ok(TrainStats {
        epoch_losses,
        steps: step,
        empty_answers,
    })
}
