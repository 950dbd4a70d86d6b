//! Verification of the reverse-mode gradients by central finite differences
//! over randomly sampled parameter coordinates spanning every group,
//! including the prompt, whose masked-out entries must show an exactly-zero
//! analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Result;

use super::net::Model;
use super::params::zero_grads;
use super::train::TrainExample;

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CoordResult {
    pub group: String,
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub sampled: usize,
    pub within_tol: usize,
    pub max_rel_err: f64,
    pub worst: Option<CoordResult>,
    /// Max rel error per group, in group order.
    pub per_group_max: Vec<(String, f64)>,
    /// Masked prompt entries: analytic gradients must be exactly zero and
    /// the central difference must vanish to roundoff.
    pub masked_checked: usize,
    pub masked_analytic_all_zero: bool,
    pub masked_fd_max: f64,
}

impl GradCheckReport {
    pub fn pass_fraction(&self) -> f64 {
        self.within_tol as f64 / self.sampled as f64
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Runs the check on one example with at least `n_coords` sampled
/// coordinates spread over all six groups.
pub fn grad_check(
    model: &mut Model,
    example: &TrainExample,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let q = model.vocab.tokenize(&example.query);
    let a = model.vocab.tokenize(&example.answer);

    // Analytic gradients from one recorded pass.
    let mut grads = zero_grads(&model.params);
    {
        let mut fp = model.forward(&example.image, &q, Some(&a), false)?;
        let loss = fp.loss.expect("grad check needs a non-empty answer");
        fp.tape.backward(loss);
        fp.accumulate_grads(&mut grads, 1.0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_groups = model.params.groups.len();
    let per_group = n_coords.div_ceil(n_groups);

    let mut results: Vec<CoordResult> = Vec::new();
    for gi in 0..n_groups {
        let n_tensors = model.params.groups[gi].tensors.len();
        let weights: Vec<usize> = (0..n_tensors)
            .map(|ti| model.params.groups[gi].tensors[ti].data.len())
            .collect();
        let total: usize = weights.iter().sum();
        for _ in 0..per_group {
            // Pick a tensor proportionally to its size, then an element.
            let mut pick = rng.gen_range(0..total);
            let mut ti = 0;
            while pick >= weights[ti] {
                pick -= weights[ti];
                ti += 1;
            }
            let idx = rng.gen_range(0..weights[ti]);
            let analytic = grads[gi][ti][idx];
            let numeric = central_difference(model, example, &q, &a, gi, ti, idx)?;
            results.push(CoordResult {
                group: model.params.groups[gi].name.clone(),
                tensor: model.params.groups[gi].tensors[ti].name.clone(),
                index: idx,
                analytic,
                numeric,
                rel_err: rel_err(numeric, analytic),
            });
        }
    }

    // Masked prompt entries: sample interior coordinates explicitly.
    let side = model.cfg.image_side;
    let mask = model.prompt_mask().clone();
    let interior: Vec<usize> = (0..side * side).filter(|&p| mask.bits[p] == 0).collect();
    let mut masked_checked = 0usize;
    let mut masked_all_zero = true;
    let mut masked_fd_max = 0.0f64;
    if model.cfg.global_active() {
        for _ in 0..8.min(interior.len()) {
            let px = interior[rng.gen_range(0..interior.len())];
            let ch = rng.gen_range(0..3);
            let idx = px * 3 + ch;
            let analytic = grads[0][0][idx];
            if analytic != 0.0 {
                masked_all_zero = false;
            }
            let numeric = central_difference(model, example, &q, &a, 0, 0, idx)?;
            masked_fd_max = masked_fd_max.max(numeric.abs());
            masked_checked += 1;
        }
    }

    let sampled = results.len();
    let within_tol = results.iter().filter(|r| r.rel_err <= REL_TOL).count();
    let worst = results
        .iter()
        .cloned()
        .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err));
    let per_group_max = model
        .params
        .groups
        .iter()
        .map(|g| {
            let m = results
                .iter()
                .filter(|r| r.group == g.name)
                .map(|r| r.rel_err)
                .fold(0.0f64, f64::max);
            (g.name.clone(), m)
        })
        .collect();

    Ok(GradCheckReport {
        sampled,
        within_tol,
        max_rel_err: worst.as_ref().map(|w| w.rel_err).unwrap_or(0.0),
        worst,
        per_group_max,
        masked_checked,
        masked_analytic_all_zero: masked_all_zero,
        masked_fd_max,
    })
}

fn central_difference(
    model: &mut Model,
    example: &TrainExample,
    q: &[u32],
    a: &[u32],
    gi: usize,
    ti: usize,
    idx: usize,
) -> Result<f64> {
    let original = model.params.groups[gi].tensors[ti].data[idx];
    model.params.groups[gi].tensors[ti].data[idx] = original + FD_STEP;
    let plus = model.loss(&example.image, q, a)?;
    model.params.groups[gi].tensors[ti].data[idx] = original - FD_STEP;
    let minus = model.loss(&example.image, q, a)?;
    model.params.groups[gi].tensors[ti].data[idx] = original;
    Ok((plus - minus) / (2.0 * FD_STEP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axis::AxisSpec;
    use crate::dataset::{synth_corpus, InstructionMode, SynthSceneSpec};
    use crate::model::train::examples_from_pairs;
    use crate::model::vocab::Vocab;
    use crate::model::{scaled_mask_width, ModelConfig};
    use crate::overlay::OverlayConfig;

    #[test]
    fn tiny_model_gradients_verify() {
        let spec = SynthSceneSpec {
            canvas: 16,
            min_side_frac: 0.25,
            max_side_frac: 0.5,
            ..SynthSceneSpec::default()
        };
        let pairs = synth_corpus(&spec, 2).unwrap();
        let examples = examples_from_pairs(&pairs, InstructionMode::None, None);
        let vocab = Vocab::build(
            examples
                .iter()
                .flat_map(|e| [e.query.as_str(), e.answer.as_str()]),
        );
        let cfg = ModelConfig {
            image_side: 16,
            patch: 8,
            dim: 16,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            k_queries: 2,
            max_text_len: 64,
            overlay: OverlayConfig {
                alpha: 0.95,
                mask_width: scaled_mask_width(16),
            },
            axis: AxisSpec {
                canvas: 64,
                font_size: 5,
                unit_scale: 0.5,
                ..AxisSpec::default()
            },
            channel_mean: [0.5; 3],
            channel_std: [0.5; 3],
            ..ModelConfig::default()
        };
        let mut model = Model::new(cfg, vocab).unwrap();
        let report = grad_check(&mut model, &examples[0], 60, 42).unwrap();
        assert!(
            report.pass_fraction() >= 0.99,
            "only {}/{} within tolerance; worst {:?}",
            report.within_tol,
            report.sampled,
            report.worst
        );
        assert!(report.masked_analytic_all_zero);
        assert!(report.masked_fd_max < 1e-8);
    }
}
