//! Scratch calibration run for the sweep profile: times one training cell
//! and prints per-component accuracies.

use std::time::Instant;

use vpp_core::dataset::{InstructionMode, SynthSceneSpec};
use vpp_core::eval::{run_sweep, SweepBase, SweepParam, SweepSpec};
use vpp_core::model::{scaled_mask_width, ModelConfig};
use vpp_core::overlay::OverlayConfig;

fn probe(base: SweepBase, spec: SweepSpec, lr: f64) {
    use vpp_core::dataset::Split;
    use vpp_core::eval::{evaluate, parse_box};
    use vpp_core::model::{
        examples_from_pairs, train, vocab_from_examples, Model, TrainSchedule,
    };

    let (pairs, corpus_id) = vpp_core::eval::sweep::build_corpus(&base).unwrap();
    let train_ex = examples_from_pairs(&pairs, base.instruction, Some(Split::Train));
    let vocab = vocab_from_examples(&train_ex);
    println!("vocab size: {}", vocab.len());
    let mut cfg = base.model.clone();
    cfg.seed = spec.seeds[0];
    let mut model = Model::new(cfg, vocab).unwrap();
    let t0 = Instant::now();
    let stats = train(
        &mut model,
        &train_ex,
        &TrainSchedule {
            epochs: spec.epochs,
            batch_size: base.batch_size,
            shuffle_seed: 99,
        },
    )
    .unwrap();
    println!(
        "lr {lr}: losses {:?} in {:.1}s",
        stats
            .epoch_losses
            .iter()
            .map(|l| (l * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        t0.elapsed().as_secs_f64()
    );
    for (split, name) in [(Split::Train, "train"), (Split::Test, "test")] {
        let report = evaluate(
            &model,
            &pairs,
            Some(split),
            name,
            0.5,
            base.instruction,
            &corpus_id,
        )
        .unwrap();
        println!(
            "{name} acc {:.3} parse failures {}/{}",
            report.rows[0].accuracy, report.rows[0].parse_failures, report.rows[0].n
        );
    }
    // Per-slot agreement and IoU stats on train samples.
    let mut slot_hits = [0usize; 4];
    let mut iou_sum = 0.0;
    let mut n_diag = 0usize;
    let mut shown = 0;
    for (img, s) in pairs.iter().filter(|(_, s)| s.split == Some(Split::Train)).take(100) {
        let q = s.first_human_text().unwrap();
        let out = model.generate_text(img, q, 20).unwrap();
        let gt = s.boxes[0].0;
        if let Some(p) = parse_box(&out) {
            let gtv = [gt.x1, gt.y1, gt.x2, gt.y2];
            let pv = [p.x1, p.y1, p.x2, p.y2];
            for i in 0..4 {
                if (gtv[i] - pv[i]).abs() < 1e-9 {
                    slot_hits[i] += 1;
                }
            }
            iou_sum += vpp_core::geometry::iou(&p, &gt);
            n_diag += 1;
        }
        if shown < 6 {
            println!("  expr {:?} gt {} pred {:?}", s.boxes[0].1, s.final_assistant_text().unwrap(), out);
            shown += 1;
        }
    }
    println!(
        "train slot exact-hits over {n_diag}: {:?}, mean IoU {:.3}",
        slot_hits,
        iou_sum / n_diag.max(1) as f64
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: Vec<u64> = args
        .get(1)
        .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![1]);
    let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let n_test: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);

    let image_side = 32;
    let dim: usize = std::env::var("CAL_DIM").ok().and_then(|v| v.parse().ok()).unwrap_or(32);
    let heads: usize = std::env::var("CAL_HEADS").ok().and_then(|v| v.parse().ok()).unwrap_or(4);
    let dec_layers: usize = std::env::var("CAL_DEC").ok().and_then(|v| v.parse().ok()).unwrap_or(2);
    let enc_layers: usize = std::env::var("CAL_ENC").ok().and_then(|v| v.parse().ok()).unwrap_or(2);
    let base = SweepBase {
        model: ModelConfig {
            image_side,
            patch: 8,
            dim,
            encoder_layers: enc_layers,
            decoder_layers: dec_layers,
            heads,
            k_queries: 8,
            overlay: OverlayConfig {
                alpha: 0.95,
                mask_width: scaled_mask_width(image_side),
            },
            max_text_len: 64,
            group_lr: [5e-3; 6],
            ..ModelConfig::default()
        },
        synth: SynthSceneSpec {
            canvas: image_side,
            min_side_frac: 0.2,
            max_side_frac: 0.55,
            position_grid_px: 8,
            ..SynthSceneSpec::default()
        },
        n_train,
        n_test,
        batch_size: 2,
        threshold: 0.5,
        instruction: InstructionMode::None,
        split_seed: 17,
        cache_dir: None,
    };
    let spec = SweepSpec {
        param: SweepParam::Components,
        values: vec![],
        seeds,
        epochs: 5,
    };
    if let Some(lr) = args.get(4).and_then(|s| s.parse::<f64>().ok()) {
        let mut b = base.clone();
        b.model.group_lr = [lr; 6];
        if let Some(bs) = args.get(5).and_then(|s| s.parse::<usize>().ok()) {
            b.batch_size = bs;
        }
        let mut spec = spec;
        if let Some(ep) = args.get(6).and_then(|s| s.parse::<usize>().ok()) {
            spec.epochs = ep;
        }
        return probe(b, spec, lr);
    }

    let t0 = Instant::now();
    let table = run_sweep(&spec, &base).unwrap();
    let dt = t0.elapsed();
    println!("sweep wall time: {:.1}s", dt.as_secs_f64());
    for row in &table.rows {
        let accs: Vec<String> = row.cells.iter().map(|c| format!("{:.3}", c.accuracy)).collect();
        let losses: Vec<String> = row
            .cells
            .first()
            .map(|c| c.epoch_losses.iter().map(|l| format!("{l:.3}")).collect())
            .unwrap_or_default();
        println!(
            "{:>8}: mean {:.3} spread {:.3} accs [{}] losses [{}]",
            row.value,
            row.mean,
            row.spread,
            accs.join(", "),
            losses.join(", ")
        );
    }
}
