//! Compares analytic gradients of the joint loss with central finite
//! differences over every parameter of a tiny model.

use corefkit::masking::{MrpTarget, TrainingInstance};
use corefkit::model::{init_params, ModelConfig, ModelParams, TensorKind};
use corefkit::objectives::{loss_and_gradients, total_loss, LossWeights, Objective};

fn main() -> corefkit::Result<()> {
    let cfg = ModelConfig {
        vocab_size: 64,
        hidden: 16,
        layers: 2,
        heads: 2,
        ffn: 32,
        max_positions: 32,
        dropout: 0.0,
    };
    let params = init_params(&cfg, 1)?;
    let n = 24;
    let mut input_ids: Vec<u32> = (0..n as u32).map(|i| 5 + (i * 13) % 59).collect();
    input_ids[0] = 3;
    input_ids[n - 1] = 4;
    let mut mlm_labels = vec![None; n];
    for p in [6, 7, 15] {
        mlm_labels[p] = Some(input_ids[p]);
        input_ids[p] = 2;
    }
    let words: Vec<(usize, usize)> = vec![
        (1, 2),
        (3, 3),
        (4, 5),
        (6, 7),
        (8, 10),
        (11, 11),
        (12, 14),
        (15, 15),
        (16, 18),
        (19, 22),
    ];
    let inst = TrainingInstance {
        input_ids,
        mlm_labels,
        mrp_targets: vec![MrpTarget {
            start: 6,
            end: 7,
            referents: vec![(1, 2), (16, 18)],
        }],
        words,
        masked: vec![],
        eligible_groups: 1,
    };
    let w = LossWeights::default();
    report("at init", &params, &inst, w)?;
    // Near init the residual stream is tiny, so the final layer norm has
    // large higher derivatives and the h=1e-5 difference quotient carries
    // truncation error of order 1e-6. Scaled weights avoid that.
    let mut scaled = params.clone();
    for (_, kind, t) in scaled.tensors_mut() {
        if kind == TensorKind::Weight {
            t.iter_mut().for_each(|v| *v *= 20.0);
        }
    }
    report("weights x20", &scaled, &inst, w)
}

fn report(
    label: &str,
    params: &ModelParams,
    inst: &TrainingInstance,
    w: LossWeights,
) -> corefkit::Result<()> {
    let mut grads = params.zeros_like();
    let loss = loss_and_gradients(inst, params, w, Objective::Joint, None, &mut grads)?;
    println!(
        "{label}: L = {:.6} (L_MRP {:.6}, L_MLM {:.6})",
        loss.total, loss.mrp, loss.mlm
    );

    // Round-off of the difference quotient is ~1e-10 in absolute terms, so
    // tiny gradients are compared against a floor of 1e-3.
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    for (t, (name, _, tensor)) in grads.tensors().into_iter().enumerate() {
        for (e, &analytic) in tensor.iter().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[t].2[e] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t].2[e] -= h;
            let fd = (total_loss(inst, &plus, w)?.total - total_loss(inst, &minus, w)?.total)
                / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{e}]"));
            }
        }
    }
    println!(
        "  {} parameters, worst relative error {:.2e} at {}",
        params.num_params(),
        worst.0,
        worst.1
    );
    Ok(())
}
