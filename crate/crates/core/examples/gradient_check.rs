//! Compare reverse-mode gradients through a short NCA rollout with central
//! finite differences on a handful of parameters.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use std::sync::Arc;

use nca_resilience::autodiff::{Graph, Tensor};
use nca_resilience::grid::RgbImage;
use nca_resilience::nca::{fire_mask, init_state, seeded_rng, step_recorded, NcaHyper, NcaParams, ParamVars};
use rand::Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = seeded_rng(1, 0);
    let hyper = NcaHyper {
        num_channels: 16,
        hidden_size: 32,
        fire_rate: 0.5,
    };
    let mut params = NcaParams::init(hyper, &mut rng)?;
    let w2: Vec<f32> = (0..params.w2.len()).map(|_| rng.random_range(-0.3..0.3)).collect();
    params.w2 = Tensor::new(params.w2.shape().to_vec(), w2)?;
    let b1: Vec<f32> = (0..params.b1.len()).map(|_| rng.random_range(-0.1..0.1)).collect();
    params.b1 = Tensor::new(params.b1.shape().to_vec(), b1)?;
    let image = RgbImage::from_fn(8, 8, |y, x| [y as f32 / 8.0, x as f32 / 8.0, 0.5]);
    let target: Arc<[u8]> = (0..64).map(|i| ((i / 8 + i % 8) > 7) as u8).collect();
    let masks: Vec<Arc<[usize]>> = (0..4).map(|_| fire_mask(&mut rng, 64, 0.5).into()).collect();

    // the graph computes in f32; the numeric side re-evaluates the loss in
    // f64 from the final logits so rounding does not swamp small gradients
    let run = |p: &NcaParams, grad: bool| -> anyhow::Result<(f64, Vec<f32>)> {
        let mut g = Graph::new();
        let vars = ParamVars::record(&mut g, p);
        let mut s = g.input(init_state(&image, 16)?.tensor);
        for m in &masks {
            s = step_recorded(&mut g, s, &vars, m.clone())?;
        }
        let logits = g.select_channels(s, 14, 2)?;
        let value = g
            .value(logits)
            .data()
            .chunks_exact(2)
            .zip(target.iter())
            .map(|(l, &t)| {
                let (a, b) = (l[0] as f64, l[1] as f64);
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln() - if t == 1 { b } else { a }
            })
            .sum::<f64>()
            / 64.0;
        if !grad {
            return Ok((value, Vec::new()));
        }
        let probs = g.softmax_channels(logits);
        let loss = g.cross_entropy_loss(probs, target.clone())?;
        g.backward(loss)?;
        Ok((value, g.grad(vars.w2).unwrap().to_vec()))
    };

    let (loss, grad) = run(&params, true)?;
    println!("loss after 4 steps: {loss:.6}");
    println!("{:>6} {:>12} {:>12} {:>10}", "w2[i]", "analytic", "numeric", "rel err");
    let (mut diff2, mut norm2) = (0.0f64, 0.0f64);
    for i in 0..params.w2.len() {
        let mut plus = params.clone();
        plus.w2.data_mut()[i] += 1e-3;
        let mut minus = params.clone();
        minus.w2.data_mut()[i] -= 1e-3;
        let step = plus.w2.data()[i] as f64 - minus.w2.data()[i] as f64;
        let numeric = (run(&plus, false)?.0 - run(&minus, false)?.0) / step;
        let analytic = grad[i] as f64;
        diff2 += (analytic - numeric).powi(2);
        norm2 += analytic.powi(2).max(numeric.powi(2));
        if i % 53 == 0 {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            println!("{i:>6} {analytic:>12.6} {numeric:>12.6} {rel:>10.2e}");
        }
    }
    // includes coordinates whose perturbation flips a ReLU in a later step;
    // the acceptance suite excludes those and gets about 1e-4
    println!("norm-wise relative error over all {} w2 entries: {:.2e}", grad.len(), (diff2 / norm2).sqrt());
    Ok(())
}
