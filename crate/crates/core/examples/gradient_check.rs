//! Compares backpropagated gradients of a 2-8-3 network against central
//! finite differences.

use cauda::model::{cross_entropy, cross_entropy_grad, NetworkParams, Upstream};
use cauda::rng_from_seed;
use ndarray::array;

fn main() -> cauda::Result<()> {
    let params = NetworkParams::init(2, &[8], 3, &mut rng_from_seed(5))?;
    let x = array![[0.3, -1.2], [1.5, 0.4], [-0.7, 0.9], [0.0, 0.1]];
    let y = [0, 2, 1, 2];

    let trace = params.forward(x.view())?;
    let (_, d) = cross_entropy_grad(&trace, &y)?;
    let grads = params.backward(&trace, &Upstream::logits(d))?;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let analytic: Vec<f64> = grads.iter().copied().collect();
    for (i, &a) in analytic.iter().enumerate() {
        let loss_at = |delta: f64| {
            let mut p = params.clone();
            *p.iter_mut().nth(i).unwrap() += delta;
            cross_entropy(&p.forward(x.view()).unwrap(), &y).unwrap()
        };
        let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    println!("{} parameters, max relative error {worst:.2e}", analytic.len());
    Ok(())
}
