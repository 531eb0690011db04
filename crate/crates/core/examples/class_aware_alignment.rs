//! Draws class-matched source/target batches and takes SGD steps on the
//! alignment objective, printing how the loss terms move.

use cauda::alignment::{alignment_gradients, sample_class_batch, Objective};
use cauda::assignment::PseudoLabelSet;
use cauda::datagen::{generate_gaussian_pair, ShiftSpec};
use cauda::model::{sgd_step, NetworkParams, OptimizerState, SgdConfig};
use cauda::refinement::FilteredTargetSet;
use cauda::rng_from_seed;

fn main() -> cauda::Result<()> {
    let (source, target) = generate_gaussian_pair(&ShiftSpec::default(), 4, 2, 7)?;
    // ground truth stands in for pseudo-labels here
    let labels = target.hidden_labels().unwrap().to_vec();
    let filtered = FilteredTargetSet::all(&PseudoLabelSet {
        cluster_of: labels.clone(),
        labels,
    });

    let mut rng = rng_from_seed(11);
    let mut params = NetworkParams::init(2, &[64, 32], 4, &mut rng)?;
    let mut opt = OptimizerState::new(SgdConfig::default())?;
    let objective = Objective::default();
    let steps = 600;
    for step in 0..steps {
        opt.set_step(step, steps);
        let batch = sample_class_batch(&source, &filtered, 4, 8, 8, &mut rng)?.expect("all classes present");
        let (loss, grads) = alignment_gradients(&params, &batch, source.features(), target.features(), &objective)?;
        sgd_step(&mut params, &grads, &mut opt)?;
        if step % 100 == 0 || step == steps - 1 {
            println!(
                "step {step:>3}: total {:.4}  ce {:.4}  c2c {:.4}  p2p {:.4}",
                loss.total, loss.ce, loss.c2c, loss.p2p
            );
        }
    }
    Ok(())
}
