//! Trains the target-only auxiliary network on noisy pseudo-labels with the
//! easy-to-hard schedule, then keeps the samples it is confident about.

use cauda::assignment::PseudoLabelSet;
use cauda::datagen::{generate_gaussian_pair, ShiftSpec};
use cauda::model::{NetworkParams, OptimizerState, SgdConfig};
use cauda::pipeline::label_accuracy;
use cauda::refinement::{confidence_check, refine, SelfPacedSchedule};
use cauda::rng_from_seed;
use rand::Rng as _;

fn main() -> cauda::Result<()> {
    let (_, target) = generate_gaussian_pair(&ShiftSpec::default(), 4, 2, 7)?;
    let truth = target.hidden_labels().unwrap().to_vec();

    // corrupt 15% of the true labels
    let mut rng = rng_from_seed(3);
    let labels: Vec<usize> = truth
        .iter()
        .map(|&y| if rng.random_bool(0.15) { rng.random_range(0..4) } else { y })
        .collect();
    let pseudo = PseudoLabelSet {
        cluster_of: labels.clone(),
        labels,
    };

    let schedule = SelfPacedSchedule::default();
    let mut aux = NetworkParams::init(2, &[64, 32], 4, &mut rng)?;
    let mut opt = OptimizerState::new(SgdConfig::default())?;
    for round in 0..5 {
        let outcome = refine(aux, target.features(), &pseudo, schedule, &mut opt, 32, &mut rng)?;
        let last = outcome.epochs.last().unwrap();
        println!(
            "round {round}: {} epochs, final threshold {:.3}, mean NLL {:.3}",
            outcome.epochs.len(),
            last.threshold,
            last.mean_nll
        );
        aux = outcome.params;
    }

    let kept = confidence_check(&aux, target.features(), &pseudo, schedule.lambda)?;
    let kept_truth: Vec<usize> = kept.indices.iter().map(|&i| truth[i]).collect();
    println!(
        "pseudo-label accuracy: {:.3} on all {} samples, {:.3} on the {} kept",
        label_accuracy(&pseudo.labels, &truth),
        truth.len(),
        label_accuracy(&kept.pseudo_labels, &kept_truth),
        kept.len()
    );
    Ok(())
}
