//! Source-seeded k-means on target points and the spherical moving-average
//! refresh of the cached centroids.

use cauda::clustering::{kmeans, moving_average_update, source_centroids, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use cauda::datagen::{generate_gaussian_pair, ShiftSpec};

fn main() -> cauda::Result<()> {
    let (source, target) = generate_gaussian_pair(&ShiftSpec::default(), 4, 2, 7)?;
    let seeds = source_centroids(source.features(), source.labels(), 4)?;
    let km = kmeans(target.features(), &seeds, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;
    println!("converged after {} iterations, cluster sizes {:?}", km.iterations, km.centroids.counts);
    println!("wcss per iteration: {:.1?}", km.wcss);

    let truth = target.hidden_labels().unwrap();
    let agree = km.assignment.iter().zip(truth).filter(|(a, b)| a == b).count();
    println!("cluster index equals true class for {agree}/{} points", truth.len());

    let refreshed = moving_average_update(&km.centroids, target.features(), &km.assignment, 1.0)?;
    for k in 0..4 {
        let c = refreshed.row(k);
        println!("  centroid {k}: ({:+.3}, {:+.3})", c[0], c[1]);
    }
    Ok(())
}
