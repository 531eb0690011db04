//! Matches target clusters to source classes with the Hungarian solver and
//! turns cluster indices into pseudo-labels.

use cauda::assignment::{assign_pseudolabels, build_cost, hungarian, CostMatrix};
use cauda::clustering::CentroidSet;
use ndarray::array;

fn main() -> cauda::Result<()> {
    let cost = CostMatrix::new(array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])?;
    let m = hungarian(&cost);
    println!("rows -> cols {:?}, total cost {}", m.row_to_col(), m.total_cost);

    // target clusters found in a different order than the source classes
    let source = CentroidSet::new(array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])?;
    let target = CentroidSet::new(array![[-0.9, 0.1], [0.95, 0.05], [0.1, 0.99]])?;
    let m = hungarian(&build_cost(&source, &target)?);
    println!("target cluster j is source class {:?}", m.perm);

    let clusters = [0, 0, 1, 2, 1];
    let pseudo = assign_pseudolabels(&clusters, &m)?;
    println!("clusters {clusters:?} -> pseudo-labels {:?}", pseudo.labels);
    Ok(())
}
