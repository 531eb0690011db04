//! Builds the rotated-Gaussian and two-moons domain pairs, writes them as
//! CSV and reads them back.
//!
//! ```text
//! cargo run --example generate_domains [out-dir]
//! ```

use std::path::PathBuf;

use cauda::datagen::{
    class_means, generate_gaussian_pair, generate_two_moons_pair, load_labeled_csv, load_unlabeled_csv,
    write_labeled_csv, write_unlabeled_csv, ShiftSpec,
};

fn main() -> cauda::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "generated".into()));
    std::fs::create_dir_all(&out)?;

    let spec = ShiftSpec::default();
    let (source, target) = generate_gaussian_pair(&spec, 4, 2, 7)?;
    println!("gaussian: {} source, {} target samples", source.len(), target.len());
    let src_means = class_means(source.features(), source.labels(), 4);
    let tgt_means = class_means(target.features(), target.hidden_labels().unwrap(), 4);
    for k in 0..4 {
        println!(
            "  class {k}: source mean ({:+.2}, {:+.2})  target mean ({:+.2}, {:+.2})",
            src_means[[k, 0]],
            src_means[[k, 1]],
            tgt_means[[k, 0]],
            tgt_means[[k, 1]]
        );
    }

    write_labeled_csv(&out.join("source.csv"), &source)?;
    write_unlabeled_csv(&out.join("target.csv"), &target)?;
    let back = load_labeled_csv(&out.join("source.csv"), None)?;
    let back_t = load_unlabeled_csv(&out.join("target.csv"), Some(4))?;
    assert_eq!(back, source);
    assert_eq!(back_t, target);
    println!("round trip through {} ok", out.display());

    let (ms, mt) = generate_two_moons_pair(0.1, 45.0, 200, 200, 7)?;
    println!("two moons: class counts {:?} / target {}", ms.class_counts(), mt.len());
    Ok(())
}
