use std::process::Command;

use cauda::clustering::{nearest_centroid, source_centroids};
use cauda::datagen::{generate_gaussian_pair, write_labeled_csv, write_unlabeled_csv, ShiftSpec, UnlabeledSet};
use cauda::model::{argmax_rows, NetworkParams};
use cauda::pipeline::{
    checkpoint_to_bytes, evaluate, evaluate_target, label_accuracy, pretrain, run, run_with_pretrained, Evaluation,
    MetricsRecord, NullSink, RunConfig,
};
use cauda::{derive_seed, rng_from_seed, Error};
use ndarray::Array2;

fn small(config: &mut RunConfig) {
    config.outer_iterations = 3;
    config.align_epochs = 2;
    config.pretrain_epochs = 10;
}

#[test]
fn pretraining_fits_a_separable_source() {
    let mut cfg = RunConfig::default();
    cfg.num_classes = 2;
    cfg.shift.class_sep = 5.0;
    cfg.shift.noise_std = 0.5;
    let (source, _) = cfg.load_data().unwrap();
    let params = pretrain(&cfg, &source, &mut NullSink).unwrap();
    let acc = evaluate(&params, source.features(), source.labels()).unwrap().accuracy;
    assert!(acc >= 0.99, "{acc}");
}

#[test]
fn zero_epochs_returns_the_seeded_initialization() {
    let mut cfg = RunConfig::default();
    cfg.pretrain_epochs = 0;
    let (source, _) = cfg.load_data().unwrap();
    let params = pretrain(&cfg, &source, &mut NullSink).unwrap();
    let mut r = rng_from_seed(derive_seed(cfg.seed, 10));
    let init = NetworkParams::init(2, &cfg.hidden, 4, &mut r).unwrap();
    assert_eq!(params, init);
}

#[test]
fn pretraining_is_deterministic() {
    let cfg = RunConfig::default();
    let (source, _) = cfg.load_data().unwrap();
    let a = pretrain(&cfg, &source, &mut NullSink).unwrap();
    let b = pretrain(&cfg, &source, &mut NullSink).unwrap();
    assert_eq!(checkpoint_to_bytes(&a, None).unwrap(), checkpoint_to_bytes(&b, None).unwrap());
}

#[test]
fn adaptation_does_not_hurt_an_unshifted_problem() {
    let mut cfg = RunConfig::default();
    cfg.shift.rotation_deg = 0.0;
    let report = run(&cfg, &mut NullSink).unwrap();
    let (before, after) = (report.source_only_accuracy().unwrap(), report.final_accuracy().unwrap());
    assert!(after >= before - 0.02, "{after} vs {before}");
}

#[test]
fn assignment_beats_nearest_source_centroid_labels() {
    let mut cfg = RunConfig::default();
    cfg.outer_iterations = 1;
    cfg.align_epochs = 1;
    let (source, target) = cfg.load_data().unwrap();
    let pretrained = pretrain(&cfg, &source, &mut NullSink).unwrap();

    let fs = pretrained.embed(source.features()).unwrap();
    let ft = pretrained.embed(target.features()).unwrap();
    let centroids = source_centroids(fs.view(), source.labels(), 4).unwrap();
    let nearest = nearest_centroid(ft.view(), &centroids);
    let truth = target.hidden_labels().unwrap();
    let baseline = label_accuracy(&nearest, truth);

    let report = run_with_pretrained(&cfg, &source, &target, pretrained, &mut NullSink).unwrap();
    let oa = report.iterations[0].pseudo_accuracy.unwrap();
    // frozen at first run: 0.96 vs 0.8025
    assert!(oa > baseline, "{oa} vs {baseline}");
    assert!((oa - 0.96).abs() < 0.02 && (baseline - 0.8025).abs() < 0.02, "{oa} {baseline}");
}

#[test]
fn evaluation_basics() {
    let truth = [0, 1, 2, 0, 1, 2];
    let perfect = Evaluation::from_predictions(&truth, &truth, 3).unwrap();
    assert_eq!(perfect.accuracy, 1.0);
    for (i, row) in perfect.confusion.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v, if i == j { 2 } else { 0 });
        }
    }
    let constant = Evaluation::from_predictions(&[1; 6], &truth, 3).unwrap();
    assert!((constant.accuracy - 1.0 / 3.0).abs() < 1e-15);
    let rows: Vec<usize> = constant.confusion.iter().map(|r| r.iter().sum()).collect();
    assert_eq!(rows, vec![2, 2, 2]);

    let unlabeled = UnlabeledSet::new(Array2::zeros((3, 2)), None).unwrap();
    let params = NetworkParams::init(2, &[4], 3, &mut rng_from_seed(0)).unwrap();
    assert!(evaluate_target(&params, &unlabeled).is_err());
}

#[test]
fn argmax_ignores_monotone_transforms() {
    let mut r = rng_from_seed(3);
    let params = NetworkParams::init(2, &[8], 4, &mut r).unwrap();
    let (_, target) = generate_gaussian_pair(&ShiftSpec::default(), 4, 2, 3).unwrap();
    let trace = params.forward(target.features()).unwrap();
    let warped = trace.logits.mapv(|v| v.powi(3) + 2.0 * v - 5.0);
    assert_eq!(argmax_rows(warped.view()), trace.predictions());
}

#[test]
fn stage_failure_names_the_stage_and_keeps_earlier_records() {
    let cfg = RunConfig::default();
    let (source, _) = cfg.load_data().unwrap();
    let mut small_cfg = cfg.clone();
    small_cfg.pretrain_epochs = 1;
    let params = pretrain(&small_cfg, &source, &mut NullSink).unwrap();
    // fewer target samples than clusters
    let target = UnlabeledSet::new(Array2::zeros((2, 2)), Some(vec![0, 1])).unwrap();
    let mut records: Vec<MetricsRecord> = Vec::new();
    let err = run_with_pretrained(&cfg, &source, &target, params, &mut records).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "assignment", .. }), "{err}");
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].stage, "source_only");
}

#[test]
fn filtered_set_never_exceeds_target() {
    let mut cfg = RunConfig::default();
    small(&mut cfg);
    let report = run(&cfg, &mut NullSink).unwrap();
    assert_eq!(report.iterations.len(), 3);
    assert!(report.iterations.iter().all(|s| s.filtered_size <= 800));
}

#[test]
fn config_errors() {
    let mut cfg = RunConfig::default();
    assert!(cfg.set("no_such_key", "1").unwrap_err().is_config());
    assert!(cfg.set("tau", "abc").unwrap_err().is_config());
    assert!(cfg.apply_text("tau1 = -1\n").unwrap_err().is_config());
    cfg.tau1 = -1.0;
    assert!(cfg.validate().unwrap_err().is_config());
    let mut cfg = RunConfig::default();
    cfg.hidden = vec![];
    assert!(run(&cfg, &mut NullSink).unwrap_err().is_config());
}

fn cauda(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cauda"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (s, t) = generate_gaussian_pair(&ShiftSpec::default(), 4, 2, 7).unwrap();
    write_labeled_csv(&d.join("source.csv"), &s).unwrap();
    write_unlabeled_csv(&d.join("target.csv"), &t).unwrap();
    std::fs::write(d.join("small.cfg"), "outer_iterations = 2 # short\nalign_epochs = 1\npretrain_epochs = 5\n").unwrap();
    let cfg = d.join("small.cfg");
    let out = d.join("out");
    let (cfg, out, data) = (cfg.to_str().unwrap(), out.to_str().unwrap(), d.to_str().unwrap());

    let o = cauda(&["run", "--config", cfg, "--data", data, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.jsonl", "confusion.csv", "checkpoint.bin", "summary.txt"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let ckpt = d.join("out/checkpoint.bin");
    let o = cauda(&["evaluate", "--config", cfg, "--data", data, "--out", out, "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));

    std::fs::write(d.join("bad.cfg"), "tau = -1\n").unwrap();
    let o = cauda(&["run", "--config", d.join("bad.cfg").to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let o = cauda(&["evaluate", "--out", out, "--checkpoint", d.join("missing.bin").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(d.join("junk.bin"), b"not a checkpoint").unwrap();
    let o = cauda(&["evaluate", "--out", out, "--checkpoint", d.join("junk.bin").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
