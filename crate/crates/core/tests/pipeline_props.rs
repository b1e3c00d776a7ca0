mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::rng;
use rand::Rng;
use sctsvm_core::eval::confusion_and_accuracy;
use sctsvm_core::pipeline::{
    bootstrap_histories, classify_dataset, classify_multiclass, dir_svm, run_sequence, sample_training, step, MulticlassModel,
    PipelineConfig,
};
use sctsvm_core::scenario::{generate, paper_like};
use sctsvm_core::types::{ClassId, ClassPair, ClassifierParams};

#[test]
fn vote_recount() {
    let mut g = rng(401);
    let classes: BTreeSet<ClassId> = (1..=4).map(ClassId).collect();
    let pairs = ClassPair::all(&classes);
    let model = MulticlassModel::new(
        classes.clone(),
        pairs
            .iter()
            .map(|&p| {
                let w = (0..3).map(|_| g.random_range(-1.0..1.0)).collect();
                (p, ClassifierParams::new(w, g.random_range(-0.5..0.5)).unwrap())
            })
            .collect(),
    )
    .unwrap();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| g.random_range(-2.0..2.0)).collect();
        let mut tally = [0usize; 5];
        for (p, c) in model.classifiers() {
            let d = c.w().iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + c.b();
            tally[if d >= 0.0 { p.pos().0 } else { p.neg().0 } as usize] += 1;
        }
        assert_eq!(tally.iter().sum::<usize>(), 6);
        let top = *tally.iter().max().unwrap();
        let expect = (1..=4).find(|&c| tally[c] == top).unwrap();
        assert_eq!(classify_multiclass(&model, &x).unwrap(), ClassId(expect as u32));
    }
}

#[test]
fn window_is_never_exceeded() {
    let mut cfg = paper_like(5);
    cfg.dates = (0..9).map(|i| 10 * i).collect();
    for c in cfg.classes.iter_mut() {
        c.samples = 40;
    }
    let data = generate(&cfg).unwrap();
    let pc = PipelineConfig::new(3, 5, 50.0, 20.0).with_seed(2);
    let mut hs = bootstrap_histories(&data[..3], &pc).unwrap();
    for d in &data[3..] {
        let out = step(&hs, d, &pc).unwrap();
        assert_eq!(out.model.classifiers().len(), 10);
        for h in out.histories.values() {
            assert!(h.len() <= 3);
            assert_eq!(h.latest().unwrap().date, d.date());
        }
        hs = out.histories;
    }
}

#[test]
fn full_labels_and_no_prior_match_direct_training() {
    let data = generate(&paper_like(8)).unwrap();
    let nt = 200;
    let cfg = PipelineConfig::new(4, nt, 50.0, 0.0).with_seed(1);
    let outcomes = run_sequence(&data, 4, &cfg).unwrap();
    let target = &data[4];
    let sample = sample_training(target, nt, 1);
    assert_eq!(sample.indices.len(), target.len());
    let direct = dir_svm(target, 50.0, &Default::default()).unwrap();
    let direct_acc = confusion_and_accuracy(&classify_dataset(&direct, target).unwrap(), target.labels()).unwrap().overall;
    let sct = outcomes[0].sct.overall;
    assert!((sct - direct_acc).abs() <= 0.005, "{sct} vs {direct_acc}");
}

#[test]
fn same_seed_same_model() {
    let data = generate(&paper_like(9)).unwrap();
    let cfg = PipelineConfig::new(4, 5, 50.0, 20.0).with_seed(77);
    let hs = bootstrap_histories(&data[..4], &cfg).unwrap();
    let a = step(&hs, &data[4], &cfg).unwrap();
    let b = step(&hs, &data[4], &cfg).unwrap();
    let bits = |m: &MulticlassModel| -> BTreeMap<ClassPair, Vec<u64>> {
        m.classifiers()
            .iter()
            .map(|(p, c)| (*p, c.stacked().iter().map(|v| v.to_bits()).collect()))
            .collect()
    };
    assert_eq!(bits(&a.model), bits(&b.model));
    assert_eq!(a.report, b.report);
}
