//! Pooling, normalization and classification chained end to end.

use cbp_core::bilinear::bilinear_pool;
use cbp_core::io::LabelTable;
use cbp_core::postproc::{predict, train_logreg, NormalizedDescriptor, TrainConfig};
use cbp_core::rm::{gen_rm, rm_pool};
use cbp_core::ts::{gen_ts, ts_pool};
use cbp_core::{LocalDescriptorGrid, PooledDescriptor, SeededRng};

/// Two classes whose descriptors align with different axes.
fn two_class_grid(rng: &mut SeededRng) -> (LocalDescriptorGrid, LabelTable) {
    let (n, c) = (40, 6);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let grid = LocalDescriptorGrid::from_fn(n, 2, 2, c, |i, _, _, k| {
        let axis = if labels[i] == 0 { 0 } else { 1 };
        let signal = if k == axis { 2.0 * rng.sign() } else { 0.0 };
        signal + 0.3 * rng.normal()
    })
    .unwrap();
    (grid, LabelTable::from_dense(&labels))
}

fn accuracy(pooled: &PooledDescriptor, labels: &LabelTable) -> f64 {
    let features = NormalizedDescriptor::from_pooled(pooled).into_values();
    let model = train_logreg(&features, labels, 2, 0.001, &TrainConfig::default()).unwrap();
    predict(&model, &features).unwrap().accuracy(labels)
}

#[test]
fn every_pooling_separates_sign_symmetric_classes() {
    // Class means are zero because of the random sign, so only
    // second-order statistics carry the label.
    let mut rng = SeededRng::new(100);
    let (grid, labels) = two_class_grid(&mut rng);
    assert_eq!(accuracy(&bilinear_pool(&grid), &labels), 1.0);
    let rm = gen_rm(6, 64, &mut rng).unwrap();
    assert!(accuracy(&rm_pool(&grid, &rm).unwrap(), &labels) >= 0.95);
    let ts = gen_ts(6, 64, &mut rng).unwrap();
    assert!(accuracy(&ts_pool(&grid, &ts).unwrap(), &labels) >= 0.95);
}

#[test]
fn parameter_generation_is_reproducible() {
    let a = gen_ts(16, 32, &mut SeededRng::new(5)).unwrap();
    let b = gen_ts(16, 32, &mut SeededRng::new(5)).unwrap();
    assert_eq!(a, b);
    let a = gen_rm(16, 32, &mut SeededRng::new(5)).unwrap();
    let b = gen_rm(16, 32, &mut SeededRng::new(5)).unwrap();
    assert_eq!(a, b);
}
