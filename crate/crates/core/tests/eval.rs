mod common;

use common::*;
use proptest::prelude::*;
use tguard_core::eval::{compute_metrics, kfold_evaluate, kfold_plan, make_split, Fractions};

fn labels_of(ones: usize, zeros: usize, seed: u64) -> Vec<u8> {
    use rand::seq::SliceRandom;
    let mut v = vec![1u8; ones];
    v.extend(vec![0u8; zeros]);
    v.shuffle(&mut rng(seed));
    v
}

fn count(idx: &[usize], labels: &[u8], class: u8) -> usize {
    idx.iter().filter(|&&i| labels[i] == class).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_match_confusion_matrix(pairs in prop::collection::vec((0u8..2, 0u8..2), 0..200)) {
        let (preds, labels): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = compute_metrics(&preds, &labels);
        let bad = metrics_mismatch(&m, &preds, &labels);
        prop_assert!(bad.is_none(), "{:?}", bad);
    }

    #[test]
    fn split_is_a_stratified_partition(ones in 3usize..80, zeros in 3usize..80, seed in any::<u64>()) {
        let labels = labels_of(ones, zeros, seed);
        let s = make_split(&labels, Fractions::default(), seed).unwrap();
        let mut all: Vec<usize> = [s.train.clone(), s.val.clone(), s.test.clone()].concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let corpus_ratio = ones as f64 / labels.len() as f64;
        // The one-of-each-class rule forces a design only when rounding
        // would leave a class out of validation or test.
        let forced = [&s.val, &s.test].iter().any(|p| {
            let natural = (p.len() as f64 * corpus_ratio).round() as usize;
            natural == 0 || natural == p.len()
        });
        for part in [&s.train, &s.val, &s.test] {
            prop_assert!(count(part, &labels, 0) >= 1 && count(part, &labels, 1) >= 1);
            let ideal = corpus_ratio * part.len() as f64;
            prop_assert!(forced || (count(part, &labels, 1) as f64 - ideal).abs() <= 1.0 + 1e-9,
                "part of {} holds {} ones, ideal {ideal}", part.len(), count(part, &labels, 1));
        }
    }

    #[test]
    fn folds_never_leak(ones in 5usize..60, zeros in 5usize..30, k in 2usize..6, seed in any::<u64>()) {
        let labels = labels_of(ones, zeros, seed);
        let plans = kfold_plan(&labels, k, seed).unwrap();
        let mut seen = vec![0; labels.len()];
        for p in &plans {
            prop_assert!(p.train.iter().all(|i| !p.test.contains(i)));
            prop_assert_eq!(p.train.len() + p.test.len(), labels.len());
            for &i in &p.test {
                seen[i] += 1;
            }
            prop_assert!(count(&p.test, &labels, 0) >= 1 && count(&p.test, &labels, 1) >= 1);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}

#[test]
fn constant_positive_stub_on_40_11_corpus() {
    let labels = labels_40_11();
    let folds = kfold_evaluate(&labels, 5, 42, |p| Ok(vec![1; p.test.len()])).unwrap();
    let mean_p = folds.iter().map(|m| m.precision.unwrap()).sum::<f64>() / 5.0;
    assert!(folds.iter().all(|m| m.recall == Some(1.0)));
    assert!((mean_p - 40.0 / 51.0).abs() < 0.02, "{mean_p}");
    let mut sizes: Vec<usize> = folds.iter().map(|m| m.total()).collect();
    sizes.sort_unstable();
    assert!(sizes.iter().all(|&s| s == 10 || s == 11));
}
