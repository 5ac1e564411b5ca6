mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn haar_matches_explicit_orthonormal_matrix() {
    assert!(haar_error(200, 1) <= 1e-12);
}

#[test]
fn band_stats_match_raw_moments() {
    assert!(band_stats_error(2000, 2) <= 1e-9);
}

#[test]
fn knn_matches_full_sort() {
    assert_eq!(knn_mismatches(3), 0);
}

#[test]
fn svm_decisions_match_kernel_sums() {
    assert!(svm_error(4) <= 1e-9);
}

#[test]
fn augmentation_matches_translation_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let recs: Vec<_> = (0..300).map(|i| random_recording(&mut rng, &format!("r{i}"))).collect();
    assert_eq!(augment_mismatches(&recs, 0.1), 0);
}
