mod common;

use common::{gradient_check_trial, straight_line_pair_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqlpattern::encoder::SiameseParams;

#[test]
fn oracle_forward_agrees_with_library_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = SiameseParams::random(3, 4, &mut rng);
    let a: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let b: Vec<Vec<f64>> = (0..2).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let ar: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
    let br: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
    let lib = params.pair_loss(&ar, &br, 2.0, None).unwrap();
    let oracle = straight_line_pair_loss(&params.to_flat(), 3, 4, &a, &b, 2.0);
    assert!((lib - oracle).abs() < 1e-12, "{lib} vs {oracle}");
}

#[test]
fn bptt_matches_finite_differences() {
    for (trial, hidden) in [2, 4, 8].into_iter().cycle().take(12).enumerate() {
        let err = gradient_check_trial(hidden, 100 + trial as u64, 1e-5);
        assert!(err < 1e-4, "hidden {hidden} trial {trial}: relative error {err:e}");
    }
}
