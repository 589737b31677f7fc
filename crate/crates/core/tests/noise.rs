mod common;

use common::FS;
use stn::median::MedianConfig;
use stn::noise::noise_tonalness_histogram;
use stn::spectral::StftConfig;

#[test]
fn histogram_converges_with_instances() {
    let cfg = StftConfig::with_quarter_hop(512, FS).unwrap();
    let median = MedianConfig::default();
    let h50 = noise_tonalness_histogram(50, 1.0, &cfg, &median, 100, 3).unwrap();
    let h100 = noise_tonalness_histogram(100, 1.0, &cfg, &median, 100, 3).unwrap();
    let worst = h50
        .normalized_counts
        .iter()
        .zip(&h100.normalized_counts)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "{worst}");
}

#[test]
fn seeds_change_counts_but_not_shape() {
    let cfg = StftConfig::with_quarter_hop(512, FS).unwrap();
    let median = MedianConfig::default();
    let a = noise_tonalness_histogram(20, 0.5, &cfg, &median, 100, 1).unwrap();
    let b = noise_tonalness_histogram(20, 0.5, &cfg, &median, 100, 2).unwrap();
    assert_ne!(a, b);
    assert!((a.mass_between(0.25, 0.75) - b.mass_between(0.25, 0.75)).abs() < 0.01);
}
