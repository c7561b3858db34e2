use walk2kg_core::eval::time_stage;

fn spin(iterations: u64) -> u64 {
    (0..iterations).fold(0u64, |acc, i| std::hint::black_box(acc.wrapping_mul(6364136223846793005).wrapping_add(i)))
}

#[test]
fn fixed_spin_cpu_time_is_stable() {
    spin(10_000_000);
    let samples: Vec<f64> = (0..8).map(|_| time_stage("spin", || spin(10_000_000)).1.cpu_seconds).collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    let cv = var.sqrt() / mean;
    assert!(mean > 0.0);
    assert!(cv < 0.25, "coefficient of variation {cv:.3} over {samples:?}");
}
