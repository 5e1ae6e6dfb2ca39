//! Statistical properties of the special flow under its invariant measure.

use mixlab_core::{
    catalog, certify_roof, flow_at, preimage_measure, sample_measure, solve_roof, Cube, FlowPoint, SkewShift,
};

#[test]
fn flow_preserves_the_measure_of_cubes() {
    let f = SkewShift::golden(0.1);
    let roof = certify_roof(&catalog::cosine_sine_roof(1, 1, 3.0)).unwrap();
    let cubes = [
        Cube::new((0.0, 0.5), (0.0, 0.5), 0.5).unwrap(),
        Cube::new((0.2, 0.9), (0.4, 0.6), 0.9).unwrap(),
        Cube::new((0.0, 1.0), (0.0, 1.0), 0.2).unwrap(),
    ];
    for (i, q) in cubes.iter().enumerate() {
        for t in [1.0, 10.0, 100.0] {
            let est = preimage_measure(&roof, &f, q, t, 20_000, 17 + i as u64).unwrap();
            let exact = q.measure(&roof);
            assert!(
                (est.value - exact).abs() <= 3.0 * est.std_error,
                "cube {i}, t = {t}: {} vs {exact} (stderr {})",
                est.value,
                est.std_error
            );
        }
    }
}

/// For a trivial roof `Φ = C + u∘f − u`, the height `z + u(x, y)` taken mod
/// `C` advances rigidly with time, so its correlations never decay.
#[test]
fn trivial_roofs_keep_their_height_correlations() {
    let f = SkewShift::golden(0.0);
    let poly = catalog::coboundary_roof(f.beta, 3.0);
    let roof = certify_roof(&poly).unwrap();
    let sol = solve_roof(&f, &poly, 1e-9).unwrap();
    let c = sol.mean.re;
    let height = |p: &FlowPoint| (p.z + sol.transfer.eval_real(p.x, p.y)).rem_euclid(c);
    let in_band = |p: &FlowPoint| height(p) < 0.5 * c;

    let samples = 20_000u64;
    let correlation = |t: f64| {
        let hits = (0..samples)
            .filter(|&i| {
                let p = sample_measure(&roof, 5, i);
                in_band(&p) && in_band(&flow_at(&roof, &f, &p, t))
            })
            .count();
        let p = hits as f64 / samples as f64;
        (p, (p * (1.0 - p) / samples as f64).sqrt())
    };
    for t in [0.9, 41.3, 250.0] {
        let (now, se_now) = correlation(t);
        let (later, se_later) = correlation(t + c);
        assert!((now - later).abs() <= 3.0 * se_now.max(se_later), "t = {t}: {now} vs {later}");
    }
    // Half a period apart, the band is carried onto its complement.
    let (half, _) = correlation(0.5 * c);
    assert!(half < 0.01, "{half}");
}
