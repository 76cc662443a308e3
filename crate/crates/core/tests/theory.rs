use pld_core::theory::{simulate_lambda, theorem_expectation, TheoremParams};

#[test]
fn single_candidate_matches_simulation() {
    for (i, &(n, m, sigma)) in [(20, 2, 0.2), (50, 10, 0.5), (7, 7, 0.3), (3, 9, 1.0)]
        .iter()
        .enumerate()
    {
        let p = TheoremParams {
            n,
            m,
            mu1: 0.5,
            mu2: 1.5,
            sigma,
            k: 1,
            tau: 0.5,
        };
        let closed = theorem_expectation(&p).unwrap();
        let mc = simulate_lambda(&p, 100_000, i as u64).unwrap();
        assert!(
            (closed - mc.mean).abs() <= 4.0 * mc.stderr,
            "{p:?}: {closed} vs {mc:?}"
        );
    }
}

/// Grid with n/m >= 5, k in [3, 20], sigma <= gap/2 and, additionally,
/// sigma/tau <= 0.15. The inequality does not hold once the scaled spread
/// sigma/tau grows much beyond that.
#[test]
fn resampling_beats_uniform_on_small_spread_grid() {
    for &(n, m) in &[
        (20, 4),
        (25, 5),
        (50, 10),
        (50, 2),
        (100, 5),
        (100, 10),
        (200, 10),
    ] {
        for &gap in &[0.5, 1.0, 2.0] {
            for &(sigma, tau) in &[
                (0.0, 0.1),
                (0.01, 0.1),
                (0.05, 0.5),
                (0.1, 1.0),
                (0.15, 1.0),
                (0.2, 2.0),
            ] {
                if sigma > 0.5 * gap {
                    continue;
                }
                for k in 3..=20 {
                    let p = TheoremParams {
                        n,
                        m,
                        mu1: 1.0,
                        mu2: 1.0 + gap,
                        sigma,
                        k,
                        tau,
                    };
                    let uniform = (n as f64 - m as f64) / (n + m) as f64;
                    let e = theorem_expectation(&p).unwrap();
                    assert!(e > uniform, "{p:?}: {e} <= {uniform}");
                }
            }
        }
    }
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let p = TheoremParams {
        n: 30,
        m: 6,
        mu1: 1.0,
        mu2: 2.0,
        sigma: 0.3,
        k: 5,
        tau: 0.5,
    };
    assert_eq!(
        simulate_lambda(&p, 5000, 9).unwrap(),
        simulate_lambda(&p, 5000, 9).unwrap()
    );
    assert_ne!(
        simulate_lambda(&p, 5000, 9).unwrap(),
        simulate_lambda(&p, 5000, 10).unwrap()
    );
}
