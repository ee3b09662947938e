use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use poddl::analysis::{absolute_errors, field_relative_error, impulse, Norm};
use poddl::config::RunConfig;
use poddl::container::Container;
use poddl::dataset::{load_snapshots, save_snapshots, GridMeta, SnapshotSet};
use poddl::partition::TimePartition;
use poddl::pipeline::Stages;

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0e3f64..1.0e3, len)
}

fn stages_strategy() -> impl Strategy<Value = (DVector<f64>, Stages)> {
    (2usize..40).prop_flat_map(|n| (vector(n), vector(n), vector(n), vector(n))).prop_map(|(u, p, a, d)| {
        (
            DVector::from_vec(u),
            Stages {
                interval: 0,
                pod: DVector::from_vec(p),
                ae: DVector::from_vec(a),
                poddl: DVector::from_vec(d),
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triangle_inequality_in_every_norm((u, s) in stages_strategy()) {
        for norm in Norm::ALL {
            let (pod, ae, nn, total) = absolute_errors(&u, &s, norm);
            prop_assert!(total <= pod + ae + nn, "{norm:?}: {total} > {pod} + {ae} + {nn}");
        }
    }

    #[test]
    fn field_error_is_scale_invariant(
        base in proptest::collection::vec(1.0f64..100.0, 1..30),
        noise in proptest::collection::vec(-1.0f64..1.0, 30),
        c in 1e-3f64..1e3,
    ) {
        let u = DVector::from_vec(base.clone());
        let v = DVector::from_iterator(base.len(), base.iter().zip(&noise).map(|(b, n)| b + n));
        let e1 = field_relative_error(&u, &v).unwrap();
        let e2 = field_relative_error(&(&u * c), &(&v * c)).unwrap();
        for (a, b) in e1.iter().zip(e2.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn impulse_is_additive_over_subintervals(
        vals in proptest::collection::vec(-50.0f64..50.0, 3..40),
        split in 1usize..38,
    ) {
        let n = vals.len();
        let m = split.min(n - 2) + 1;
        let times: Vec<f64> = (0..n).map(|i| 0.01 * i as f64 + 1e-3 * (i as f64).sqrt()).collect();
        let p0 = 10.0;
        let fields = DMatrix::from_row_slice(1, n, &vals.iter().map(|v| p0 + v).collect::<Vec<_>>());
        let whole = impulse(&times, &fields, p0).unwrap();
        let head = impulse(&times[..=m], &fields.columns(0, m + 1).into_owned(), p0).unwrap();
        let tail = impulse(&times[m..], &fields.columns(m, n - m).into_owned(), p0).unwrap();
        let sum = head[(0, m)] + tail[(0, n - m - 1)];
        prop_assert!((whole[(0, n - 1)] - sum).abs() <= 1e-12 * whole[(0, n - 1)].abs().max(1.0));
        for c in 1..n {
            prop_assert!(whole[(0, c)] >= whole[(0, c - 1)]);
        }
    }

    #[test]
    fn every_time_has_exactly_one_interval(
        gaps in proptest::collection::vec(0.01f64..1.0, 1..8),
        frac in 0.0f64..=1.0,
    ) {
        let mut b = vec![0.5];
        for g in &gaps {
            b.push(b.last().unwrap() + g);
        }
        let p = TimePartition::new(b.clone()).unwrap();
        let t = b[0] + frac * (b[b.len() - 1] - b[0]);
        let j = p.locate_interval(t).unwrap();
        let owners: Vec<usize> = (0..p.n_intervals()).filter(|&k| p.window(k).contains(t)).collect();
        prop_assert_eq!(owners, vec![j]);
    }

    #[test]
    fn container_round_trip(
        rows in 1usize..6,
        cols in 1usize..6,
        vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 36),
        seed in 0u64..i64::MAX as u64,
    ) {
        let mut c = Container::new();
        c.set("seed", seed);
        c.put("m", DMatrix::from_row_slice(rows, cols, &vals[..rows * cols]));
        let bytes = c.to_bytes("prop", (1, 0));
        let back = Container::from_bytes(&bytes, "prop", 1).unwrap();
        prop_assert_eq!(back.parse::<u64>("seed").unwrap(), seed);
        prop_assert_eq!(back.section("m").unwrap(), c.section("m").unwrap());
    }

    #[test]
    fn config_seed_round_trips(seed in 0u64..=i64::MAX as u64) {
        let cfg = RunConfig { seed, ..RunConfig::desk() };
        prop_assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn snapshot_files_round_trip_bit_exact(
        n_mu in 1usize..4,
        n_t in 1usize..5,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = GridMeta { nx: 3, ny: 2, dx: 0.5, dy: 0.25, origin: (1.0, -2.0), obstacle: None };
        let states = DMatrix::from_fn(6, n_mu * n_t, |_, _| rng.random_range(-1e6..1e6) * rng.random::<f64>());
        let times: Vec<f64> = (0..n_t).map(|i| 0.1 + i as f64 / 3.0).collect();
        let params: Vec<f64> = (0..n_mu).map(|k| k as f64 * 1.1 - 0.7).collect();
        let set = SnapshotSet::new(states, times, params, grid, 101325.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.manifest");
        save_snapshots(&set, &path).unwrap();
        let back = load_snapshots(&path).unwrap();
        prop_assert_eq!(back.states(), set.states());
        prop_assert_eq!(back.times(), set.times());
        prop_assert_eq!(back.params(), set.params());
        prop_assert_eq!(back.digest(), set.digest());
    }
}
