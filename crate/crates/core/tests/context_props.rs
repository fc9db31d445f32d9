use ctxforge::context::{biregular, context_update, sparse_ci_sample, SamplerConfig};
use ctxforge::imageops::{composite, uniform_noise_image, Image};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn valid_triple() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=64, 1usize..=64)
        .prop_flat_map(|(n, m)| {
            let es: Vec<usize> = (1..=n.max(m)).filter(|e| (m * e) % n == 0).collect();
            (Just(n), Just(m), proptest::sample::select(es))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn biregular_degrees_are_exact((n, m, e) in valid_triple(), seed in any::<u64>()) {
        let d = m * e / n;
        let g = biregular(n, d, m, e, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(g.edges.len(), m * e);
        prop_assert!(g.context_degrees().iter().all(|&k| k == e));
        prop_assert!(g.object_degrees().iter().all(|&k| k == d));
        for (j, chunk) in g.edges.chunks(e).enumerate() {
            prop_assert!(chunk.iter().all(|&(_, c)| c == j));
        }
    }

    #[test]
    fn indivisible_triples_error(n in 2usize..=64, m in 1usize..=64, e in 1usize..=64, seed in any::<u64>()) {
        prop_assume!((m * e) % n != 0);
        let err = biregular(n, m * e / n, m, e, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap_err();
        prop_assert!(err.to_string().contains("does not divide"));
    }

    #[test]
    fn labels_appear_degree_times_object_count(
        (n, m, e) in valid_triple(),
        labels in proptest::collection::vec(0u8..4, 64),
        seed in any::<u64>(),
    ) {
        let cfg = SamplerConfig { n, m, e, p: 0.5 };
        let mut next = 0usize;
        let out = sparse_ci_sample(
            |_| { next += 1; Ok((next - 1, labels[next - 1])) },
            |_| Ok(()),
            |o, _| Ok(*o),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        for l in 0..4u8 {
            let objects = labels[..n].iter().filter(|&&x| x == l).count();
            let emitted = out.iter().filter(|s| s.label == l).count();
            prop_assert_eq!(emitted, cfg.object_degree() * objects);
        }
        prop_assert!(out.iter().all(|s| s.input == s.object && labels[s.object] == s.label));
    }
}

#[test]
fn label_context_covariance_given_object_is_zero() {
    let cfg = SamplerConfig { n: 4, m: 4, e: 4, p: 0.5 };
    let object_labels = [0usize, 1, 1, 2];
    for seed in 0..50 {
        let mut next = 0usize;
        let out = sparse_ci_sample(
            |_| {
                next += 1;
                Ok((next - 1, object_labels[next - 1]))
            },
            |_| Ok(()),
            |_, _| Ok(()),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        let total = out.len() as f64;
        for ctx in 0..cfg.m {
            let mut cov = 0.0;
            for obj in 0..cfg.n {
                let edges: Vec<_> = out.iter().filter(|s| s.object == obj).collect();
                let k = edges.len() as f64;
                let ml = edges.iter().map(|s| s.label as f64).sum::<f64>() / k;
                let mc = edges.iter().map(|s| f64::from(u8::from(s.context == ctx))).sum::<f64>() / k;
                let c = edges.iter().map(|s| (s.label as f64 - ml) * (f64::from(u8::from(s.context == ctx)) - mc)).sum::<f64>() / k;
                cov += k / total * c;
            }
            assert_eq!(cov, 0.0, "seed {seed}, context {ctx}");
        }
    }
}

#[test]
fn pair_frequencies_are_uniform() {
    let (n, m, e) = (4, 4, 2);
    let runs = 2000;
    let mut counts = vec![0usize; n * m];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..runs {
        let g = biregular(n, m * e / n, m, e, &mut rng).unwrap();
        for (o, c) in g.edges {
            counts[o * m + c] += 1;
        }
    }
    let expected = runs as f64 * e as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 15 degrees of freedom; 37.7 is the 0.1% critical value.
    assert!(chi2 < 37.7, "chi-square {chi2:.1} for counts {counts:?}");
}

#[test]
fn chained_context_holds_two_renderings() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let square = |v: f32, lo: usize, hi: usize| {
        let alpha = (0..64).map(|i| if (lo..hi).contains(&(i / 8)) && (lo..hi).contains(&(i % 8)) { 1.0 } else { 0.0 }).collect();
        Image::filled(8, 8, 1, v).unwrap().with_alpha(Some(alpha)).unwrap()
    };
    let first = square(1.0, 0, 3);
    let second = square(0.0, 5, 8);
    let noise = uniform_noise_image(8, 8, 1, &mut rng).unwrap();
    let pass0 = composite(&first, &noise).unwrap();
    let ctx = context_update(std::slice::from_ref(&noise), std::slice::from_ref(&pass0), 1.0, &mut rng).unwrap();
    let pass1 = composite(&second, &ctx[0]).unwrap();
    for y in 0..8 {
        for x in 0..8 {
            let v = pass1.pixel(y, x, 0);
            let expect = if y < 3 && x < 3 {
                1.0
            } else if y >= 5 && x >= 5 {
                0.0
            } else {
                noise.pixel(y, x, 0)
            };
            assert_eq!(v, expect, "({y},{x})");
        }
    }
}
