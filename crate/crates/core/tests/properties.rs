use grokdyn_core::effective::init_embedding;
use grokdyn_core::fourier::{dft_embedding, parseval_pair};
use grokdyn_core::linalg::{cosine, pseudo_inverse, DEFAULT_RCOND};
use grokdyn_core::net::{forward, Activation, NetParams};
use grokdyn_core::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(d_in: usize, d_h: usize, d_out: usize, seed: u64) -> NetParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NetParams::init_uniform(d_in, d_h, d_out, Activation::Relu, &mut rng)
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flatten_round_trip(d_in in 1usize..6, d_h in 1usize..9, d_out in 1usize..5, seed in any::<u64>()) {
        let p = params(d_in, d_h, d_out, seed);
        let back = NetParams::from_flat(&p.flatten(), p.activation).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn hidden_permutation_leaves_outputs(d_h in 2usize..10, seed in any::<u64>(), shift in 1usize..9) {
        let p = params(4, d_h, 3, seed);
        let perm: Vec<usize> = (0..d_h).map(|j| (j + shift) % d_h).collect();
        let w1 = p.w1.select_columns(&perm);
        let w2 = p.w2.select_rows(&perm);
        let q = NetParams::new(w1, w2, p.activation).unwrap();
        let x = init_embedding(5, 4, seed ^ 1);
        let a = forward(&p, &x).unwrap().output;
        let b = forward(&q, &x).unwrap().output;
        prop_assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn penrose_identities(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let a = init_embedding(rows, cols, seed);
        let g = pseudo_inverse(&a, DEFAULT_RCOND).unwrap();
        prop_assert!(rel(&(&a * &g * &a), &a) < 1e-8);
        prop_assert!(rel(&(&g * &a * &g), &g) < 1e-8);
        let ag = &a * &g;
        let ga = &g * &a;
        prop_assert!(rel(&ag.transpose(), &ag) < 1e-8);
        prop_assert!(rel(&ga.transpose(), &ga) < 1e-8);
    }

    #[test]
    fn cosine_is_bounded(v in prop::collection::vec(-1e3f64..1e3, 1..20), seed in any::<u64>()) {
        let w = init_embedding(1, v.len(), seed);
        let c = cosine(&v, w.as_slice());
        prop_assert!(c.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn dft_round_trip_and_parseval(half in 1usize..20, d in 1usize..12, seed in any::<u64>()) {
        let p = 2 * half + 1;
        let e = init_embedding(p, d, seed);
        let ff = dft_embedding(&e, p).unwrap();
        prop_assert_eq!(ff.len(), half);
        prop_assert!((ff.reconstruct() - &e).amax() < 1e-10);
        let (direct, spectral) = parseval_pair(&e, &ff);
        prop_assert!((direct - spectral).abs() <= 1e-8 * direct.max(1e-300));
    }
}
