//! Independent oracles for the isolated dynamics: direct minimization over
//! the readout and finite differences.

use grokdyn_core::data::Dataset;
use grokdyn_core::effective::{
    check_instance, cost_r, gradcheck, grad_r, init_embedding, ridge_cost, theorem4_check, CheckInstance,
};
use grokdyn_core::net::Activation;
use grokdyn_core::Matrix;

/// Conjugate gradient on `(H^T H + lambda I) W = H^T Y`, one column at a
/// time, started from zero so the iterates stay in the row space of `H`.
fn cg_readout(h: &Matrix, y: &Matrix, lambda: f64) -> Matrix {
    let d = h.ncols();
    let apply = |v: &Matrix| h.transpose() * (h * v) + v * lambda;
    let mut w = Matrix::zeros(d, y.ncols());
    for c in 0..y.ncols() {
        let b = h.transpose() * y.column(c);
        let mut x = Matrix::zeros(d, 1);
        let mut r = Matrix::from_column_slice(d, 1, b.as_slice());
        let mut dir = r.clone();
        let mut rs = r.norm_squared();
        for _ in 0..10 * d {
            if rs.sqrt() < 1e-14 * b.norm() {
                break;
            }
            let ad = apply(&dir);
            let alpha = rs / dir.dot(&ad);
            x += &dir * alpha;
            r -= ad * alpha;
            let next = r.norm_squared();
            dir = &r + &dir * (next / rs);
            rs = next;
        }
        w.set_column(c, &x.column(0));
    }
    w
}

#[test]
fn cost_matches_direct_minimization() {
    let data = Dataset::new(7).unwrap().split(0.7, 3).unwrap();
    let (x, y) = data.train_xy();
    let lambda = 1e-8;
    for seed in 0..3 {
        let e = init_embedding(7, 32, seed);
        let h = Activation::Relu.apply_matrix(&(&x * &e));
        let w = cg_readout(&h, &y, lambda);
        let direct = lambda * (e.norm_squared() + w.norm_squared());
        let r = cost_r(&e, &x, &y, lambda, Activation::Relu).unwrap();
        assert!((r - direct).abs() < 1e-4 * direct, "seed {seed}: {r} vs {direct}");
    }
}

#[test]
fn ridge_cost_matches_direct_minimization() {
    let inst = check_instance(5, 16, Activation::Relu, 4).unwrap();
    for lambda in [1e-3, 1.0] {
        let h = Activation::Relu.apply_matrix(&(&inst.x * &inst.e));
        let w = cg_readout(&h, &inst.y, lambda);
        let direct = (&h * &w - &inst.y).norm_squared() + lambda * (inst.e.norm_squared() + w.norm_squared());
        let closed = ridge_cost(&inst.e, &inst.x, &inst.y, lambda, Activation::Relu).unwrap();
        assert!((closed - direct).abs() < 1e-9 * direct);
    }
}

#[test]
fn gradcheck_identity_activation() {
    for seed in 0..3 {
        let CheckInstance { e, x, y } = check_instance(7, 32, Activation::Identity, seed).unwrap();
        let err = gradcheck(&e, &x, &y, 0.01, Activation::Identity, 1e-6).unwrap();
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn gradcheck_relu_kink_free() {
    for seed in 0..3 {
        let CheckInstance { e, x, y } = check_instance(7, 32, Activation::Relu, seed).unwrap();
        let err = gradcheck(&e, &x, &y, 0.01, Activation::Relu, 1e-6).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn flipped_sign_fails_gradcheck() {
    // The descent direction must point downhill: +2 lambda dE is the wrong sign.
    let CheckInstance { e, x, y } = check_instance(7, 32, Activation::Identity, 0).unwrap();
    let lambda = 0.01;
    let analytic = grad_r(&e, &x, &y, Activation::Identity).unwrap() * (2.0 * lambda);
    let h = 1e-6;
    let mut probe = e.clone();
    probe[(0, 0)] += h;
    let plus = cost_r(&probe, &x, &y, lambda, Activation::Identity).unwrap();
    probe[(0, 0)] -= 2.0 * h;
    let minus = cost_r(&probe, &x, &y, lambda, Activation::Identity).unwrap();
    let fd = (plus - minus) / (2.0 * h);
    assert!((fd + analytic[(0, 0)]).abs() < 1e-6 * fd.abs().max(1e-12));
}

#[test]
fn envelope_identity_on_random_instances() {
    for seed in 0..10u64 {
        let lambda = if seed % 2 == 0 { 1e-3 } else { 1.0 };
        let CheckInstance { e, x, y } = check_instance(5, 16, Activation::Relu, 100 + seed).unwrap();
        let res = theorem4_check(&e, &x, &y, lambda, Activation::Relu, 1e-6).unwrap();
        assert!(res < 1e-4, "seed {seed} lambda {lambda}: {res}");
    }
}
