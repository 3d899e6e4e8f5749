use clipnet::nn::{Activation, MlpSpec};
use clipnet::theory::*;

fn class(depth: usize, width: usize, bound: f64, sparsity: f64, delta: f64, tau: f64) -> ClassParams {
    ClassParams {
        depth,
        width,
        bound,
        sparsity,
        delta,
        tau,
        output_bound: 1.0,
    }
}

#[test]
fn clipped_bound_approaches_plain_as_tau_vanishes() {
    let p = class(3, 10, 2.0, 50.0, 0.5, 0.0);
    let plain = covering_bound(&p).unwrap().log_covering;
    let zeta = p.zeta();
    let mut prev_gap = f64::INFINITY;
    for k in 1..12 {
        let tau = 0.4 / zeta * 10f64.powi(-k);
        let clipped = covering_bound_clipped(&ClassParams { tau, ..p }).unwrap().log_covering;
        let gap = clipped - plain;
        assert!(gap >= 0.0);
        assert!(gap < prev_gap);
        prev_gap = gap;
    }
    assert!(prev_gap < 1e-9 * plain.abs());
}

#[test]
fn lipschitz_holds_on_fixed_architectures() {
    for (d, widths) in [(1, vec![4]), (3, vec![2, 4]), (2, vec![1, 1])] {
        let spec = MlpSpec::new(d, widths, Activation::Relu).unwrap();
        let r = verify_lipschitz(&spec, 2.0, 50, 2000, 7).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio <= 1.0);
    }
}

#[test]
fn input_wider_than_hidden_layers() {
    // with d = 3 > N = 1 the fan-in of the first layer exceeds N
    let spec = MlpSpec::new(3, vec![1], Activation::Relu).unwrap();
    let r = verify_lipschitz(&spec, 1.0, 200, 1000, 3).unwrap();
    assert_eq!(r.violations, 0);
}

#[test]
fn identity_error_decreases_with_k() {
    let act = Activation::Sigmoid;
    let t = default_expansion_point(act).unwrap();
    let base = identity_net(0.0, 1e-2, act, None).unwrap();
    let errs: Vec<f64> = (0..4)
        .map(|i| identity_error(act, t, base.k * 2f64.powi(i), 0.0, 1e-2).unwrap())
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
}

#[test]
fn identity_for_every_smooth_activation() {
    for act in Activation::CATALOGUE {
        let r = identity_net(0.25, 1e-3, act, None);
        match act {
            Activation::Identity | Activation::Relu | Activation::LeakyRelu(_) => assert!(r.is_err()),
            _ => {
                let net = r.unwrap_or_else(|e| panic!("{act}: {e}"));
                assert!(net.sup_error <= 1e-3, "{act}");
                assert!(net.c1 >= 1.0);
            }
        }
    }
}

#[test]
fn hard_threshold_sandwich_on_random_vectors() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let p = rng.random_range(1..30);
        let tau = rng.random_range(1e-3..2.0);
        let theta: Vec<f64> = (0..p)
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    0.0
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let kept = hard_threshold(&theta, tau).unwrap();
        let c = clipnet::penalty::clipped_norm(&theta, tau).unwrap();
        assert!(clipnet::penalty::l0_norm(&kept) as f64 <= c);
        assert!(c <= clipnet::penalty::l0_norm(&theta) as f64);
    }
}
