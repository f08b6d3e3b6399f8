use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use xsensor::numerics::{check_gradients, Activation, GradCheck, ParamSet, Target, Tensor};

const STEP: f64 = 1e-3;
const TOL: f64 = 1e-3;
const COORDS: usize = 12;

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()).unwrap()
}

fn set(rng: &mut ChaCha8Rng, shapes: &[&[usize]]) -> ParamSet {
    let mut p = ParamSet::default();
    for (i, s) in shapes.iter().enumerate() {
        p.push(format!("p{i}"), normal(rng, s));
    }
    p
}

fn assert_close(name: &str, r: xsensor::Result<GradCheck>) -> Result<(), TestCaseError> {
    let r = r.map_err(|e| TestCaseError::fail(format!("{name}: {e}")))?;
    prop_assert!(r.max_rel_err() < TOL, "{}: {:?}", name, r.worst());
    Ok(())
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, usize, u64)> {
    (1usize..=2, 1usize..=4, 2usize..=8, 2usize..=8, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv2d_gradients((n, c, h, w, seed) in dims(), co in 1usize..=4, stride in 1usize..=2, pad in 0usize..=1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = set(&mut rng, &[&[n, c, h, w], &[co, c, 3, 3], &[co]]);
        prop_assume!(h + 2 * pad >= 3 && w + 2 * pad >= 3);
        assert_close("conv2d", check_gradients(&p, COORDS, STEP, seed, |t, v| t.conv2d(v[0], v[1], v[2], stride, pad)))?;
    }

    #[test]
    fn upsample_and_activation_gradients((n, c, h, w, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = set(&mut rng, &[&[n, c, h, w]]);
        assert_close("upsample2x", check_gradients(&p, COORDS, STEP, seed, |t, v| t.upsample2x(v[0])))?;
        for kind in [Activation::Relu, Activation::LeakyRelu, Activation::Sigmoid, Activation::Tanh] {
            assert_close(&format!("{kind:?}"), check_gradients(&p, COORDS, STEP, seed, |t, v| Ok(t.activation(v[0], kind))))?;
        }
        assert_close("exp", check_gradients(&p, COORDS, STEP, seed, |t, v| Ok(t.exp(v[0]))))?;
    }

    #[test]
    fn add_and_linear_gradients((n, c, h, w, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = set(&mut rng, &[&[n, c, h, w], &[n, c, h, w]]);
        assert_close("add", check_gradients(&p, COORDS, STEP, seed, |t, v| t.add(v[0], v[1])))?;
        let p = set(&mut rng, &[&[n * c, h], &[w, h], &[w]]);
        assert_close("linear", check_gradients(&p, COORDS, STEP, seed, |t, v| t.linear(v[0], v[1], v[2])))?;
    }

    #[test]
    fn adain_gradients((n, c, h, w, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = set(&mut rng, &[&[n, c, h, w], &[n, c], &[n, c]]);
        assert_close("adain", check_gradients(&p, COORDS, STEP, seed, |t, v| {
            let sigma = t.exp(v[2]);
            t.adain(v[0], v[1], sigma)
        }))?;
    }

    #[test]
    fn loss_gradients((n, c, h, w, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = set(&mut rng, &[&[n, c + 1, h, w]]);
        let targets: Vec<u8> = (0..n * h * w)
            .map(|_| if rng.random_bool(0.2) { 255 } else { rng.random_range(0..=c as u8) })
            .collect();
        prop_assume!(targets.iter().any(|&t| t != 255));
        assert_close("softmax_xent", check_gradients(&p, COORDS, STEP, seed, |t, v| t.softmax_xent(v[0], &targets, 255)))?;
        for target in [Target::Real, Target::Fake] {
            assert_close("log_loss", check_gradients(&p, COORDS, STEP, seed, |t, v| {
                let prob = t.activation(v[0], Activation::Sigmoid);
                t.log_loss(prob, target)
            }))?;
        }
        let weights: Vec<f32> = (0..n * (c + 1) * h * w).map(|_| rng.sample(StandardNormal)).collect();
        assert_close("weighted_sum", check_gradients(&p, COORDS, STEP, seed, |t, v| t.weighted_sum(v[0], weights.clone())))?;
    }
}
