//! The tensor engine: AdaIN moment matching, a finite-difference gradient
//! check, and Adam with polynomial decay fitting a small linear model.

use xsensor::numerics::{
    adain_apply, check_gradients, instance_stats, AdamConfig, AdamState, ParamSet, PolySchedule, Tape, Tensor,
};

fn main() -> xsensor::Result<()> {
    let content = Tensor::new(&[1, 2, 4, 4], (0..32).map(|i| (i as f32 * 0.37).sin()).collect())?;
    let style = Tensor::new(&[1, 2, 4, 4], (0..32).map(|i| 0.5 + 0.1 * (i as f32 * 1.3).cos()).collect())?;
    let (mu, sigma) = instance_stats(&style)?;
    let out = adain_apply(&content, &mu, &sigma)?;
    let (m2, s2) = instance_stats(&out)?;
    println!("style  mean {:?} std {:?}", mu.data(), sigma.data());
    println!("output mean {:?} std {:?}", m2.data(), s2.data());

    let mut p = ParamSet::default();
    p.push("x", content.clone());
    p.push("mu", mu.clone());
    p.push("sigma", sigma.clone());
    let check = check_gradients(&p, 30, 1e-3, 7, |t, v| t.adain(v[0], v[1], v[2]))?;
    println!("adain gradient check: max rel err {:.2e}", check.max_rel_err());

    // fit y = 2a − b + 0.5
    let xs: Vec<[f32; 2]> = (0..32).map(|i| [(i as f32 * 0.3).sin(), (i as f32 * 0.7).cos()]).collect();
    let x = Tensor::new(&[32, 2], xs.iter().flatten().copied().collect())?;
    let y: Vec<f32> = xs.iter().map(|v| 2.0 * v[0] - v[1] + 0.5).collect();
    let mut params = ParamSet::default();
    params.push("w", Tensor::zeros(&[1, 2]));
    params.push("b", Tensor::zeros(&[1]));
    let mut adam = AdamState::new(&params, AdamConfig::default());
    let schedule = PolySchedule::new(0.1, 400, 0.9)?;
    for step in 0..400 {
        let mut tape = Tape::new();
        let v = params.bind(&mut tape, true);
        let xv = tape.input(x.clone());
        let pred = tape.linear(xv, v[0], v[1])?;
        // squared error through the engine: gradient of Σ (p − y)² is fed as weights
        let residual: Vec<f32> = tape.value(pred).data().iter().zip(&y).map(|(p, t)| 2.0 * (p - t) / 32.0).collect();
        let loss = tape.weighted_sum(pred, residual)?;
        let grads = tape.backward(loss)?.collect(&v);
        adam.step(&mut params, &grads, schedule.lr(step)?)?;
    }
    println!("fitted w {:?} b {:?}", params.tensors()[0].data(), params.tensors()[1].data());
    Ok(())
}
