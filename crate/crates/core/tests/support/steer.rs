//! Hand-built feed-forward policy that drives at full speed and turns in
//! proportion to the goal bearing. Lidar is ignored.

use navrl::nn::{NetworkShape, PolicyWeights};

fn set(w: &mut PolicyWeights, name: &str, row: usize, col: usize, value: f64) {
    let t = w.tensors().iter().find(|t| t.name == name).unwrap().clone();
    let cols = if t.shape.len() == 2 { t.shape[1] } else { 1 };
    let k = t.offset + row * cols + col;
    w.params_mut()[k] = value;
}

pub fn steering_policy(beams: usize) -> PolicyWeights {
    let shape = NetworkShape { input_dim: beams + 4, hidden: vec![2], ..NetworkShape::default() };
    let mut w = PolicyWeights::zeros(shape).unwrap();
    // unit 0 = bearing/π + 5 stays in ELU's linear range, unit 1 = 1
    set(&mut w, "mlp.0.weight", beams + 1, 0, 1.0);
    set(&mut w, "mlp.0.bias", 0, 0, 5.0);
    set(&mut w, "mlp.0.bias", 1, 0, 1.0);
    set(&mut w, "mu.weight", 1, 0, 10.0);
    set(&mut w, "mu.weight", 0, 1, 3.0);
    set(&mut w, "mu.bias", 1, 0, -15.0);
    w
}
