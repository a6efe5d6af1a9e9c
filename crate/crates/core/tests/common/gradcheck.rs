//! Independent gradient oracle shared by the gradient and acceptance tests.

use gapsparse::model::{LossHead, Model, Targets};
use gapsparse::rng::Rng;
use gapsparse::tensor::Tensor;
use rand::Rng as _;

fn param(m: &mut Model, id: usize, which: usize, k: usize) -> &mut f64 {
    let l = m.linear_mut(id).unwrap();
    let d = if which == 0 {
        l.weight.data_mut()
    } else {
        l.bias.data_mut()
    };
    &mut d[k]
}

/// Central differences computed directly from the loss, independent of the
/// library's own finite-difference helper.
pub fn numeric_grad(model: &Model, x: &Tensor, t: &Targets, eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = model.clone();
    let n_lin = model.num_linear();
    for id in 0..n_lin {
        for which in 0..2 {
            let len = {
                let l = m.linear(id).unwrap();
                if which == 0 {
                    l.weight.len()
                } else {
                    l.bias.len()
                }
            };
            for k in 0..len {
                let orig = *param(&mut m, id, which, k);
                *param(&mut m, id, which, k) = orig + eps;
                let up = m.loss(x, t).unwrap();
                *param(&mut m, id, which, k) = orig - eps;
                let down = m.loss(x, t).unwrap();
                *param(&mut m, id, which, k) = orig;
                out.push((up - down) / (2.0 * eps));
            }
        }
    }
    out
}

pub fn analytic(model: &Model, x: &Tensor, t: &Targets) -> Vec<f64> {
    let (_, g) = model.loss_and_gradients(x, t).unwrap();
    g.layers
        .iter()
        .flat_map(|l| {
            l.weight
                .data()
                .iter()
                .chain(l.bias.data())
                .copied()
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn random_case(rng: &mut Rng) -> (Model, Tensor, Targets) {
    loop {
        let depth = rng.random_range(1..=3);
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..=7)).collect();
        let params: usize = sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        if params > 200 {
            continue;
        }
        let mut model = Model::mlp(&sizes, rng).unwrap();
        for l in model.linears_mut() {
            for b in l.bias.data_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let batch = rng.random_range(1..=5);
        let x = Tensor::new(
            vec![batch, sizes[0]],
            (0..batch * sizes[0])
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let classes = *sizes.last().unwrap();
        let t = if rng.random_bool(0.5) {
            Targets::Labels((0..batch).map(|_| rng.random_range(0..classes)).collect())
        } else {
            model.head = LossHead::SquaredError;
            Targets::Values(
                Tensor::new(
                    vec![batch, classes],
                    (0..batch * classes)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect(),
                )
                .unwrap(),
            )
        };
        return (model, x, t);
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
