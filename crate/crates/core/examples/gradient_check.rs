//! Backpropagated gradients against central finite differences for both loss
//! heads.

use gapsparse::model::{finite_diff_grad, LossHead, Model, Targets};
use gapsparse::rng::{rng_for, stream};
use gapsparse::tensor::Tensor;

fn main() -> gapsparse::Result<()> {
    let mut rng = rng_for(11, stream::INIT, 0, 0);
    let x = Tensor::new(
        vec![4, 5],
        (0..20).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect(),
    )?;
    let cases = [
        (
            LossHead::SoftmaxCrossEntropy,
            Targets::Labels(vec![0, 2, 1, 2]),
        ),
        (
            LossHead::SquaredError,
            Targets::Values(Tensor::new(
                vec![4, 3],
                (0..12).map(|i| i as f64 / 12.0).collect(),
            )?),
        ),
    ];
    for (head, targets) in cases {
        let mut model = Model::mlp(&[5, 6, 6, 3], &mut rng)?;
        model.head = head;
        let (loss, grads) = model.loss_and_gradients(&x, &targets)?;
        let numeric = finite_diff_grad(&model, &x, &targets, 1e-6)?;
        let mut worst = 0.0f64;
        for (a, b) in grads.layers.iter().zip(&numeric.layers) {
            let pairs = a.weight.data().iter().zip(b.weight.data());
            for (g, n) in pairs.chain(a.bias.data().iter().zip(b.bias.data())) {
                worst = worst.max((g - n).abs() / g.abs().max(n.abs()).max(1e-6));
            }
        }
        println!("{head:?}: loss {loss:.5}, max relative error {worst:.2e}");
    }
    Ok(())
}
