//! Gradient check of the full tiny network in f64: analytic gradients of
//! the MSE loss against central finite differences, per parameter tensor.

use gpdnet::geometry::{add_gaussian_noise, sample_primitive, Primitive};
use gpdnet::network::{GpdNet, GpdNetConfig, GraphContext, GraphMode, Mode};
use gpdnet::tensor::gradcheck::{central_difference, relative_error};
use gpdnet::tensor::{Tape, Tensor};
use gpdnet::training::loss_mse;

fn main() -> gpdnet::Result<()> {
    let cfg = GpdNetConfig::tiny();
    let net = GpdNet::<f64>::new(cfg.clone(), 1)?;
    let clean = sample_primitive(Primitive::sphere(), 32, 2)?;
    let noisy = add_gaussian_noise(&clean, 0.05, 3)?;
    let points = noisy.points().to_vec();
    let input = Tensor::new([32, 3], points.iter().flatten().copied().collect())?;
    let target = Tensor::new([32, 3], clean.points().iter().flatten().copied().collect())?;
    let ctx = GraphContext::build(&[&points], &cfg, GraphMode::Dynamic)?;
    println!("tiny network: {} parameters", net.params().numel());

    let mut tape = Tape::new();
    let vars = net.params().register(&mut tape);
    let x = tape.constant(input.clone());
    let out = net.forward(&mut tape, &vars, x, &ctx, Mode::Train, None)?;
    let graphs = out.graphs.clone();
    let loss = loss_mse(&mut tape, out.denoised, &target)?;
    let grads = tape.backward(loss)?;

    for (id, v) in vars.iter().enumerate() {
        let numeric = central_difference(
            |x| {
                let mut n = net.clone();
                n.params_mut().value_mut(id).data_mut().copy_from_slice(x);
                let mut t = Tape::new();
                let vs = n.params().register(&mut t);
                let xi = t.constant(input.clone());
                let o = n.forward(&mut t, &vs, xi, &ctx, Mode::Train, Some(&graphs)).expect("forward");
                let l = loss_mse(&mut t, o.denoised, &target).expect("loss");
                t.value(l).data()[0]
            },
            net.params().value(id).data(),
            1e-4,
        );
        let analytic = grads.get(*v).expect("every parameter reaches the loss").data();
        println!("{:32} {:.2e}", net.params().name(id), relative_error(analytic, &numeric));
    }
    Ok(())
}
