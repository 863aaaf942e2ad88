//! Analytic gradients against central finite differences in f64.

use std::rc::Rc;

use gpdnet::geometry::{add_gaussian_noise, sample_primitive, Primitive};
use gpdnet::graph::NeighborGraph;
use gpdnet::network::{GpdNet, GpdNetConfig, GraphContext, GraphMode, Mode};
use gpdnet::tensor::gradcheck::{central_difference, relative_error};
use gpdnet::tensor::{Tape, Tensor, Var};
use gpdnet::training::{loss_mse, loss_mse_sp, nearest_clean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

pub const LINEAR_TOL: f64 = 1e-5;
pub const NONLINEAR_TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Worst per-input relative error of `op`, reduced to a scalar through a
/// fixed random projection.
fn check_op(inputs: &[Tensor<f64>], op: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let eval = |vals: &[Tensor<f64>], tape: &mut Tape<f64>| {
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let out = op(tape, &vars);
        (vars, out)
    };
    let mut probe_tape = Tape::new();
    let (_, out) = eval(inputs, &mut probe_tape);
    let weights = random(probe_tape.value(out).shape(), &mut rng);
    let reduce = |tape: &mut Tape<f64>, out: Var| {
        let w = tape.constant(weights.clone());
        let p = tape.mul(out, w).unwrap();
        tape.sum(p)
    };

    let mut tape = Tape::new();
    let (vars, out) = eval(inputs, &mut tape);
    let loss = reduce(&mut tape, out);
    let grads = tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let numeric = central_difference(
            |x| {
                let mut vals = inputs.to_vec();
                vals[i] = Tensor::new(inputs[i].shape().to_vec(), x.to_vec()).unwrap();
                let mut t = Tape::new();
                let (_, o) = eval(&vals, &mut t);
                let l = reduce(&mut t, o);
                t.value(l).data()[0]
            },
            inputs[i].data(),
            H,
        );
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

pub fn linear_ops() -> Vec<(&'static str, f64)> {
    let mut r = rng();
    let a = random(&[4, 3], &mut r);
    let b = random(&[3, 5], &mut r);
    let c = random(&[5, 3], &mut r);
    let a2 = random(&[4, 3], &mut r);
    let bias = random(&[3], &mut r);
    let mut out = vec![
        ("matmul", check_op(&[a.clone(), b], |t, v| t.matmul(v[0], v[1]).unwrap())),
        ("matmul_nt", check_op(&[a.clone(), c], |t, v| t.matmul_nt(v[0], v[1]).unwrap())),
        ("add_bias", check_op(&[a.clone(), bias], |t, v| t.add_bias(v[0], v[1]).unwrap())),
        ("add", check_op(&[a.clone(), a2.clone()], |t, v| t.add(v[0], v[1]).unwrap())),
        ("sub", check_op(&[a.clone(), a2], |t, v| t.sub(v[0], v[1]).unwrap())),
        ("scale", check_op(&[a.clone()], |t, v| t.scale(v[0], -2.5))),
        ("sum", check_op(&[a.clone()], |t, v| t.sum(v[0]))),
        ("mean", check_op(&[a.clone()], |t, v| t.mean(v[0]))),
        (
            "gather_rows",
            check_op(&[a.clone()], |t, v| t.gather_rows(v[0], Rc::from(vec![3, 0, 0, 2, 1])).unwrap()),
        ),
        (
            "segment_mean",
            check_op(&[a.clone()], |t, v| t.segment_mean(v[0], Rc::from(vec![0, 0, 2, 2]), 3).unwrap()),
        ),
        (
            "index_select",
            check_op(&[a], |t, v| t.index_select(v[0], Rc::from(vec![11, 0, 5, 5, 7, 2]), vec![2, 3]).unwrap()),
        ),
    ];
    let den = random(&[8, 3], &mut r);
    let clean = random(&[8, 3], &mut r);
    out.push(("loss_mse", check_op(&[den], |t, v| loss_mse(t, v[0], &clean).unwrap())));
    out
}

pub fn nonlinear_ops() -> Vec<(&'static str, f64)> {
    let mut r = rng();
    let a = random(&[5, 3], &mut r);
    let a2 = random(&[5, 3], &mut r);
    let scale = random(&[3], &mut r);
    let shift = random(&[3], &mut r);
    let (rank, f_out, f_in, e) = (2, 3, 4, 6);
    let coeffs = random(&[e, rank * (f_out + f_in + 1)], &mut r);
    let src = random(&[e, f_in], &mut r);
    let gamma = random(&[e], &mut r);
    let running_mean = [0.1, -0.2, 0.3];
    let running_var = [0.5, 1.5, 2.0];
    let mut out = vec![
        ("mul", check_op(&[a.clone(), a2], |t, v| t.mul(v[0], v[1]).unwrap())),
        ("leaky_relu", check_op(&[a.clone()], |t, v| t.leaky_relu(v[0], 0.2))),
        ("exp", check_op(&[a.clone()], |t, v| t.exp(v[0]))),
        ("row_squared_norm", check_op(&[a.clone()], |t, v| t.row_squared_norm(v[0]).unwrap())),
        (
            "batch_norm train",
            check_op(&[a.clone(), scale.clone(), shift.clone()], |t, v| {
                t.batch_norm(v[0], v[1], v[2], 1e-5, None).unwrap().0
            }),
        ),
        (
            "batch_norm eval",
            check_op(&[a, scale, shift], |t, v| {
                t.batch_norm(v[0], v[1], v[2], 1e-5, Some((&running_mean, &running_var)))
                    .unwrap()
                    .0
            }),
        ),
        (
            "low_rank_message",
            check_op(&[coeffs, src, gamma], |t, v| {
                t.low_rank_message(v[0], v[1], v[2], rank, f_out, f_in).unwrap()
            }),
        ),
    ];
    let den = random(&[8, 3], &mut r);
    let clean = random(&[8, 3], &mut r);
    // the nearest assignment is fixed at the unperturbed point
    let fixed = nearest_clean(&den, &clean, 4).unwrap();
    let sp = check_op(&[den], |t, v| {
        let l = loss_mse_sp(t, v[0], &clean, 4, 0.7).unwrap();
        let now = nearest_clean(t.value(v[0]), &clean, 4).unwrap();
        assert_eq!(now, fixed, "perturbation changed the nearest assignment");
        l
    });
    out.push(("loss_mse_sp", sp));
    out
}

pub struct ModelCheck {
    /// Relative error per parameter tensor.
    pub errors: Vec<(String, f64)>,
    /// Pre-normalization biases: largest analytic and numeric gradient
    /// magnitude, both expected to vanish.
    pub cancelled: Vec<(String, f64, f64)>,
    pub skipped: usize,
    pub total: usize,
}

impl ModelCheck {
    pub fn passes(&self) -> bool {
        self.errors.iter().all(|(_, e)| *e < NONLINEAR_TOL)
            && self.cancelled.iter().all(|(_, a, n)| *a < 1e-12 && *n < 1e-8)
            && self.skipped * 20 < self.total
    }

    pub fn worst(&self) -> f64 {
        self.errors.iter().map(|e| e.1).fold(0.0, f64::max)
    }
}

/// Finite differences of the full tiny model, one parameter element at a
/// time. Elements whose perturbation flips a leaky-ReLU input sign are
/// skipped, as the function is not differentiable across that kink.
pub fn full_tiny_model() -> ModelCheck {
    let cfg = GpdNetConfig::tiny();
    let net = GpdNet::<f64>::new(cfg.clone(), 11).unwrap();
    let clean = sample_primitive(Primitive::torus(), 32, 5).unwrap();
    let noisy = add_gaussian_noise(&clean, 0.05, 6).unwrap();
    let points = noisy.points().to_vec();
    let input = Tensor::new([32, 3], points.iter().flatten().copied().collect()).unwrap();
    let target = Tensor::new([32, 3], clean.points().iter().flatten().copied().collect()).unwrap();
    let ctx = GraphContext::build(&[&points], &cfg, GraphMode::Dynamic).unwrap();

    let loss_of = |net: &GpdNet<f64>, frozen: Option<&[NeighborGraph]>| {
        let mut tape = Tape::new();
        let vars = net.params().register(&mut tape);
        let x = tape.constant(input.clone());
        let out = net.forward(&mut tape, &vars, x, &ctx, Mode::Train, frozen).unwrap();
        let l = loss_mse(&mut tape, out.denoised, &target).unwrap();
        (tape, vars, l, out.graphs)
    };
    let (tape, vars, loss, graphs) = loss_of(&net, None);
    let base_pattern = tape.activation_pattern();
    let grads = tape.backward(loss).unwrap();

    let mut report = ModelCheck {
        errors: Vec::new(),
        cancelled: Vec::new(),
        skipped: 0,
        total: 0,
    };
    for (id, v) in vars.iter().enumerate() {
        let name = net.params().name(id).to_string();
        let analytic = grads.get(*v).unwrap().data().to_vec();
        let mut numeric = Vec::new();
        let mut kept = Vec::new();
        let values = net.params().value(id).data().to_vec();
        for (e, &orig) in values.iter().enumerate() {
            let eval = |x: f64| {
                let mut n = net.clone();
                n.params_mut().value_mut(id).data_mut()[e] = x;
                let (t, _, l, _) = loss_of(&n, Some(&graphs));
                (t.value(l).data()[0], t.activation_pattern() == base_pattern)
            };
            let (plus, smooth_plus) = eval(orig + H);
            let (minus, smooth_minus) = eval(orig - H);
            report.total += 1;
            if smooth_plus && smooth_minus {
                numeric.push((plus - minus) / (2.0 * H));
                kept.push(analytic[e]);
            } else {
                report.skipped += 1;
            }
        }
        if name.starts_with("point") && name.ends_with(".bias") {
            // cancelled exactly by the following batch norm
            let max = |v: &[f64]| v.iter().map(|g| g.abs()).fold(0.0, f64::max);
            report.cancelled.push((name, max(&kept), max(&numeric)));
            continue;
        }
        report.errors.push((name, relative_error(&kept, &numeric)));
    }
    report
}
