use super::*;
use crate::testutil::{grad_check, rand_tensor, rng};

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn conv_zero_input_gives_zero_output() {
    let mut r = rng(1);
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 1, 3, 3]));
    let k = g.param(&rand_tensor(&mut r, &[1, 1, 3, 3]));
    let b = g.param(&Tensor::zeros(&[1]));
    let y = g.conv2d(x, k, b).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv_identity_kernel_is_identity() {
    let mut r = rng(2);
    let input = rand_tensor(&mut r, &[2, 1, 4, 5]);
    let mut kernel = Tensor::zeros(&[1, 1, 3, 3]);
    kernel.data_mut()[4] = 1.0;
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let k = g.constant(kernel);
    let b = g.constant(Tensor::zeros(&[1]));
    let y = g.conv2d(x, k, b).unwrap();
    assert_eq!(g.value(y).data(), input.data());
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 4, 4]));
    let k = g.constant(Tensor::zeros(&[3, 1, 3, 3]));
    let b = g.constant(Tensor::zeros(&[3]));
    assert!(matches!(g.conv2d(x, k, b), Err(Error::Dimension(_))));
    let k5 = g.constant(Tensor::zeros(&[3, 2, 5, 5]));
    assert!(matches!(g.conv2d(x, k5, b), Err(Error::Dimension(_))));
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut r = rng(3);
    let inputs = [
        rand_tensor(&mut r, &[1, 2, 5, 5]),
        rand_tensor(&mut r, &[4, 2, 3, 3]),
        rand_tensor(&mut r, &[4]),
    ];
    let err = grad_check(&inputs, |g, v| {
        let y = g.conv2d(v[0], v[1], v[2])?;
        g.sum(y)
    });
    assert!(err < 1e-4, "relative error {err}");
    // A non-linear loss exercises non-uniform upstream gradients.
    let err = grad_check(&inputs, |g, v| {
        let y = g.conv2d(v[0], v[1], v[2])?;
        let sq = g.mul(y, y)?;
        g.mean(sq)
    });
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn dense_hand_computed_case() {
    let mut g = Graph::new();
    let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
    let w = g.constant(t(&[2, 2], &[3.0, 0.0, 0.0, 5.0]));
    let b = g.constant(t(&[2], &[1.0, 1.0]));
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[4.0, 11.0]);

    let eye = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let zero = g.constant(Tensor::zeros(&[2]));
    let y = g.dense(x, eye, zero).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, 2.0]);

    let bad = g.constant(Tensor::zeros(&[2, 3]));
    assert!(g.dense(x, bad, b).is_err());
}

#[test]
fn dense_gradients_match_finite_differences() {
    let mut r = rng(4);
    let inputs = [rand_tensor(&mut r, &[3, 4]), rand_tensor(&mut r, &[5, 4]), rand_tensor(&mut r, &[5])];
    let err = grad_check(&inputs, |g, v| {
        let y = g.dense(v[0], v[1], v[2])?;
        let sq = g.mul(y, y)?;
        g.sum(sq)
    });
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn relu_values_and_gradient() {
    let mut g = Graph::new();
    let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0]));
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    let x = g.constant(t(&[2], &[0.5, 3.0]));
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, 3.0]);

    // Keep every entry away from the kink.
    let input = t(&[4], &[-0.7, 0.3, 1.2, -2.0]);
    let err = grad_check(&[input], |g, v| {
        let y = g.relu(v[0])?;
        let sq = g.mul(y, y)?;
        g.sum(sq)
    });
    assert!(err < 1e-5, "relative error {err}");

    // Subgradient at exactly zero is zero.
    let mut g = Graph::new();
    let x = g.param(&t(&[1], &[0.0]));
    let y = g.relu(x).unwrap();
    let s = g.sum(y).unwrap();
    assert_eq!(g.backward(s).unwrap().get(x).unwrap(), &[0.0]);
}

#[test]
fn channel_scale_cases() {
    let mut r = rng(5);
    let input = rand_tensor(&mut r, &[2, 3, 2, 2]);
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let ones = g.constant(Tensor::full(&[3], 1.0));
    let y = g.channel_scale(x, ones).unwrap();
    assert_eq!(g.value(y).data(), input.data());
    let zeros = g.constant(Tensor::zeros(&[3]));
    let y = g.channel_scale(x, zeros).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    let short = g.constant(Tensor::zeros(&[2]));
    assert!(g.channel_scale(x, short).is_err());

    // d(sum)/d(scale[c]) is the per-channel sum of the input.
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let s = g.param(&rand_tensor(&mut r, &[3]));
    let y = g.channel_scale(x, s).unwrap();
    let l = g.sum(y).unwrap();
    let grads = g.backward(l).unwrap();
    let mut expect = [0.0; 3];
    for (i, chunk) in input.data().chunks(4).enumerate() {
        expect[i % 3] += chunk.iter().sum::<f64>();
    }
    for (a, b) in grads.get(s).unwrap().iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
    let scale = rand_tensor(&mut r, &[3]);
    let err = grad_check(&[input, scale], |g, v| {
        let y = g.channel_scale(v[0], v[1])?;
        g.sum(y)
    });
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn elementwise_and_scalar_ops_match_finite_differences() {
    let mut r = rng(6);
    let a = rand_tensor(&mut r, &[6]);
    let b = rand_tensor(&mut r, &[6]);
    let s = t(&[], &[0.7]);
    let d = t(&[], &[1.9]);
    let err = grad_check(&[a, b, s, d], |g, v| {
        let p = g.add(v[0], v[1])?;
        let q = g.sub(p, v[1])?;
        let q = g.mul(q, v[1])?;
        let q = g.mul_scalar(q, v[2])?;
        let q = g.scale(q, 1.5)?;
        let q = g.add_const(q, 0.25)?;
        let q = g.softplus(q)?;
        let n = g.dot(q, v[0])?;
        let ratio = g.div_scalar(n, v[3])?;
        let m = g.mean(q)?;
        let sl = g.slice(q, 2, &[])?;
        let r = g.reshape(sl, &[1])?;
        let r = g.sum(r)?;
        let tot = g.add(ratio, m)?;
        let r = g.reshape(r, &[])?;
        g.add(tot, r)
    });
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn backward_simple_losses() {
    let mut g = Graph::new();
    let x = g.param(&t(&[3], &[1.0, -2.0, 0.5]));
    let s = g.sum(x).unwrap();
    assert_eq!(g.backward(s).unwrap().get(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::new();
    let x = g.param(&t(&[3], &[1.0, -2.0, 0.5]));
    let d = g.dot(x, x).unwrap();
    let l = g.scale(d, 0.5).unwrap();
    assert_eq!(g.backward(l).unwrap().get(x).unwrap(), &[1.0, -2.0, 0.5]);

    assert!(matches!(g.backward(x), Err(Error::Contract(_))));
}

#[test]
fn gradients_accumulate_across_backward_calls() {
    let mut r = rng(7);
    let mut p = rand_tensor(&mut r, &[4]).with_grad();
    let c = rand_tensor(&mut r, &[4]);
    let run = |p: &Tensor<f64>, which: u8| {
        let mut g = Graph::new();
        let v = g.param(p);
        let cv = g.constant(c.clone());
        let loss = if which == 0 {
            let m = g.mul(v, cv).unwrap();
            g.sum(m).unwrap()
        } else {
            g.dot(v, v).unwrap()
        };
        (g.backward(loss).unwrap().get(v).unwrap().to_vec(), loss)
    };
    let (g0, _) = run(&p, 0);
    let (g1, _) = run(&p, 1);
    p.accumulate_grad(&g0).unwrap();
    p.accumulate_grad(&g1).unwrap();

    let mut g = Graph::new();
    let v = g.param(&p);
    let cv = g.constant(c.clone());
    let m = g.mul(v, cv).unwrap();
    let l0 = g.sum(m).unwrap();
    let l1 = g.dot(v, v).unwrap();
    let l = g.add(l0, l1).unwrap();
    let joint = g.backward(l).unwrap();
    for (a, b) in joint.get(v).unwrap().iter().zip(p.grad().unwrap()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn doubling() -> Box<dyn CustomOp<f64>> {
    Box::new(FnOp {
        name: "double".into(),
        forward: |x: &[&Tensor<f64>]| {
            Tensor::new(x[0].shape().to_vec(), x[0].data().iter().map(|v| 2.0 * v).collect())
        },
        backward: |g: &Tensor<f64>, _: &[&Tensor<f64>], _: &Tensor<f64>| {
            Ok(vec![Some(Tensor::new(g.shape().to_vec(), g.data().iter().map(|v| 2.0 * v).collect())?)])
        },
    })
}

#[test]
fn custom_nodes_participate_in_backward() {
    let mut r = rng(8);
    let x0 = rand_tensor(&mut r, &[5]);

    let mut g = Graph::new();
    let x = g.param(&x0);
    let id = g
        .custom(
            &[x],
            Box::new(FnOp {
                name: "identity".into(),
                forward: |x: &[&Tensor<f64>]| Ok(x[0].detached()),
                backward: |g: &Tensor<f64>, _: &[&Tensor<f64>], _: &Tensor<f64>| Ok(vec![Some(g.clone())]),
            }),
        )
        .unwrap();
    let l = g.dot(id, id).unwrap();
    let grads = g.backward(l).unwrap();
    let expect: Vec<f64> = x0.data().iter().map(|v| 2.0 * v).collect();
    assert_eq!(grads.get(x).unwrap(), expect.as_slice());

    let mut g = Graph::new();
    let x = g.param(&x0);
    let y = g.custom(&[x], doubling()).unwrap();
    let l = g.sum(y).unwrap();
    assert_eq!(g.backward(l).unwrap().get(x).unwrap(), &[2.0; 5]);
}

#[test]
fn custom_backward_arity_is_checked() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::from_vec(vec![1.0, 2.0]));
    let y = g
        .custom(
            &[x],
            Box::new(FnOp {
                name: "broken".into(),
                forward: |x: &[&Tensor<f64>]| Ok(x[0].detached()),
                backward: |_: &Tensor<f64>, _: &[&Tensor<f64>], _: &Tensor<f64>| Ok(vec![]),
            }),
        )
        .unwrap();
    let l = g.sum(y).unwrap();
    assert!(matches!(g.backward(l), Err(Error::Contract(_))));
}

#[test]
fn non_finite_forward_is_a_numeric_error() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::scalar(1.0));
    let z = g.constant(Tensor::scalar(0.0));
    assert!(matches!(g.div_scalar(a, z), Err(Error::Numeric(_))));
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut r = rng(9);
        let inputs = [rand_tensor(&mut r, &[1, 2, 6, 6]), rand_tensor(&mut r, &[3, 2, 3, 3]), rand_tensor(&mut r, &[3])];
        let mut g = Graph::new();
        let v: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
        let y = g.conv2d(v[0], v[1], v[2]).unwrap();
        let y = g.relu(y).unwrap();
        let sq = g.mul(y, y).unwrap();
        let l = g.mean(sq).unwrap();
        let grads = g.backward(l).unwrap();
        (g.value(y).data().to_vec(), grads.get(v[1]).unwrap().to_vec())
    };
    assert_eq!(run(), run());
}

#[test]
fn softplus_helpers() {
    assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((softplus(softplus_inverse(3.7)) - 3.7f64).abs() < 1e-12);
    assert!(softplus(-800.0f64) >= 0.0 && softplus(800.0f64) == 800.0);
}
