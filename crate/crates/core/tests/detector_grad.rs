use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tuberepair::detector::{NetConfig, Tensor, UNet};

fn weighted_sum(out: &Tensor<f64>, r: &[f64]) -> f64 {
    out.data.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn set_param(net: &mut UNet<f64>, target: &str, i: usize, v: f64) {
    net.visit(&mut |name, t, _| {
        if name == target {
            t.data[i] = v;
        }
    });
}

/// Central differences of a random linear functional of the output, taken
/// with respect to every trainable scalar of a freshly initialized net.
/// ReLU gates and pooling winners are pinned at the base point.
#[test]
fn backward_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut net = UNet::<f64>::new(NetConfig::new(2, 2), 4).unwrap();
    let shape = [2, 2, 8, 8, 8];
    let n: usize = shape.iter().product();
    let x = Tensor::from_vec(&shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

    net.zero_grad();
    let out = net.forward(&x, true).unwrap();
    net.backward(&Tensor::from_vec(&out.shape, r.clone()).unwrap()).unwrap();
    let mut analytic: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    net.visit(&mut |name, t, trainable| {
        if trainable {
            analytic.push((name, t.data.clone(), t.grad.clone().unwrap()));
        }
    });

    net.freeze_activations(true);
    assert_eq!(net.forward(&x, true).unwrap().data, out.data);

    let h = 1e-5;
    let mut worst = (0.0, String::new());
    for (name, values, grads) in &analytic {
        for (i, (&p, &a)) in values.iter().zip(grads).enumerate() {
            set_param(&mut net, name, i, p + h);
            let fp = weighted_sum(&net.forward(&x, true).unwrap(), &r);
            set_param(&mut net, name, i, p - h);
            let fm = weighted_sum(&net.forward(&x, true).unwrap(), &r);
            set_param(&mut net, name, i, p);
            let numeric = (fp - fm) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {a} numeric {numeric}"));
            }
        }
    }
    assert!(worst.0 < 1e-4, "worst relative error {:e} at {}", worst.0, worst.1);
}

#[test]
fn frozen_pattern_is_released() {
    let mut net = UNet::<f64>::new(NetConfig::new(1, 2), 2).unwrap();
    let a = Tensor::from_vec(&[2, 1, 8, 8, 8], (0..1024).map(|i| ((i * 13) % 7) as f64 - 3.0).collect()).unwrap();
    let b = Tensor::from_vec(&[2, 1, 8, 8, 8], (0..1024).map(|i| ((i * 5) % 11) as f64 - 5.0).collect()).unwrap();
    let live = net.forward(&b, true).unwrap();
    net.freeze_activations(true);
    net.forward(&a, true).unwrap();
    assert_ne!(net.forward(&b, true).unwrap().data, live.data);
    net.freeze_activations(false);
    assert_eq!(net.forward(&b, true).unwrap().data, live.data);
}
