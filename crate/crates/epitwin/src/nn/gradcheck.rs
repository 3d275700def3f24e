//! Central-difference gradient verification.

use super::optim::WeightStore;
use super::tensor::Tensor;

/// Compare analytic gradients against central differences of `loss_fn`.
///
/// Returns the max relative error (|a-n|)/max(|a|,|n|,1e-12) over every
/// entry of every parameter named in `analytic`. `h` is the perturbation
/// step (1e-6 is appropriate for f64 losses of order 1).
pub fn grad_check<F>(
    store: &WeightStore,
    analytic: &[(String, Tensor)],
    h: f64,
    mut loss_fn: F,
) -> f64
where
    F: FnMut(&WeightStore) -> f64,
{
    let mut work = store.clone();
    let mut max_rel: f64 = 0.0;
    for (name, grad) in analytic {
        for k in 0..grad.data.len() {
            let orig = work.get(name).unwrap().data[k];
            work.get_mut(name).unwrap().data[k] = orig + h;
            let fp = loss_fn(&work);
            work.get_mut(name).unwrap().data[k] = orig - h;
            let fm = loss_fn(&work);
            work.get_mut(name).unwrap().data[k] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = grad.data[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            max_rel = max_rel.max(rel);
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Graph;

    #[test]
    fn linear_model_quadratic_loss_is_exact() {
        // loss = ||x.W - t||^2 is quadratic in W: central differences are
        // exact up to round-off
        let mut store = WeightStore::new(7);
        store
            .insert("w", Tensor::new(vec![3, 2], vec![0.2, -0.4, 0.1, 0.7, -0.3, 0.5]))
            .unwrap();
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, -1.0, 0.5, -0.25, 2.0]);
        let t = Tensor::new(vec![2, 2], vec![0.3, -0.1, 0.4, 0.2]);

        let forward = |store: &WeightStore| -> (f64, Vec<(String, Tensor)>) {
            let mut g = Graph::new();
            let xn = g.leaf(x.clone());
            let wn = g.leaf(store.get("w").unwrap().clone());
            let y = g.matmul(xn, wn);
            let loss = g.mse_loss(y, t.clone());
            let grads = g.backward(loss);
            (g.value(loss).data[0], vec![("w".to_string(), grads.get(wn).unwrap().clone())])
        };
        let (_, analytic) = forward(&store);
        let err = grad_check(&store, &analytic, 1e-6, |s| forward(s).0);
        assert!(err <= 1e-9, "relative error {err}");
    }

    #[test]
    fn mixed_nonlinear_graph_passes() {
        let mut store = WeightStore::new(8);
        let mut rng = crate::nn::optim::seeded_rng(8, "gradcheck");
        store.insert_glorot("w1", 4, 5, &mut rng).unwrap();
        store.insert("b1", Tensor::zeros(&[1, 5])).unwrap();
        store.insert_glorot("w2", 5, 3, &mut rng).unwrap();
        use rand::Rng;
        let x = Tensor::new(vec![2, 4], (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let t = Tensor::new(vec![2, 3], (0..6).map(|_| rng.gen_range(0.1..0.9)).collect());

        let forward = |store: &WeightStore| -> (f64, Vec<(String, Tensor)>) {
            let mut g = Graph::new();
            let xn = g.leaf(x.clone());
            let w1 = g.leaf(store.get("w1").unwrap().clone());
            let b1 = g.leaf(store.get("b1").unwrap().clone());
            let w2 = g.leaf(store.get("w2").unwrap().clone());
            let h = g.matmul(xn, w1);
            let h = g.add_row(h, b1);
            let h = g.tanh(h);
            let h = g.leaky_relu(h, 0.3);
            let y = g.matmul(h, w2);
            let y = g.sigmoid(y);
            let loss = g.mse_loss(y, t.clone());
            let grads = g.backward(loss);
            let out = ["w1", "b1", "w2"]
                .iter()
                .map(|n| {
                    let id = match *n {
                        "w1" => w1,
                        "b1" => b1,
                        _ => w2,
                    };
                    (n.to_string(), grads.get(id).unwrap().clone())
                })
                .collect();
            (g.value(loss).data[0], out)
        };
        let (_, analytic) = forward(&store);
        let err = grad_check(&store, &analytic, 1e-6, |s| forward(s).0);
        assert!(err <= 1e-5, "relative error {err}");
    }
}
