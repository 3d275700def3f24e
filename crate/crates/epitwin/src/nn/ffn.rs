//! Feed-forward baseline: maps a flattened window of N latent vectors to
//! the next latent vector.

use super::optim::{optimizer_step, seeded_rng, OptimConfig, WeightStore};
use super::scaling::AffineScaler;
use super::tape::Graph;
use super::tensor::Tensor;
use super::NnError;
use crate::rom::LatentSeries;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnHyper {
    /// Input lag (window length N).
    pub window: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub leaky_slope: f64,
    pub train_frac: f64,
    pub optim: OptimConfig,
    pub seed: u64,
}

impl Default for FfnHyper {
    fn default() -> Self {
        Self {
            window: 8,
            hidden: 64,
            epochs: 500,
            batch: 32,
            leaky_slope: 0.3,
            train_frac: 0.9,
            optim: OptimConfig::nadam_default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnModel {
    pub store: WeightStore,
    pub hyper: FfnHyper,
    /// Latent dimensionality M.
    pub m: usize,
    pub scaler: AffineScaler,
    pub trained: bool,
    /// (train_mse, test_mse) per epoch, in scaled space.
    pub loss_curve: Vec<(f64, f64)>,
}

fn init_store(m: usize, hyper: &FfnHyper) -> Result<WeightStore, NnError> {
    let mut rng = seeded_rng(hyper.seed, "ffn-init");
    let mut store = WeightStore::new(hyper.seed);
    let d_in = hyper.window * m;
    store.insert_glorot("w1", d_in, hyper.hidden, &mut rng)?;
    store.insert("b1", Tensor::zeros(&[1, hyper.hidden]))?;
    store.insert_glorot("w2", hyper.hidden, hyper.hidden, &mut rng)?;
    store.insert("b2", Tensor::zeros(&[1, hyper.hidden]))?;
    store.insert_glorot("w3", hyper.hidden, m, &mut rng)?;
    store.insert("b3", Tensor::zeros(&[1, m]))?;
    Ok(store)
}

struct ForwardOut {
    pred: super::tape::NodeId,
    params: Vec<(String, super::tape::NodeId)>,
}

fn forward(g: &mut Graph, store: &WeightStore, x: Tensor, slope: f64) -> ForwardOut {
    let xn = g.leaf(x);
    let mut params = Vec::new();
    let mut bind = |g: &mut Graph, name: &str| {
        let id = g.leaf(store.get(name).unwrap().clone());
        params.push((name.to_string(), id));
        id
    };
    let w1 = bind(g, "w1");
    let b1 = bind(g, "b1");
    let w2 = bind(g, "w2");
    let b2 = bind(g, "b2");
    let w3 = bind(g, "w3");
    let b3 = bind(g, "b3");
    let h = g.matmul(xn, w1);
    let h = g.add_row(h, b1);
    let h = g.leaky_relu(h, slope);
    let h = g.matmul(h, w2);
    let h = g.add_row(h, b2);
    let h = g.leaky_relu(h, slope);
    let y = g.matmul(h, w3);
    let pred = g.add_row(y, b3);
    ForwardOut { pred, params }
}

/// Windows (levels k-N+1..k -> target k+1) in scaled space.
fn build_windows(series: &LatentSeries, scaler: &AffineScaler, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in (n - 1)..(series.rows - 1) {
        let mut x = Vec::with_capacity(n * series.m);
        for lvl in (k + 1 - n)..=k {
            x.extend(scaler.apply(series.level(lvl)));
        }
        xs.push(x);
        ys.push(scaler.apply(series.level(k + 1)));
    }
    (xs, ys)
}

fn mse_of(model_store: &WeightStore, xs: &[Vec<f64>], ys: &[Vec<f64>], slope: f64, m: usize) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let b = xs.len();
    let x = Tensor::new(vec![b, xs[0].len()], xs.concat());
    let t = Tensor::new(vec![b, m], ys.concat());
    let mut g = Graph::new();
    let out = forward(&mut g, model_store, x, slope);
    let loss = g.mse_loss(out.pred, t);
    g.value(loss).data[0]
}

/// Train the FFN on a latent series with MSE loss.
pub fn train_ffn(series: &LatentSeries, hyper: &FfnHyper) -> Result<FfnModel, NnError> {
    let n = hyper.window;
    if series.rows < n + 2 {
        return Err(NnError::SeriesTooShort { got: series.rows, need: n + 2 });
    }
    let train_levels = ((series.rows as f64) * hyper.train_frac).floor() as usize;
    let rows: Vec<&[f64]> = (0..train_levels.max(n + 1)).map(|i| series.level(i)).collect();
    let scaler = AffineScaler::fit(&rows, 0.05, 0.95);
    let (xs, ys) = build_windows(series, &scaler, n);
    let n_train = xs.len() * 9 / 10;
    let n_train = n_train.max(1);
    let mut store = init_store(series.m, hyper)?;
    let mut rng = seeded_rng(hyper.seed, "ffn-shuffle");
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.batch) {
            let bx: Vec<f64> = chunk.iter().flat_map(|&i| xs[i].iter().copied()).collect();
            let bt: Vec<f64> = chunk.iter().flat_map(|&i| ys[i].iter().copied()).collect();
            let x = Tensor::new(vec![chunk.len(), n * series.m], bx);
            let t = Tensor::new(vec![chunk.len(), series.m], bt);
            let mut g = Graph::new();
            let out = forward(&mut g, &store, x, hyper.leaky_slope);
            let loss = g.mse_loss(out.pred, t);
            let loss_val = g.value(loss).data[0];
            if !loss_val.is_finite() {
                return Err(NnError::NonFiniteLoss { step: epoch, loss: loss_val });
            }
            let grads = g.backward(loss);
            let named: Vec<(String, Tensor)> = out
                .params
                .iter()
                .map(|(name, id)| (name.clone(), grads.get(*id).unwrap().clone()))
                .collect();
            optimizer_step(&mut store, &named, &hyper.optim)?;
        }
        let train_mse = mse_of(&store, &xs[..n_train], &ys[..n_train], hyper.leaky_slope, series.m);
        let test_mse = mse_of(&store, &xs[n_train..], &ys[n_train..], hyper.leaky_slope, series.m);
        loss_curve.push((train_mse, test_mse));
    }
    Ok(FfnModel { store, hyper: hyper.clone(), m: series.m, scaler, trained: true, loss_curve })
}

/// One-step prediction from a window of N latent vectors (physical scale).
pub fn ffn_predict(model: &FfnModel, window: &[Vec<f64>]) -> Result<Vec<f64>, NnError> {
    if !model.trained {
        return Err(NnError::Untrained);
    }
    if window.len() != model.hyper.window || window.iter().any(|w| w.len() != model.m) {
        return Err(NnError::ShapeMismatch {
            op: "ffn_predict",
            details: format!(
                "window {}x{} vs expected {}x{}",
                window.len(),
                window.first().map_or(0, |w| w.len()),
                model.hyper.window,
                model.m
            ),
        });
    }
    let mut x = Vec::with_capacity(model.hyper.window * model.m);
    for lvl in window {
        x.extend(model.scaler.apply(lvl));
    }
    let xt = Tensor::new(vec![1, x.len()], x);
    let mut g = Graph::new();
    let out = forward(&mut g, &model.store, xt, model.hyper.leaky_slope);
    Ok(model.scaler.invert(&g.value(out.pred).data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_series(rows: usize, m: usize, value: f64) -> LatentSeries {
        LatentSeries { coeffs: vec![value; rows * m], rows, m, basis_id: "test".into() }
    }

    #[test]
    fn learns_a_constant_series() {
        let series = constant_series(40, 3, 2.5);
        let hyper = FfnHyper {
            epochs: 300,
            optim: OptimConfig { learning_rate: 0.01, ..OptimConfig::nadam_default() },
            ..FfnHyper::default()
        };
        let model = train_ffn(&series, &hyper).unwrap();
        let window: Vec<Vec<f64>> = (0..8).map(|_| vec![2.5; 3]).collect();
        let pred = ffn_predict(&model, &window).unwrap();
        for v in pred {
            assert!((v - 2.5).abs() < 1e-3, "prediction {v}");
        }
    }

    #[test]
    fn shape_and_untrained_errors() {
        let series = constant_series(40, 3, 1.0);
        let hyper = FfnHyper { epochs: 1, ..FfnHyper::default() };
        let mut model = train_ffn(&series, &hyper).unwrap();
        let bad: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; 3]).collect();
        assert!(ffn_predict(&model, &bad).is_err());
        let bad2: Vec<Vec<f64>> = (0..8).map(|_| vec![0.0; 2]).collect();
        assert!(ffn_predict(&model, &bad2).is_err());
        model.trained = false;
        let ok: Vec<Vec<f64>> = (0..8).map(|_| vec![0.0; 3]).collect();
        assert!(matches!(ffn_predict(&model, &ok), Err(NnError::Untrained)));
        assert!(train_ffn(&constant_series(5, 3, 1.0), &hyper).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let mut series = constant_series(60, 2, 0.0);
        for (i, v) in series.coeffs.iter_mut().enumerate() {
            *v = ((i as f64) * 0.37).sin();
        }
        let hyper = FfnHyper { epochs: 5, ..FfnHyper::default() };
        let m1 = train_ffn(&series, &hyper).unwrap();
        let m2 = train_ffn(&series, &hyper).unwrap();
        assert_eq!(m1.store, m2.store);
        assert_eq!(m1.loss_curve, m2.loss_curve);
    }
}
