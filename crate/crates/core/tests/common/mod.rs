//! Independent scalar-loop references and a finite-difference checker.
#![allow(dead_code)]

use grn_ppg::models::{Ctx, GluParams, GrnParams, MhaParams, ParamId, ParamStore};
use grn_ppg::rng::{seeded, SeededRng};
use grn_ppg::tensor::{Tape, Tensor, Var};
use rand::Rng;

pub fn random_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Replaces every parameter with uniform noise so biases and norms are
/// exercised away from their initial values.
pub fn randomize(store: &mut ParamStore, rng: &mut SeededRng, scale: f64) {
    for t in store.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

/// `y[r, o] = b[o] + sum_i x[r, i] * w[o, i]`
pub fn linear_ref(x: &[f64], rows: usize, w: &Tensor, b: Option<&Tensor>) -> Vec<f64> {
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.len(), rows * inp);
    let wd = w.data();
    let mut y = vec![0.0; rows * out];
    for r in 0..rows {
        for o in 0..out {
            let mut s = b.map_or(0.0, |b| b.data()[o]);
            for i in 0..inp {
                s += x[r * inp + i] * wd[o * inp + i];
            }
            y[r * out + o] = s;
        }
    }
    y
}

pub fn sigmoid_ref(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn elu_ref(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn layer_norm_ref(x: &[f64], d: usize, gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (row, out) in x.chunks(d).zip(y.chunks_mut(d)) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        for c in 0..d {
            out[c] = gain[c] * (row[c] - mean) / (var + eps).sqrt() + bias[c];
        }
    }
    y
}

pub fn glu_ref(store: &ParamStore, p: &GluParams, x: &[f64], rows: usize) -> Vec<f64> {
    let g = linear_ref(x, rows, store.get(p.w4), Some(store.get(p.b4)));
    let v = linear_ref(x, rows, store.get(p.w5), Some(store.get(p.b5)));
    g.iter().zip(&v).map(|(g, v)| sigmoid_ref(*g) * v).collect()
}

pub fn grn_ref(store: &ParamStore, p: &GrnParams, a: &[f64], rows: usize, c: Option<&[f64]>) -> Vec<f64> {
    let mut pre = linear_ref(a, rows, store.get(p.w2), Some(store.get(p.b2)));
    if let (Some(c), Some((w3, _))) = (c, p.w3) {
        let cc = linear_ref(c, rows, store.get(w3), None);
        pre.iter_mut().zip(&cc).for_each(|(p, c)| *p += c);
    }
    let eta2: Vec<f64> = pre.iter().map(|&v| elu_ref(v)).collect();
    let eta1 = linear_ref(&eta2, rows, store.get(p.w1), Some(store.get(p.b1)));
    let gated = glu_ref(store, &p.glu, &eta1, rows);
    let sum: Vec<f64> = a.iter().zip(&gated).map(|(a, g)| a + g).collect();
    layer_norm_ref(
        &sum,
        p.d,
        store.get(p.ln_gain).data(),
        store.get(p.ln_bias).data(),
        1e-5,
    )
}

pub fn attention_ref(store: &ParamStore, p: &MhaParams, x: &[f64], rows: usize, seq_len: usize) -> Vec<f64> {
    let d = p.d;
    let q = linear_ref(x, rows, store.get(p.wq), Some(store.get(p.bq)));
    let k = linear_ref(x, rows, store.get(p.wk), Some(store.get(p.bk)));
    let v = linear_ref(x, rows, store.get(p.wv), Some(store.get(p.bv)));
    let dh = d / p.heads;
    let mut cat = vec![0.0; rows * d];
    for b in 0..rows / seq_len {
        for h in 0..p.heads {
            for i in 0..seq_len {
                let qi = (b * seq_len + i) * d + h * dh;
                let scores: Vec<f64> = (0..seq_len)
                    .map(|j| {
                        let kj = (b * seq_len + j) * d + h * dh;
                        (0..dh).map(|e| q[qi + e] * k[kj + e]).sum::<f64>() / (dh as f64).sqrt()
                    })
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = ex.iter().sum();
                for j in 0..seq_len {
                    let vj = (b * seq_len + j) * d + h * dh;
                    for e in 0..dh {
                        cat[qi + e] += ex[j] / z * v[vj + e];
                    }
                }
            }
        }
    }
    linear_ref(&cat, rows, store.get(p.wo), Some(store.get(p.bo)))
}

/// Runs `f` in inference mode on a fresh tape and returns the output values.
pub fn eval<F>(store: &ParamStore, f: F) -> Vec<f64>
where
    F: FnOnce(&mut Ctx<'_>) -> Var,
{
    let mut tape = Tape::new();
    let vars = store.bind(&mut tape);
    let mut rng = seeded(0);
    let mut ctx = Ctx {
        tape: &mut tape,
        vars: &vars,
        training: false,
        rng: &mut rng,
    };
    let out = f(&mut ctx);
    tape.value(out).to_vec()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    /// (analytic, numeric) at the worst entry.
    pub worst: (f64, f64),
}

impl GradCheck {
    pub fn merge(&mut self, o: GradCheck) {
        if o.max_rel > self.max_rel {
            self.worst = o.worst;
        }
        self.max_rel = self.max_rel.max(o.max_rel);
        self.checked += o.checked;
    }
}

/// Compares tape gradients of the scalar `sum(out * r)` (random fixed `r`)
/// with fourth-order central differences for up to `per_tensor` entries of every
/// parameter. Relative error uses a floor of 1e-6 on the denominator.
pub fn gradcheck<F>(store: &mut ParamStore, per_tensor: usize, rng: &mut SeededRng, f: F) -> GradCheck
where
    F: Fn(&mut Ctx<'_>) -> Var,
{
    let probe_len = eval(store, &f).len();
    let r = random_vec(rng, probe_len, 1.0);
    let loss = |store: &ParamStore, want: bool| -> (f64, Vec<Option<Vec<f64>>>) {
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape);
        let mut drng = seeded(0);
        let mut ctx = Ctx {
            tape: &mut tape,
            vars: &vars,
            training: false,
            rng: &mut drng,
        };
        let out = f(&mut ctx);
        let shape = tape.shape(out).to_vec();
        let rv = tape.constant(&shape, r.clone()).unwrap();
        let prod = tape.mul(out, rv).unwrap();
        let l = tape.sum(prod);
        let value = tape.value(l)[0];
        if !want {
            return (value, Vec::new());
        }
        tape.backward(l).unwrap();
        (value, vars.iter().map(|&v| tape.grad(v).map(|g| g.to_vec())).collect())
    };
    let (_, grads) = loss(store, true);
    let h = 1e-5;
    let mut res = GradCheck::default();
    for (ti, g) in grads.iter().enumerate() {
        let n = store.tensors()[ti].len();
        let picks: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..n)).collect()
        };
        for j in picks {
            let orig = store.tensors()[ti].data()[j];
            let mut at = |x: f64| {
                store.tensors_mut()[ti].data_mut()[j] = x;
                loss(store, false).0
            };
            let numeric = (8.0 * (at(orig + h) - at(orig - h)) - (at(orig + 2.0 * h) - at(orig - 2.0 * h))) / (12.0 * h);
            store.tensors_mut()[ti].data_mut()[j] = orig;
            let analytic = g.as_ref().map_or(0.0, |g| g[j]);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            if rel > res.max_rel {
                res.worst = (analytic, numeric);
            }
            res.max_rel = res.max_rel.max(rel);
            res.checked += 1;
        }
    }
    res
}

/// Adds an input tensor to `store` so its gradient is checked too.
pub fn input_param(store: &mut ParamStore, name: &str, shape: &[usize], rng: &mut SeededRng) -> ParamId {
    let n = shape.iter().product();
    store.add(name, Tensor::new(shape, random_vec(rng, n, 1.0)).unwrap())
}
