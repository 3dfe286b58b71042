//! Reverse-mode gradients on a small graph, checked against central
//! differences.

use grn_ppg::tensor::{Tape, Tensor};

fn loss(w: &Tensor, x: &Tensor) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let wv = tape.leaf(w);
    let xv = tape.leaf(x);
    let h = tape.matmul(xv, wv).unwrap();
    let h = tape.elu(h);
    let s = tape.sigmoid(h);
    let l = tape.mean(s);
    let value = tape.value(l)[0];
    tape.backward(l).unwrap();
    (value, tape.grad(wv).unwrap().to_vec())
}

fn main() {
    let w = Tensor::new(&[3, 2], vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9]).unwrap().with_grad();
    let x = Tensor::new(&[4, 3], (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let (value, grad) = loss(&w, &x);
    println!("loss = {value:.6}");
    let h = 1e-6;
    for i in 0..w.len() {
        let mut plus = w.clone();
        plus.data_mut()[i] += h;
        let mut minus = w.clone();
        minus.data_mut()[i] -= h;
        let numeric = (loss(&plus, &x).0 - loss(&minus, &x).0) / (2.0 * h);
        println!("dL/dw[{i}]  tape {:+.9}  numeric {:+.9}", grad[i], numeric);
    }
}
