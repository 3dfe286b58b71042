//! One gated residual block: context handling and gate suppression.

use grn_ppg::models::{grn_forward, Ctx, GrnParams, ParamStore};
use grn_ppg::rng::seeded;
use grn_ppg::tensor::{Tape, Tensor};

fn run(store: &ParamStore, p: &GrnParams, a: &Tensor, c: Option<&Tensor>) -> Vec<f64> {
    let mut tape = Tape::new();
    let vars = store.bind(&mut tape);
    let mut rng = seeded(0);
    let mut ctx = Ctx { tape: &mut tape, vars: &vars, training: false, rng: &mut rng };
    let av = ctx.tape.leaf(a);
    let cv = c.map(|c| ctx.tape.leaf(c));
    let out = grn_forward(&mut ctx, p, av, cv, 0.0).unwrap();
    tape.value(out).to_vec()
}

fn main() {
    let mut rng = seeded(11);
    let mut store = ParamStore::new();
    let p = GrnParams::init(&mut store, "grn", 4, Some(2), &mut rng).unwrap();
    let a = Tensor::new(&[1, 4], vec![0.5, -1.0, 2.0, 0.1]).unwrap();
    let c = Tensor::new(&[1, 2], vec![1.0, -0.5]).unwrap();
    let zero = Tensor::zeros(&[1, 2]);
    println!("no context:   {:.4?}", run(&store, &p, &a, None));
    println!("zero context: {:.4?}", run(&store, &p, &a, Some(&zero)));
    println!("context:      {:.4?}", run(&store, &p, &a, Some(&c)));
    store.get_mut(p.glu.b4).data_mut().fill(-1e6);
    println!("gate closed:  {:.4?}  (layer norm of a)", run(&store, &p, &a, None));
}
