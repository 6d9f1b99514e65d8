//! Check reverse-mode gradients of a full IRU network (3 recurrent steps,
//! width 16) against central finite differences, parameter by parameter.
//!
//! `cargo run --release --example gradient_check`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recurdepth::ndcore::{Tape, Tensor};
use recurdepth::nets::{ArchConfig, Network};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps = 3;
    let net = Network::new(&ArchConfig::iru(18, 9, 16, 2, steps), 42)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::new(vec![4, 18], (0..72).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    // Weight the outputs so every logit contributes differently.
    let w: Vec<f64> = (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss_of = |out: &Tensor| out.data().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();

    let mut tape = Tape::new();
    let pv = net.register(&mut tape);
    let vx = tape.leaf(x.clone());
    let out = net.forward(&mut tape, &pv, vx, steps)?;
    let weights = tape.leaf(Tensor::new(vec![4, 9], w.clone())?);
    let weighted = tape.mul(out, weights)?;
    let loss = tape.sum(weighted)?;
    let grads = tape.backward(loss)?;
    let analytic = net.params().collect_grads(&pv, &grads);

    let h = 1e-6;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (pi, g) in analytic.iter().enumerate() {
        let mut param_worst = 0.0f64;
        for (j, &gj) in g.iter().enumerate() {
            let orig = probe.params().get(pi).data()[j];
            probe.params_mut().get_mut(pi).data_mut()[j] = orig + h;
            let up = loss_of(&probe.infer(&x, steps)?);
            probe.params_mut().get_mut(pi).data_mut()[j] = orig - h;
            let down = loss_of(&probe.infer(&x, steps)?);
            probe.params_mut().get_mut(pi).data_mut()[j] = orig;
            let num = (up - down) / (2.0 * h);
            param_worst = param_worst.max((gj - num).abs() / gj.abs().max(num.abs()).max(1e-3));
        }
        println!("{:<24} {:>6} values  max rel err {:.2e}", net.params().names()[pi], g.len(), param_worst);
        worst = worst.max(param_worst);
    }
    println!("worst relative error {worst:.2e} ({} parameters)", net.parameter_count());
    Ok(())
}
