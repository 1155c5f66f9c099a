mod common;

use common::*;
use mazeadapt::autodiff::{grad_check, Tape, Tensor, Var};
use mazeadapt::controller::ControllerInput;
use proptest::prelude::*;

#[test]
fn classification_loss_gradients() {
    for seed in 0..10 {
        let e = gcn_bce_grad_error(seed);
        assert!(e < GRAD_TOL, "seed {seed}: {e}");
    }
}

#[test]
fn value_loss_gradients() {
    for seed in 0..10 {
        let e = gcn_mse_grad_error(seed);
        assert!(e < GRAD_TOL, "seed {seed}: {e}");
    }
}

#[test]
fn distance_loss_gradients() {
    for seed in 0..10 {
        let e = gcn_distance_grad_error(seed);
        assert!(e < GRAD_TOL, "seed {seed}: {e}");
    }
}

#[test]
fn enriched_controller_gradients() {
    for seed in 0..5 {
        let e = controller_grad_error(seed, ControllerInput::Enriched);
        assert!(e < GRAD_TOL, "seed {seed}: {e}");
    }
}

fn composite(tape: &mut Tape, x: Var) -> mazeadapt::Result<Var> {
    // exercises every differentiable op on one small graph
    let a = tape.view(x, 0, &[2, 3])?;
    let b = tape.view(x, 6, &[3, 2])?;
    let bias = tape.view(x, 12, &[2])?;
    let h = tape.matmul(a, b)?;
    let h = tape.add_row(h, bias)?;
    let s = tape.sigmoid(h)?;
    let r = tape.relu(h)?;
    let m = tape.mul(s, r)?;
    let c = tape.concat(&[m, s])?;
    let d = tape.pairwise_distances(c)?;
    let mean = tape.mean(d)?;
    let dn = tape.div_scalar(d, mean)?;
    let sc = tape.scale(dn, 0.7)?;
    let diff = tape.sub(sc, dn)?;
    let flat = tape.reshape(s, &[4])?;
    let bce = tape.bce(flat, &[1.0, 0.0, 0.0, 1.0])?;
    let mse = tape.mse(diff, &[0.1])?;
    let t = tape.sum(d)?;
    let u = tape.add(bce, mse)?;
    tape.add(u, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_op_matches_finite_differences(x in prop::collection::vec(-2.0f64..2.0, 14)) {
        // keep ReLU inputs away from the kink where finite differences are meaningless
        let mut tape = Tape::new();
        let leaf = tape.constant(Tensor::vector(x.clone()));
        let a = tape.view(leaf, 0, &[2, 3]).unwrap();
        let b = tape.view(leaf, 6, &[3, 2]).unwrap();
        let bias = tape.view(leaf, 12, &[2]).unwrap();
        let h = tape.matmul(a, b).unwrap();
        let h = tape.add_row(h, bias).unwrap();
        prop_assume!(tape.value(h).data().iter().all(|v| v.abs() > 1e-3));
        let e = grad_check(composite, &x).unwrap();
        prop_assert!(e < GRAD_TOL, "error {e}");
    }
}
