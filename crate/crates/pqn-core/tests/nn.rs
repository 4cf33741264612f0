use approx::assert_abs_diff_eq;
use pqn_core::nn::{
    adam_step, dense_forward, lstm_step, Activation, AdamConfig, AdamState, LstmCellState, ParamStore, ParamTensor,
    Tape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tensor(name: &str, shape: Vec<usize>, values: Vec<f64>) -> ParamTensor<f64> {
    ParamTensor::from_values(name, shape, values).unwrap()
}

fn random(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[test]
fn dense_zero_weights_give_zero() {
    let w = tensor("w", vec![3, 2], vec![0.0; 6]);
    let b = tensor("b", vec![3], vec![0.0; 3]);
    assert_eq!(dense_forward(&[0.4, -2.0], &w, &b, Activation::Tanh).unwrap(), vec![0.0; 3]);
}

#[test]
fn dense_identity_is_identity() {
    let w = tensor("w", vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let b = tensor("b", vec![3], vec![0.0; 3]);
    let x = [0.3, -1.2, 7.5];
    assert_eq!(dense_forward(&x, &w, &b, Activation::None).unwrap(), x.to_vec());
}

#[test]
fn dense_matches_explicit_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (i, o) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let wv = random(&mut rng, i * o);
        let bv = random(&mut rng, o);
        let x = random(&mut rng, i);
        let out = dense_forward(&x, &tensor("w", vec![o, i], wv.clone()), &tensor("b", vec![o], bv.clone()), Activation::Sigmoid)
            .unwrap();
        for r in 0..o {
            let mut z = bv[r];
            for c in 0..i {
                z += wv[r * i + c] * x[c];
            }
            assert_abs_diff_eq!(out[r], logistic(z), epsilon = 1e-14);
        }
    }
}

#[test]
fn dense_rejects_shape_mismatch() {
    let w = tensor("w", vec![2, 3], vec![0.0; 6]);
    let b = tensor("b", vec![2], vec![0.0; 2]);
    assert!(dense_forward(&[1.0, 2.0], &w, &b, Activation::None).is_err());
}

#[test]
fn lstm_zero_weights() {
    let k = 3;
    let w = tensor("w", vec![4 * k, 2 + k], vec![0.0; 4 * k * (2 + k)]);
    let b = tensor("b", vec![4 * k], vec![0.0; 4 * k]);
    let zero = lstm_step(&[0.5, -0.5], &LstmCellState::zeros(k), &w, &b).unwrap();
    assert_eq!(zero.c, vec![0.0; k]);
    assert_eq!(zero.h, vec![0.0; k]);

    let c0 = vec![1.0, -2.0, 0.25];
    let st = LstmCellState { h: vec![0.0; k], c: c0.clone() };
    let out = lstm_step(&[0.5, -0.5], &st, &w, &b).unwrap();
    for j in 0..k {
        assert_abs_diff_eq!(out.c[j], 0.5 * c0[j], epsilon = 1e-15);
        assert_abs_diff_eq!(out.h[j], 0.5 * (0.5 * c0[j]).tanh(), epsilon = 1e-15);
    }
}

#[test]
fn lstm_matches_gate_by_gate_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let (i, k) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let cols = i + k;
        let wv = random(&mut rng, 4 * k * cols);
        let bv = random(&mut rng, 4 * k);
        let x = random(&mut rng, i);
        let st = LstmCellState { h: random(&mut rng, k), c: random(&mut rng, k) };
        let out = lstm_step(&x, &st, &tensor("w", vec![4 * k, cols], wv.clone()), &tensor("b", vec![4 * k], bv.clone()))
            .unwrap();
        let xh: Vec<f64> = x.iter().chain(&st.h).copied().collect();
        let pre = |gate: usize, j: usize| {
            let row = gate * k + j;
            bv[row] + (0..cols).map(|c| wv[row * cols + c] * xh[c]).sum::<f64>()
        };
        for j in 0..k {
            let ig = logistic(pre(0, j));
            let fg = logistic(pre(1, j));
            let g = pre(2, j).tanh();
            let og = logistic(pre(3, j));
            let c = fg * st.c[j] + ig * g;
            assert_abs_diff_eq!(out.c[j], c, epsilon = 1e-14);
            assert_abs_diff_eq!(out.h[j], og * c.tanh(), epsilon = 1e-14);
        }
    }
}

#[test]
fn linear_gradient_is_the_input() {
    let mut store = ParamStore::new();
    let w = store.insert(tensor("w", vec![2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).unwrap();
    let x = [1.5, -2.0, 0.25];
    let mut tape = Tape::new(&store);
    let xv = tape.input(x.to_vec());
    let y = tape.matvec(w, xv);
    let loss = tape.sum(y);
    let g = tape.backward(loss);
    assert_eq!(g.get(w).unwrap(), &[1.5, -2.0, 0.25, 1.5, -2.0, 0.25]);
}

#[test]
fn cross_entropy_gradient_is_p_minus_onehot() {
    let mut store = ParamStore::new();
    let u = store.insert(tensor("u", vec![4], vec![0.3, -1.0, 2.0, 0.0])).unwrap();
    let mut tape = Tape::new(&store);
    let uv = tape.param(u);
    let loss = tape.cross_entropy(uv, 2);
    let g = tape.backward(loss);
    let z: f64 = [0.3f64, -1.0, 2.0, 0.0].iter().map(|v| v.exp()).sum();
    for (j, &uj) in [0.3f64, -1.0, 2.0, 0.0].iter().enumerate() {
        let expect = uj.exp() / z - if j == 2 { 1.0 } else { 0.0 };
        assert_abs_diff_eq!(g.get(u).unwrap()[j], expect, epsilon = 1e-15);
    }
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut store = ParamStore::new();
    let id = store.insert(tensor("x", vec![3], vec![1.0, -2.0, 3.0])).unwrap();
    let mut adam = AdamState::new(&store, vec![id], AdamConfig::with_lr(0.1));
    for _ in 0..5 {
        adam_step(&mut store, &mut adam);
    }
    assert_eq!(store.get(id).values, vec![1.0, -2.0, 3.0]);
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    for g in [3.7, -0.002, 150.0] {
        let mut store = ParamStore::new();
        let id = store.insert(tensor("x", vec![1], vec![0.5])).unwrap();
        let mut adam = AdamState::new(&store, vec![id], AdamConfig::with_lr(0.01));
        store.get_mut(id).grad[0] = g;
        adam_step(&mut store, &mut adam);
        let moved = store.get(id).values[0] - 0.5;
        assert_abs_diff_eq!(moved, -0.01 * f64::signum(g), epsilon = 1e-7);
        assert_eq!(store.get(id).grad[0], 0.0);
    }
}

#[test]
fn adam_minimises_a_quadratic() {
    let mut store = ParamStore::new();
    let id = store.insert(tensor("x", vec![1], vec![1.0])).unwrap();
    let mut adam = AdamState::new(&store, vec![id], AdamConfig::with_lr(0.01));
    let mut reached = None;
    for step in 1..=1000 {
        let x = store.get(id).values[0];
        store.get_mut(id).grad[0] = 2.0 * x;
        adam_step(&mut store, &mut adam);
        if store.get(id).values[0].abs() < 1e-3 {
            reached = Some(step);
            break;
        }
    }
    assert!(reached.is_some(), "x = {}", store.get(id).values[0]);
}
