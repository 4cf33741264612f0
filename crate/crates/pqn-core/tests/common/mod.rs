//! Finite-difference gradient cases shared by the gradient tests and the
//! acceptance suite. Each case draws at least `CONFIGS` random shapes/values.

#![allow(dead_code)]

use pqn_core::env;
use pqn_core::model::{ModelConfig, PolicyKind, PqnModel};
use pqn_core::nn::gradcheck::{check_gradients, GradCheck, FD_STEP};
use pqn_core::nn::{Activation, Dense, LstmCell, LstmVars, ParamId, ParamStore, ParamTensor, Tape, Var};
use pqn_core::model::supervised_loss_tape;
use pqn_core::tsp::{generate_instance, Tour};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONFIGS: usize = 20;
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: &'static str,
    pub configs: usize,
    pub max_rel_error: f64,
    pub worst: (f64, f64),
}

fn vec_param(store: &mut ParamStore<f64>, name: &str, shape: Vec<usize>, rng: &mut ChaCha8Rng) -> ParamId {
    let len = shape.iter().product();
    let values = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    store.insert(ParamTensor::from_values(name, shape, values).unwrap()).unwrap()
}

fn readout(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Reduces a vector node to a scalar through a fixed random readout.
fn reduce(tape: &mut Tape<'_, f64>, v: Var, r: &[f64]) -> Var {
    let r = tape.input(r.to_vec());
    tape.dot(v, r)
}

fn run_case<F>(name: &'static str, seed: u64, mut one: F) -> CaseResult
where
    F: FnMut(&mut ChaCha8Rng) -> GradCheck,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = CaseResult {
        name,
        configs: CONFIGS,
        max_rel_error: 0.0,
        worst: (0.0, 0.0),
    };
    for _ in 0..CONFIGS {
        let g = one(&mut rng);
        if g.max_rel_error >= result.max_rel_error {
            result.max_rel_error = g.max_rel_error;
            result.worst = g.worst;
        }
    }
    result
}

/// Binary elementwise op on two random vectors of equal length.
fn binary_case(name: &'static str, seed: u64, op: fn(&mut Tape<'_, f64>, Var, Var) -> Var) -> CaseResult {
    run_case(name, seed, |rng| {
        let d = rng.gen_range(1..=6);
        let mut store = ParamStore::new();
        let a = vec_param(&mut store, "a", vec![d], rng);
        let b = vec_param(&mut store, "b", vec![d], rng);
        let out_len = if name == "dot" { 1 } else { d };
        let r = readout(rng, out_len);
        check_gradients(&store, &[a, b], FD_STEP, |t| {
            let (x, y) = (t.param(a), t.param(b));
            let z = op(t, x, y);
            reduce(t, z, &r)
        })
    })
}

/// Unary op on one random vector; `out_len` maps input length to output length.
fn unary_case<G>(name: &'static str, seed: u64, build: G) -> CaseResult
where
    G: Fn(&mut Tape<'_, f64>, Var, usize, &[f64]) -> Var,
{
    run_case(name, seed, |rng| {
        let d = rng.gen_range(2..=7);
        let mut store = ParamStore::new();
        let a = vec_param(&mut store, "a", vec![d], rng);
        let extra = readout(rng, d);
        check_gradients(&store, &[a], FD_STEP, |t| {
            let x = t.param(a);
            build(t, x, d, &extra)
        })
    })
}

pub fn op_cases() -> Vec<CaseResult> {
    let mut out = vec![
        binary_case("add", 1, |t, a, b| t.add(a, b)),
        binary_case("sub", 2, |t, a, b| t.sub(a, b)),
        binary_case("mul", 3, |t, a, b| t.mul(a, b)),
        binary_case("dot", 4, |t, a, b| t.dot(a, b)),
        unary_case("tanh", 5, |t, x, _, r| {
            let y = t.tanh(x);
            reduce(t, y, r)
        }),
        unary_case("sigmoid", 6, |t, x, _, r| {
            let y = t.sigmoid(x);
            reduce(t, y, r)
        }),
        unary_case("square", 7, |t, x, _, r| {
            let y = t.square(x);
            reduce(t, y, r)
        }),
        unary_case("scale", 8, |t, x, _, r| {
            let y = t.scale(x, -1.7);
            reduce(t, y, r)
        }),
        unary_case("mul_const", 9, |t, x, _, r| {
            let y = t.mul_const(x, r.iter().map(|v| v * 3.0).collect());
            t.sum(y)
        }),
        unary_case("sum", 10, |t, x, _, _| {
            let y = t.square(x);
            t.sum(y)
        }),
        unary_case("slice", 11, |t, x, d, r| {
            let y = t.slice(x, 1, d - 1);
            reduce(t, y, &r[..d - 1])
        }),
        unary_case("concat", 12, |t, x, d, r| {
            let s = t.tanh(x);
            let y = t.concat(&[x, s]);
            let rr: Vec<f64> = r.iter().chain(r.iter().rev()).copied().collect();
            debug_assert_eq!(rr.len(), 2 * d);
            reduce(t, y, &rr)
        }),
        unary_case("mean", 13, |t, x, _, r| {
            let a = reduce(t, x, r);
            let sq = t.square(x);
            let b = t.sum(sq);
            t.mean(&[a, b])
        }),
        unary_case("cross_entropy", 14, |t, x, d, r| {
            let target = (r[0].abs() * d as f64) as usize % d;
            t.cross_entropy(x, target)
        }),
    ];
    out.push(run_case("matvec", 15, |rng| {
        let (rows, cols) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let mut store = ParamStore::new();
        let w = vec_param(&mut store, "w", vec![rows, cols], rng);
        let x = vec_param(&mut store, "x", vec![cols], rng);
        let r = readout(rng, rows);
        check_gradients(&store, &[w, x], FD_STEP, |t| {
            let xv = t.param(x);
            let y = t.matvec(w, xv);
            reduce(t, y, &r)
        })
    }));
    out
}

pub fn layer_cases() -> Vec<CaseResult> {
    let mut out = Vec::new();
    for (name, act, seed) in [
        ("dense_linear", Activation::None, 21),
        ("dense_tanh", Activation::Tanh, 22),
        ("dense_sigmoid", Activation::Sigmoid, 23),
    ] {
        out.push(run_case(name, seed, |rng| {
            let (i, o) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let mut store = ParamStore::new();
            let layer = Dense::register(&mut store, "d", i, o).unwrap();
            for id in [layer.w, layer.b] {
                store.get_mut(id).fill_uniform(1.0, rng);
            }
            let x = vec_param(&mut store, "x", vec![i], rng);
            let r = readout(rng, o);
            check_gradients(&store, &[layer.w, layer.b, x], FD_STEP, |t| {
                let xv = t.param(x);
                let y = layer.forward_tape(t, xv, act);
                reduce(t, y, &r)
            })
            }));
    }
    out.push(run_case("lstm_unrolled", 24, |rng| {
        let (i, k, steps) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let mut store = ParamStore::new();
        let cell = LstmCell::register(&mut store, "lstm", i, k).unwrap();
        for id in [cell.w, cell.b] {
            store.get_mut(id).fill_uniform(1.0, rng);
        }
        let xs: Vec<ParamId> = (0..steps)
            .map(|s| vec_param(&mut store, &format!("x{s}"), vec![i], rng))
            .collect();
        let h0 = vec_param(&mut store, "h0", vec![k], rng);
        let c0 = vec_param(&mut store, "c0", vec![k], rng);
        let (rh, rc) = (readout(rng, k), readout(rng, k));
        let mut ids = vec![cell.w, cell.b, h0, c0];
        ids.extend(&xs);
        check_gradients(&store, &ids, FD_STEP, |t| {
            let mut st = LstmVars {
                h: t.param(h0),
                c: t.param(c0),
            };
            for &x in &xs {
                let xv = t.param(x);
                st = cell.step_tape(t, xv, st);
            }
            let a = reduce(t, st.h, &rh);
            let b = reduce(t, st.c, &rc);
            t.add(a, b)
        })
    }));
    out
}

fn random_model(rng: &mut ChaCha8Rng, bound: f64) -> PqnModel<f64> {
    let k = rng.gen_range(1..=4);
    let q_hidden = rng.gen_range(1..=4);
    let mut model = PqnModel::zeros(ModelConfig { hidden: k, q_hidden }).unwrap();
    for id in model.store.ids() {
        model.store.get_mut(id).fill_uniform(bound, rng);
    }
    model
}

fn random_tour(n: usize, rng: &mut ChaCha8Rng) -> Tour {
    let mut rest: Vec<usize> = (1..n).collect();
    rest.shuffle(rng);
    let mut order = vec![0];
    order.extend(rest);
    Tour::new(order)
}

pub fn model_cases() -> Vec<CaseResult> {
    let mut out = Vec::new();
    out.push(run_case("attention_logits", 31, |rng| {
        let model = random_model(rng, 0.8);
        let k = model.config.hidden;
        let n = rng.gen_range(2..=5);
        let inst = generate_instance::<f64>(n, rng.gen()).unwrap();
        let mut store = model.store.clone();
        let h = vec_param(&mut store, "query", vec![k], rng);
        let feasible: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
        let feasible = if feasible.is_empty() { vec![n - 1] } else { feasible };
        let r = readout(rng, feasible.len());
        let mut ids = model.pointer.param_ids();
        ids.push(h);
        check_gradients(&store, &ids, FD_STEP, |t| {
            let enc = model.pointer.encode_tape(t, &inst).unwrap();
            let hv = t.param(h);
            let ctx = model.pointer.contexts_tape(t, hv, &enc, &feasible);
            let u = model.pointer.logits_tape(t, &ctx);
            reduce(t, u, &r)
        })
    }));
    out.push(run_case("q_network", 32, |rng| {
        let model = random_model(rng, 1.0);
        let mut store = model.store.clone();
        let ctx = vec_param(&mut store, "ctx", vec![model.config.hidden], rng);
        let mut ids = model.q.param_ids();
        ids.push(ctx);
        check_gradients(&store, &ids, FD_STEP, |t| {
            let c = t.param(ctx);
            model.q.raw_tape(t, c)
        })
    }));
    out.push(run_case("supervised_loss", 33, |rng| {
        let model = random_model(rng, 0.8);
        let n = rng.gen_range(3..=6);
        let inst = generate_instance::<f64>(n, rng.gen()).unwrap();
        let tour = random_tour(n, rng);
        check_gradients(&model.store, &model.seq_params(), FD_STEP, |t| {
            supervised_loss_tape(&model, t, &inst, &tour, PolicyKind::PtrNet, 0.95)
                .unwrap()
                .unwrap()
        })
    }));
    out.push(run_case("td_prediction", 34, |rng| {
        // The prediction path of the TD loss with every parameter trainable,
        // against fixed targets: encode, decode along a prefix, score an action.
        let model = random_model(rng, 0.8);
        let n = rng.gen_range(3..=6);
        let inst = generate_instance::<f64>(n, rng.gen()).unwrap();
        let tour = random_tour(n, rng);
        let batch: Vec<(usize, f64)> = (0..3).map(|_| (rng.gen_range(1..n), rng.gen_range(0.0..5.0))).collect();
        let mut ids = model.seq_params();
        ids.extend(model.q_params());
        check_gradients(&model.store, &ids, FD_STEP, |t| {
            let enc = model.pointer.encode_tape(t, &inst).unwrap();
            let mut errs = Vec::new();
            for &(len, target) in &batch {
                let visited = &tour.order[..len];
                let mut st = enc.final_state;
                for &c in visited {
                    st = model.pointer.decode_tape(t, c, &enc, st);
                }
                let state = env::EpisodeState::from_visited(n, visited).unwrap();
                let action = env::feasible_actions(&state)[0];
                let ctx = model.pointer.contexts_tape(t, st.h, &enc, &[action]);
                let q = model.q.raw_tape(t, ctx[0]);
                let y = t.input(vec![target]);
                let e = t.sub(q, y);
                errs.push(t.square(e));
            }
            t.mean(&errs)
        })
    }));
    out
}

pub fn all_cases() -> Vec<CaseResult> {
    let mut v = op_cases();
    v.extend(layer_cases());
    v.extend(model_cases());
    v
}
