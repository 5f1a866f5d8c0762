//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail. Tolerances and sizes are pinned below.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use posetraj::attention::{relative_self_attention, MultiHeadAttention};
use posetraj::autograd::Graph;
use posetraj::data::apply_random_rigid;
use posetraj::embedding::{gat_forward, GatParams};
use posetraj::exec::Exec;
use posetraj::metrics::{
    ade_pose, ade_traj, bench_forward, evaluate, evaluate_with, fde_pose, fde_traj, zero_velocity,
};
use posetraj::model::{Model, ModelConfig};
use posetraj::params::{ParamId, ParamStore};
use posetraj::presets::Preset;
use posetraj::skeleton::{build_adjacency, HorizonSpec, MotionSequence, Skeleton, Window};
use posetraj::tensor::Tensor;
use posetraj::training::{l2_loss, train, window_gradient, TrainConfig};
use posetraj::transform::{canonicalize, compute_params, decanonicalize, RigidTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const ROUND_TRIP_TOL: f64 = 1e-9;
const ROUND_TRIP_BUDGET_S: f64 = 10.0;
const CANONICAL_TOL: f64 = 1e-6;
const GLOBAL_TOL: f64 = 1e-5;
const INVARIANCE_BUDGET_S: f64 = 120.0;
const TRANSFORM_GAP_TOL: f64 = 1e-4;
const LAYER_GRAD_TOL: f64 = 1e-4;
const MODEL_GRAD_TOL: f64 = 1e-3;
/// Denominator floor for relative gradient errors. Central differences carry
/// roughly 1e-10 of absolute roundoff, so exactly-zero gradients (such as the
/// key bias, which softmax ignores) would otherwise read as large errors.
const GRAD_FLOOR: f64 = 1e-5;
const ATTENTION_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-12;
const OVERFIT_ADE_TRAJ: f64 = 0.05;
const OVERFIT_LOSS: f64 = 1e-2;
const OVERFIT_BUDGET_S: f64 = 300.0;
const SANITY_GAIN: f64 = 0.30;
const SANITY_BUDGET_S: f64 = 900.0;
const LATENCY_MEDIAN_MS: f64 = 100.0;

struct Outcome {
    ok: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` style selection by substring
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 10] = [
        ("transform_round_trip", transform_round_trip),
        ("rigid_invariance", rigid_invariance),
        ("degradation_without_transform", degradation_without_transform),
        ("gradient_correctness", gradient_correctness),
        ("attention_oracle", attention_oracle),
        ("metric_oracle", metric_oracle),
        ("overfit_smoke", overfit_smoke),
        ("learning_sanity", learning_sanity),
        ("dimension_facts", dimension_facts),
        ("non_autoregressive_latency", non_autoregressive_latency),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let tag = if o.ok { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.ok);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn transform_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let skeletons = [Arc::new(Skeleton::chain(3)), h36m()];
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let sk = &skeletons[rng.gen_range(0..2)];
        let t = rng.gen_range(5..=45);
        let seq = random_sequence(sk, t, 20.0, &mut rng);
        let delta = rng.gen_range(1..t);
        let p = compute_params(&seq, sk.root_index(), delta).unwrap();
        let back = decanonicalize(&canonicalize(&seq, &p), &p);
        for (a, b) in seq.to_flat().iter().zip(back.to_flat()) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < ROUND_TRIP_TOL && secs < ROUND_TRIP_BUDGET_S,
        format!("max error {worst:.2e} (< {ROUND_TRIP_TOL:.0e}), {secs:.2}s (< {ROUND_TRIP_BUDGET_S}s)"),
    )
}

fn rigid_invariance() -> Outcome {
    let start = Instant::now();
    let h = HorizonSpec::new(5, 5).unwrap();
    let mut cfg = tiny_config(h);
    cfg.ffn_dim = 32;
    cfg.num_heads = 2;
    let model = Model::new(cfg, h36m()).unwrap();
    let windows = walk_windows(100, h, 10.0, 200);
    let mut canon_worst: f64 = 0.0;
    let mut global_worst: f64 = 0.0;
    for (i, w) in windows.iter().enumerate() {
        let base = model.predict(&w.input).unwrap();
        for k in 0..10 {
            let (moved, g) = apply_random_rigid(&w.input, 10.0, PI, (i * 10 + k) as u64);
            let p = model.predict(&moved).unwrap();
            canon_worst = canon_worst.max(p.canonical.max_abs_diff(&base.canonical));
            let expected = g.apply_seq(&base.global).to_flat();
            for (a, b) in p.global.to_flat().iter().zip(&expected) {
                global_worst = global_worst.max((a - b).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        canon_worst < CANONICAL_TOL && global_worst < GLOBAL_TOL && secs < INVARIANCE_BUDGET_S,
        format!(
            "canonical {canon_worst:.2e} (< {CANONICAL_TOL:.0e}), global {global_worst:.2e} (< {GLOBAL_TOL:.0e}), \
             {secs:.1}s (< {INVARIANCE_BUDGET_S}s)"
        ),
    )
}

/// Moves a whole window by one rigid transform.
fn move_window(w: &Window, g: &RigidTransform) -> Window {
    Window {
        input: g.apply_seq(&w.input),
        target: g.apply_seq(&w.target),
    }
}

fn translated_copies(windows: &[Window], seed: u64) -> Vec<Window> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (_, g) = apply_random_rigid(&w.input, 10.0, 0.0, seed + i as u64);
            move_window(w, &g)
        })
        .collect()
}

fn rotated_copies(windows: &[Window], seed: u64) -> Vec<Window> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (_, g) = apply_random_rigid(&w.input, 10.0, PI, seed + i as u64);
            move_window(w, &g)
        })
        .collect()
}

fn degradation_without_transform() -> Outcome {
    let h = HorizonSpec::new(5, 5).unwrap();
    let train_set = walk_windows(40, h, 10.0, 300);
    let test = walk_windows(20, h, 10.0, 301);
    let moved = translated_copies(&test, 5000);
    let rigid = rotated_copies(&test, 6000);
    let tc = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 20,
        batch_size: 8,
        ..Default::default()
    };

    let mut rows = Vec::new();
    for canonical in [false, true] {
        let mut cfg = tiny_config(h);
        cfg.canonicalize = canonical;
        let mut model = Model::new(cfg, h36m()).unwrap();
        train(&mut model, &train_set, None, &tc, Exec::Parallel, None, |_, _, _| Ok(())).unwrap();
        let orig = evaluate(&model, &test, Exec::Parallel).unwrap().ade_traj;
        let trans = evaluate(&model, &moved, Exec::Parallel).unwrap().ade_traj;
        let both = evaluate(&model, &rigid, Exec::Parallel).unwrap().ade_traj;
        rows.push((orig, trans, both));
    }
    let (off, on) = (rows[0], rows[1]);
    let gap_on = (on.1 - on.0).abs().max((on.2 - on.0).abs());
    outcome(
        off.1 > off.0 && gap_on < TRANSFORM_GAP_TOL,
        format!(
            "no-transform ADE_Tr original {:.4} vs translated {:.4}; with transform {:.4}/{:.4}/{:.4}, gap {gap_on:.2e} (< {TRANSFORM_GAP_TOL:.0e})",
            off.0, off.1, on.0, on.1, on.2
        ),
    )
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-r..r)).collect())
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error between taped gradients of `Σ C ∘ f(x, θ)` and
/// central differences, over the input and every parameter in `ids`.
fn layer_grad_check(
    store: &ParamStore,
    ids: &[ParamId],
    x: &Tensor,
    weights: &Tensor,
    taped: impl Fn(&mut Graph, posetraj::autograd::Var) -> posetraj::autograd::Var,
    eval: impl Fn(&ParamStore, &Tensor) -> Tensor,
) -> f64 {
    let h = 1e-6;
    let mut g = Graph::new(store);
    let xv = g.variable(x.clone());
    let y = taped(&mut g, xv);
    let loss = g.dot_const(y, weights.clone());
    let grads = g.backward(loss);
    let f = |s: &ParamStore, x: &Tensor| dot(&eval(s, x), weights);

    let mut worst: f64 = 0.0;
    let gx = grads.wrt(xv).unwrap();
    for k in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[k] += h;
        let mut xm = x.clone();
        xm.data_mut()[k] -= h;
        let num = (f(store, &xp) - f(store, &xm)) / (2.0 * h);
        worst = worst.max(rel_err(gx.data()[k], num, GRAD_FLOOR));
    }
    for &id in ids {
        let gp = grads.param(id).unwrap();
        for k in 0..store.get(id).len() {
            let mut sp = store.clone();
            sp.get_mut(id).data_mut()[k] += h;
            let mut sm = store.clone();
            sm.get_mut(id).data_mut()[k] -= h;
            let num = (f(&sp, x) - f(&sm, x)) / (2.0 * h);
            worst = worst.max(rel_err(gp.data()[k], num, GRAD_FLOOR));
        }
    }
    worst
}

fn gat_grad_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let sk = Skeleton::h36m17();
    let adj = build_adjacency(&sk);
    let mut store = ParamStore::new();
    let p = GatParams::register(&mut store, "gat", 4, 2, 0.2, &mut rng);
    store.get_mut(p.bias).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
    let x = random_tensor(&mut rng, 2 * 17, 3, 1.0);
    let c = random_tensor(&mut rng, 2 * 17, 4, 1.0);
    layer_grad_check(
        &store,
        &[p.weight, p.attn, p.bias],
        &x,
        &c,
        |g, xv| p.forward(g, xv, &adj),
        |s, x| gat_forward(x, &adj, s, &p).unwrap(),
    )
}

fn attention_grad_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut store = ParamStore::new();
    let a = MultiHeadAttention::register(&mut store, "attn", 8, 2, Some(2), &mut rng);
    let ids: Vec<ParamId> = store.ids().collect();
    for &id in &ids {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
    }
    let x = random_tensor(&mut rng, 5, 8, 1.0);
    let c = random_tensor(&mut rng, 5, 8, 1.0);
    layer_grad_check(
        &store,
        &ids,
        &x,
        &c,
        |g, xv| a.self_attend(g, xv, true),
        |s, x| relative_self_attention(x, s, &a, true).unwrap(),
    )
}

fn full_model_grad_check_config() -> ModelConfig {
    let mut cfg = ModelConfig::new(3, HorizonSpec::new(3, 2).unwrap());
    cfg.j_dim = 32;
    cfg.num_layers = 1;
    cfg.num_heads = 1;
    cfg.ffn_dim = 64;
    cfg.dropout = 0.0;
    cfg
}

fn projection_grad_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(402);
    let mut model = Model::new(full_model_grad_check_config(), Arc::new(Skeleton::chain(3))).unwrap();
    let ids: Vec<ParamId> = model.params().ids().filter(|&id| model.params().name(id).starts_with("output")).collect();
    assert!(!ids.is_empty(), "output projection parameters not found");
    for &id in &ids {
        model.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
    }
    let x = random_tensor(&mut rng, 2, 96, 1.0);
    let c = random_tensor(&mut rng, 2, 9, 1.0);
    let store = model.params().clone();
    layer_grad_check(
        &store,
        &ids,
        &x,
        &c,
        |g, xv| model.project_graph(g, xv),
        |s, x| {
            let mut m = model.clone();
            *m.params_mut() = s.clone();
            m.project_output(x).unwrap()
        },
    )
}

fn full_model_grad_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(403);
    let sk = Arc::new(Skeleton::chain(3));
    let mut model = Model::new(full_model_grad_check_config(), sk.clone()).unwrap();
    let seq = random_sequence(&sk, 5, 1.0, &mut rng);
    let w = Window {
        input: seq.slice(0, 3),
        target: seq.slice(3, 2),
    };
    let prepared = model.prepare(&w).unwrap();
    let (_, grads) = window_gradient(&model, &prepared, None).unwrap();
    let loss = |m: &Model| l2_loss(&m.predict_canonical(&prepared.input).unwrap(), &prepared.target).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (id, gt) = &grads[rng.gen_range(0..grads.len())];
        let k = rng.gen_range(0..gt.len());
        let orig = model.params().get(*id).data()[k];
        model.params_mut().get_mut(*id).data_mut()[k] = orig + h;
        let up = loss(&model);
        model.params_mut().get_mut(*id).data_mut()[k] = orig - h;
        let down = loss(&model);
        model.params_mut().get_mut(*id).data_mut()[k] = orig;
        worst = worst.max(rel_err(gt.data()[k], (up - down) / (2.0 * h), GRAD_FLOOR));
    }
    worst
}

fn gradient_correctness() -> Outcome {
    let gat = gat_grad_error();
    let attn = attention_grad_error();
    let proj = projection_grad_error();
    let full = full_model_grad_error();
    outcome(
        gat < LAYER_GRAD_TOL && attn < LAYER_GRAD_TOL && proj < LAYER_GRAD_TOL && full < MODEL_GRAD_TOL,
        format!(
            "max rel err GAT {gat:.1e}, attention {attn:.1e}, projection {proj:.1e} (< {LAYER_GRAD_TOL:.0e}); \
             full model {full:.1e} (< {MODEL_GRAD_TOL:.0e})"
        ),
    )
}

/// Scalar reference for one head: weights `x·W + b`, offsets clipped to ±clip.
fn brute_attention(x: &Tensor, s: &ParamStore, a: &MultiHeadAttention, causal: bool) -> Tensor {
    let (t, d) = x.shape();
    let proj = |w: ParamId, b: ParamId, i: usize, c: usize| {
        let mut acc = s.get(b).get(0, c);
        for k in 0..d {
            acc += x.get(i, k) * s.get(w).get(k, c);
        }
        acc
    };
    let rel = a.relative.unwrap();
    let clip = rel.clip as i64;
    let bucket = |i: usize, j: usize| ((j as i64 - i as i64).clamp(-clip, clip) + clip) as usize;
    let mut heads = Tensor::zeros(t, d);
    for i in 0..t {
        let mut logits = vec![f64::NEG_INFINITY; t];
        for (j, l) in logits.iter_mut().enumerate() {
            if causal && j > i {
                continue;
            }
            let mut acc = 0.0;
            for c in 0..d {
                let q = proj(a.query.weight, a.query.bias, i, c);
                let k = proj(a.key.weight, a.key.bias, j, c) + s.get(rel.keys).get(bucket(i, j), c);
                acc += q * k;
            }
            *l = acc / (d as f64).sqrt();
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for c in 0..d {
            let mut acc = 0.0;
            for j in 0..t {
                let v = proj(a.value.weight, a.value.bias, j, c) + s.get(rel.values).get(bucket(i, j), c);
                acc += e[j] / z * v;
            }
            heads.set(i, c, acc);
        }
    }
    let mut out = Tensor::zeros(t, d);
    for i in 0..t {
        for c in 0..d {
            let mut acc = s.get(a.output.bias).get(0, c);
            for k in 0..d {
                acc += heads.get(i, k) * s.get(a.output.weight).get(k, c);
            }
            out.set(i, c, acc);
        }
    }
    out
}

fn attention_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut store = ParamStore::new();
    let a = MultiHeadAttention::register(&mut store, "attn", 6, 1, Some(1), &mut rng);
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
    }
    let mut worst: f64 = 0.0;
    let mut future_exact = true;
    for _ in 0..20 {
        let x = random_tensor(&mut rng, 3, 6, 1.0);
        for causal in [true, false] {
            let got = relative_self_attention(&x, &store, &a, causal).unwrap();
            worst = worst.max(got.max_abs_diff(&brute_attention(&x, &store, &a, causal)));
        }
        let base = relative_self_attention(&x, &store, &a, true).unwrap();
        for t in 0..2 {
            let mut y = x.clone();
            for r in t + 1..3 {
                y.row_mut(r).iter_mut().for_each(|v| *v = rng.gen_range(-5.0..5.0));
            }
            let out = relative_self_attention(&y, &store, &a, true).unwrap();
            future_exact &= (0..=t).all(|r| out.row(r) == base.row(r));
        }
    }
    outcome(
        worst < ATTENTION_TOL && future_exact,
        format!("max deviation from scalar reference {worst:.1e} (< {ATTENTION_TOL:.0e}); causal rows bit-identical under future edits: {future_exact}"),
    )
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let sk = h36m();
    let root = sk.root_index();
    let mut worst: f64 = 0.0;
    let mut shift_worst: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.gen_range(1..=30);
        let pred = random_sequence(&sk, t, 5.0, &mut rng);
        let gt = random_sequence(&sk, t, 5.0, &mut rng);
        let (p, q) = (pred.frames(), gt.frames());
        let want = naive_errors(p, q, root);
        let got = (
            ade_pose(p, q, root).unwrap(),
            fde_pose(p, q, root).unwrap(),
            ade_traj(p, q, root).unwrap(),
            fde_traj(p, q, root).unwrap(),
        );
        for (a, b) in [(got.0, want.0), (got.1, want.1), (got.2, want.2), (got.3, want.3)] {
            worst = worst.max((a - b).abs());
        }
        let shift = |s: &MotionSequence, rng: &mut ChaCha8Rng| {
            let d: [f64; 3] = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            s.map_points(|x| [x[0] + d[0], x[1] + d[1], x[2] + d[2]])
        };
        let (ps, qs) = (shift(&pred, &mut rng), shift(&gt, &mut rng));
        let moved = ade_pose(ps.frames(), qs.frames(), root).unwrap();
        shift_worst = shift_worst.max((moved - got.0).abs());
    }
    outcome(
        worst < METRIC_TOL && shift_worst < METRIC_TOL,
        format!("max deviation from loop reference {worst:.1e}; ade_pose change under translation {shift_worst:.1e} (< {METRIC_TOL:.0e})"),
    )
}

fn overfit_smoke() -> Outcome {
    let start = Instant::now();
    let h = HorizonSpec::new(5, 5).unwrap();
    let windows = walk_windows(8, h, 10.0, 700);
    let cfg = tiny_config(h);
    let mut model = Model::new(cfg, h36m()).unwrap();
    let tc = TrainConfig {
        learning_rate: 3e-3,
        min_learning_rate: Some(3e-5),
        max_epochs: 4000,
        batch_size: 8,
        ..Default::default()
    };
    let (log, _) = train(&mut model, &windows, None, &tc, Exec::Parallel, None, |_, _, _| Ok(())).unwrap();
    let loss = log.records.last().unwrap().train_loss;
    let ade = evaluate(&model, &windows, Exec::Parallel).unwrap().ade_traj;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ade < OVERFIT_ADE_TRAJ && loss < OVERFIT_LOSS && secs < OVERFIT_BUDGET_S,
        format!(
            "train ADE_Tr {ade:.4} m (< {OVERFIT_ADE_TRAJ}), final loss {loss:.4} (< {OVERFIT_LOSS:.0e}), {secs:.0}s (< {OVERFIT_BUDGET_S}s)"
        ),
    )
}

fn learning_sanity() -> Outcome {
    let start = Instant::now();
    let h = HorizonSpec::new(5, 10).unwrap();
    let train_set = walk_windows(200, h, 10.0, 800);
    let test = walk_windows(50, h, 10.0, 801);
    let mut model = Model::new(tiny_config(h), h36m()).unwrap();
    let tc = TrainConfig {
        learning_rate: 2e-3,
        min_learning_rate: Some(2e-5),
        max_epochs: 30,
        batch_size: 16,
        ..Default::default()
    };
    train(&mut model, &train_set, None, &tc, Exec::Parallel, None, |_, _, _| Ok(())).unwrap();
    let ours = evaluate(&model, &test, Exec::Parallel).unwrap().ade_traj;
    let zv = evaluate_with(&test, Exec::Parallel, |w| Ok(zero_velocity(&w.input, w.target.len())))
        .unwrap()
        .ade_traj;
    let gain = 1.0 - ours / zv;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        gain >= SANITY_GAIN && secs < SANITY_BUDGET_S,
        format!(
            "test ADE_Tr {ours:.4} vs zero-velocity {zv:.4}: {:.0}% better (>= {:.0}%), {secs:.0}s (< {SANITY_BUDGET_S}s)",
            gain * 100.0,
            SANITY_GAIN * 100.0
        ),
    )
}

fn dimension_facts() -> Outcome {
    let dims: Vec<usize> = Preset::ALL
        .iter()
        .map(|p| ModelConfig::new(p.skeleton().num_joints(), p.horizon()).model_dim())
        .collect();
    let horizons: Vec<(f64, usize, usize)> = Preset::ALL
        .iter()
        .map(|p| {
            let s = p.spec();
            (s.fps, s.input_len, s.output_len)
        })
        .collect();
    let ok = dims == [544, 992, 960] && horizons == [(10.0, 5, 20), (10.0, 5, 10), (16.0, 15, 30)];
    outcome(ok, format!("D per preset {dims:?}; (fps, T1, T2) {horizons:?}"))
}

fn non_autoregressive_latency() -> Outcome {
    let h = Preset::H36m.horizon();
    let window = &walk_windows(1, h, 10.0, 900)[0];
    let mut cfg = ModelConfig::new(17, h);
    // feed-forward width chosen so the parameter count lands near the
    // reference model's 23.2M
    cfg.ffn_dim = 512;
    let model = Model::new(cfg, h36m()).unwrap();

    let before = model.decode_calls();
    let pred = model.forward(&window.input).unwrap();
    let one_pass = model.decode_calls() - before == 1 && pred.len() == h.output_len;

    let repeats = 20;
    let stats = bench_forward(&model, &window.input, repeats).unwrap();
    let passes = model.decode_calls() - before - 1;
    let per_call = passes == repeats + posetraj::metrics::BENCH_WARMUP;

    let reference = Model::new(ModelConfig::new(17, h), h36m()).unwrap();
    let default_stats = bench_forward(&reference, &window.input, 5).unwrap();
    outcome(
        one_pass && per_call && stats.median_ms < LATENCY_MEDIAN_MS,
        format!(
            "decoder passes per prediction 1: {}; {} params, median {:.1} ms, p95 {:.1} ms (< {LATENCY_MEDIAN_MS} ms median); \
             default width ({} params) median {:.1} ms, informational",
            one_pass && per_call,
            model.num_params(),
            stats.median_ms,
            stats.p95_ms,
            reference.num_params(),
            default_stats.median_ms
        ),
    )
}
