//! Acceptance checks, one line per criterion. Runs with a custom harness:
//! `cargo test -p dimgcn --test acceptance`.
//!
//! Criterion 8 (full mammography run) needs a prepared patch manifest and
//! is skipped unless `DIMGCN_DDSM_CONFIG` names a run config.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use dimgcn::config::{DataConfig, RunConfig};
use dimgcn::run::{disentangle_checkpoint, eval_dataset};
use dimgcn_core::encoders::{
    dal_forward, Backbone, DalBank, DalRatio, DomainMechanism, EncoderConfig, ForwardCtx, GaussianPosterior,
    InputShape, Mode,
};
use dimgcn_core::gcn::{gcn_forward, gcn_forward_value, AttributeGraph};
use dimgcn_core::gradcheck::{check_gradients, check_param_gradients};
use dimgcn_core::graph::{Conv, Graph, Var};
use dimgcn_core::heads::{ClassifierHead, Decoder, DomainEmbedding, PartialFill};
use dimgcn_core::ingest::{ddsm_test_cases, load_test_list, parse_overlay, patient_split, serialize_overlay, SplitRatios, DDSM_TEST_LIST};
use dimgcn_core::metrics::evaluate_auc;
use dimgcn_core::model::{AttributeKind, DimGcn, DomainBatch, ModelConfig};
use dimgcn_core::nn::{AdamConfig, ParamStore};
use dimgcn_core::objectives::{
    bce_value, kl_divergence, kl_gaussian, loss_attribute_regression, loss_bce, loss_cls, loss_gcn, loss_rec,
    rec_value, total_loss, variance_regularizer, variance_regularizer_value, Posterior, RecMode, PROB_CLAMP,
};
use dimgcn_core::rng::{stream, Rng as ChaCha};
use dimgcn_core::synth::{generate_dataset, SpuriousConfig, SyntheticConfig};
use dimgcn_core::tensor::Tensor;
use dimgcn_core::train::{eval_ood, TrainConfig, Trainer};
use rand::Rng;

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass_if(ok: bool, detail: String) -> Outcome {
    Outcome { pass: Some(ok), detail }
}

fn uniform(rng: &mut ChaCha, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

// ---------------------------------------------------------------- 1

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// `int q log(q / p)` for one coordinate by composite Simpson over
/// `mean_q +- 14 sd_q`.
fn kl_1d_numeric(mq: f64, vq: f64, mp: f64, vp: f64) -> f64 {
    let sd = vq.sqrt();
    let (a, b) = (mq - 14.0 * sd, mq + 14.0 * sd);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let lq = log_normal_pdf(x, mq, vq);
        lq.exp() * (lq - log_normal_pdf(x, mp, vp))
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(101, 1);
    let mut worst_kl: f64 = 0.0;
    for _ in 0..20 {
        let q = rng.random_range(1..=4usize);
        let mk = |rng: &mut ChaCha| GaussianPosterior {
            mean: uniform(rng, &[1, q], -2.0, 2.0),
            log_var: uniform(rng, &[1, q], -2.0, 2.0),
        };
        let (qd, pd) = (mk(&mut rng), mk(&mut rng));
        // Independent coordinates: the divergence of the product is the sum
        // of the one-dimensional integrals.
        let numeric: f64 = (0..q)
            .map(|j| {
                kl_1d_numeric(
                    qd.mean.data()[j],
                    qd.log_var.data()[j].exp(),
                    pd.mean.data()[j],
                    pd.log_var.data()[j].exp(),
                )
            })
            .sum();
        worst_kl = worst_kl.max((kl_divergence(&qd, &pd) - numeric).abs());
    }
    let mut worst_loop: f64 = 0.0;
    for trial in 0..20 {
        let n = rng.random_range(1..=6usize);
        let c = rng.random_range(1..=5usize);
        let t = if trial % 2 == 0 {
            Tensor::new(&[n, c], (0..n * c).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect())
        } else {
            uniform(&mut rng, &[n, c], 0.0, 1.0)
        };
        // Include values beyond the clamp on both sides.
        let p = Tensor::new(
            &[n, c],
            (0..n * c)
                .map(|i| match i % 7 {
                    0 => 0.0,
                    1 => 1.0,
                    2 => 1e-9,
                    _ => rng.random_range(0.01..0.99),
                })
                .collect(),
        );
        let mut oracle = 0.0;
        for r in 0..n {
            for k in 0..c {
                let ti = t.data()[r * c + k];
                let pi = p.data()[r * c + k].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                oracle -= ti * pi.ln() + (1.0 - ti) * (1.0 - pi).ln();
            }
        }
        oracle /= n as f64;
        worst_loop = worst_loop.max((bce_value(&t, &p) - oracle).abs());

        let x = uniform(&mut rng, &[n, c], -3.0, 3.0);
        let xh = uniform(&mut rng, &[n, c], -3.0, 3.0);
        let mut sq = 0.0;
        for i in 0..n * c {
            sq += (x.data()[i] - xh.data()[i]).powi(2);
        }
        worst_loop = worst_loop.max((rec_value(&x, &xh, RecMode::Sum) - sq / n as f64).abs());
        worst_loop = worst_loop.max((rec_value(&x, &xh, RecMode::PerElementMean) - sq / (n * c) as f64).abs());
    }
    let mut worst_shift: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(2..=6usize);
        let gcn: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..3.0)).collect();
        let cls: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..3.0)).collect();
        let base = variance_regularizer_value(&gcn, &cls).unwrap();
        let (cg, cc) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let shifted = variance_regularizer_value(
            &gcn.iter().map(|v| v + cg).collect::<Vec<_>>(),
            &cls.iter().map(|v| v + cc).collect::<Vec<_>>(),
        )
        .unwrap();
        worst_shift = worst_shift.max((base - shifted).abs() / base.max(1e-12));
        let v = rng.random_range(0.0..3.0);
        let w = rng.random_range(0.0..3.0);
        worst_zero = worst_zero.max(variance_regularizer_value(&vec![v; m], &vec![w; m]).unwrap());
    }
    let elapsed = start.elapsed();
    let ok = worst_kl < 1e-4
        && worst_loop < 1e-6
        && worst_shift < 1e-9
        && worst_zero < 1e-20
        && elapsed < Duration::from_secs(60);
    pass_if(
        ok,
        format!(
            "max|KL-integral| {worst_kl:.2e}, max|loss-loop| {worst_loop:.2e}, shift rel {worst_shift:.1e}, at-equality {worst_zero:.1e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

struct GradTally {
    worst: f64,
    worst_name: String,
    counts: Vec<(String, usize)>,
}

impl GradTally {
    fn record(&mut self, name: &str, err: f64) {
        if err >= self.worst {
            self.worst = err;
            self.worst_name = name.to_string();
        }
        match self.counts.iter_mut().find(|(n, _)| n == name) {
            Some((_, c)) => *c += 1,
            None => self.counts.push((name.to_string(), 1)),
        }
    }

    fn inputs(&mut self, name: &str, inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) {
        self.record(name, check_gradients(inputs, H, f).max_relative_error());
    }
}

fn dims(rng: &mut ChaCha, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

fn primitive_checks(t: &mut GradTally, rng: &mut ChaCha) {
    for _ in 0..5 {
        let (n, c) = (dims(rng, 1, 4), dims(rng, 1, 5));
        let a = uniform(rng, &[n, c], -2.0, 2.0);
        let b = uniform(rng, &[n, c], -2.0, 2.0);
        let pos = uniform(rng, &[n, c], 0.2, 3.0);
        let k = rng.random_range(-2.0..2.0);
        t.inputs("add", &[a.clone(), b.clone()], |g, v| g.add(v[0], v[1]));
        t.inputs("sub", &[a.clone(), b.clone()], |g, v| g.sub(v[0], v[1]));
        t.inputs("mul", &[a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]));
        t.inputs("scale", &[a.clone()], |g, v| g.scale(v[0], k));
        t.inputs("offset", &[a.clone()], |g, v| g.offset(v[0], k));
        t.inputs("neg", &[a.clone()], |g, v| g.neg(v[0]));
        t.inputs("exp", &[a.clone()], |g, v| g.exp(v[0]));
        t.inputs("ln", &[pos.clone()], |g, v| g.ln(v[0]));
        t.inputs("sigmoid", &[a.clone()], |g, v| g.sigmoid(v[0]));
        t.inputs("tanh", &[a.clone()], |g, v| g.tanh(v[0]));
        t.inputs("leaky_relu", &[a.clone()], |g, v| g.leaky_relu(v[0], 0.2));
        t.inputs("clamp", &[a.clone()], |g, v| g.clamp(v[0], -2.5, 2.5));
        t.inputs("square", &[a.clone()], |g, v| g.square(v[0]));
        t.inputs("transpose", &[a.clone()], |g, v| g.transpose(v[0]));
        t.inputs("sum", &[a.clone()], |g, v| g.sum(v[0]));
        t.inputs("mean", &[a.clone()], |g, v| g.mean(v[0]));
        t.inputs("reshape", &[a.clone()], |g, v| g.reshape(v[0], &[c, n]));
        let s = uniform(rng, &[1], -1.0, 1.0);
        t.inputs("broadcast", &[s], |g, v| g.broadcast(v[0], &[n, c]));
        let scalars: Vec<Tensor> = (0..dims(rng, 1, 5)).map(|_| uniform(rng, &[1], -1.0, 1.0)).collect();
        t.inputs("stack", &scalars, |g, v| g.stack(v));
        let c2 = dims(rng, 1, 4);
        let other = uniform(rng, &[n, c2], -1.0, 1.0);
        t.inputs("concat", &[a.clone(), other], |g, v| g.concat(&[v[0], v[1]]));
        let lo = rng.random_range(0..c);
        let hi = rng.random_range(lo + 1..=c);
        t.inputs("slice_cols", &[a.clone()], move |g, v| g.slice_cols(v[0], lo, hi));
        let m = dims(rng, 1, 4);
        let w = uniform(rng, &[c, m], -1.0, 1.0);
        t.inputs("matmul", &[a.clone(), w], |g, v| g.matmul(v[0], v[1]));
        let bias = uniform(rng, &[c], -1.0, 1.0);
        t.inputs("add_channels", &[a.clone(), bias.clone()], |g, v| g.add_channels(v[0], v[1]));
        t.inputs("mul_channels", &[a.clone(), bias], |g, v| g.mul_channels(v[0], v[1]));

        let nb = dims(rng, 2, 4);
        let ch = dims(rng, 1, 3);
        let side = 2 * dims(rng, 1, 3);
        let img = uniform(rng, &[nb, ch, side, side], -1.0, 1.0);
        t.inputs("normalize", &[img.clone()], |g, v| g.normalize(v[0], 1e-5).0);
        let flat = uniform(rng, &[nb, c], -1.0, 1.0);
        t.inputs("normalize(2d)", &[flat], |g, v| g.normalize(v[0], 1e-5).0);
        t.inputs("mean_pool", &[img.clone()], |g, v| g.mean_pool(v[0]));
        let co = dims(rng, 1, 3);
        let kk = if rng.random_bool(0.5) { 3 } else { 4 };
        let conv = Conv { stride: dims(rng, 1, 2), pad: dims(rng, 0, 1) };
        let wc = uniform(rng, &[co, ch, kk, kk], -0.5, 0.5);
        t.inputs("conv2d", &[img.clone(), wc], move |g, v| g.conv2d(v[0], v[1], conv));
        let wt = uniform(rng, &[ch, co, 4, 4], -0.5, 0.5);
        let up = Conv { stride: 2, pad: 1 };
        t.inputs("conv_transpose2d", &[img, wt], move |g, v| g.conv_transpose2d(v[0], v[1], up));
    }
}

fn loss_checks(t: &mut GradTally, rng: &mut ChaCha) {
    for _ in 0..5 {
        let (n, q) = (dims(rng, 1, 4), dims(rng, 1, 4));
        let post = |rng: &mut ChaCha| [uniform(rng, &[n, q], -1.5, 1.5), uniform(rng, &[n, q], -1.5, 1.5)];
        let [qm, ql] = post(rng);
        let [pm, pl] = post(rng);
        t.inputs("kl_gaussian", &[qm, ql, pm, pl], |g, v| {
            kl_gaussian(g, Posterior { mean: v[0], log_var: v[1] }, Posterior { mean: v[2], log_var: v[3] })
        });
        let c = dims(rng, 1, 5);
        let x = uniform(rng, &[n, c], -2.0, 2.0);
        let xh = uniform(rng, &[n, c], -2.0, 2.0);
        t.inputs("loss_rec(sum)", &[x.clone(), xh.clone()], |g, v| loss_rec(g, v[0], v[1], RecMode::Sum));
        t.inputs("loss_rec(mean)", &[x.clone(), xh.clone()], |g, v| loss_rec(g, v[0], v[1], RecMode::PerElementMean));
        t.inputs("loss_attribute_regression", &[x, xh], |g, v| loss_attribute_regression(g, v[0], v[1]));
        let targets = uniform(rng, &[n, c], 0.0, 1.0);
        let probs = uniform(rng, &[n, c], 0.05, 0.95);
        for (name, f) in [
            ("loss_bce", loss_bce as fn(&mut Graph, Var, Var) -> Var),
            ("loss_gcn", loss_gcn),
            ("loss_cls", loss_cls),
        ] {
            let tg = targets.clone();
            t.inputs(name, &[probs.clone()], move |g, v| {
                let tv = g.constant(tg.clone());
                f(g, tv, v[0])
            });
        }
        let m = dims(rng, 2, 5);
        let losses: Vec<Tensor> = (0..2 * m).map(|_| uniform(rng, &[], 0.0, 2.0)).collect();
        t.inputs("variance_regularizer", &losses, |g, v| variance_regularizer(g, &v[..m], &v[m..]).unwrap());
        let terms: Vec<Tensor> = (0..4 * m).map(|_| uniform(rng, &[], 0.0, 2.0)).collect();
        let beta = rng.random_range(0.0..2.0);
        t.inputs("total_loss", &terms, move |g, v| {
            let terms: Vec<_> = v
                .chunks(4)
                .map(|c| dimgcn_core::objectives::DomainTerms { kl: c[0], rec: c[1], gcn: c[2], cls: c[3] })
                .collect();
            total_loss(g, &terms, beta, &Default::default()).unwrap()
        });
    }
}

fn enc_cfg(rng: &mut ChaCha, input: usize, domains: usize) -> EncoderConfig {
    EncoderConfig {
        input: InputShape::Vector { dim: input },
        backbone: Backbone::Mlp { hidden: (0..dims(rng, 1, 2)).map(|_| dims(rng, 3, 6)).collect() },
        q_s: dims(rng, 1, 3),
        q_a: dims(rng, 1, 3),
        q_z: dims(rng, 1, 3),
        dal_ratio: DalRatio::All,
        mechanism: DomainMechanism::Dal,
        domains,
        norm_eps: 1e-5,
        momentum: 0.1,
        leaky_slope: 0.2,
    }
}

fn module_checks(t: &mut GradTally, rng: &mut ChaCha) {
    for trial in 0..5 {
        // Domain adaptive layer: input gradient and the per-domain affine
        // parameters of the selected domain.
        let (n, c, m) = (dims(rng, 2, 5), dims(rng, 1, 4), dims(rng, 2, 4));
        let mut store = ParamStore::new();
        let bank = DalBank::new(&mut store, "dal", c, m, 1e-5);
        for e in 0..store.len() {
            let id = dimgcn_core::graph::ParamId(e);
            let shape = store.get(id).shape().to_vec();
            *store.get_mut(id) = uniform(rng, &shape, 0.5, 1.5);
        }
        let d = rng.random_range(0..m);
        let x = uniform(rng, &[n, c], -2.0, 2.0);
        {
            let (bank, store) = (&bank, &store);
            t.inputs("dal(x)", &[x.clone()], move |g, v| {
                dal_forward(g, store, v[0], d, bank, &mut ForwardCtx::new(Mode::Train)).unwrap()
            });
            t.inputs("dal(x, eval)", &[x.clone()], move |g, v| {
                dal_forward(g, store, v[0], d, bank, &mut ForwardCtx::new(Mode::Eval)).unwrap()
            });
        }
        let e = check_param_gradients(&store, H, |g, s| {
            let xv = g.constant(x.clone());
            dal_forward(g, s, xv, d, &bank, &mut ForwardCtx::new(Mode::Train)).unwrap()
        });
        t.record("dal(gamma, beta)", e.max_relative_error());

        // GCN propagation: node embeddings, correlation matrix and weights.
        let nodes = dims(rng, 2, 6);
        let emb = dims(rng, 2, 6);
        let layers = dims(rng, 1, 3);
        let mut ins = vec![uniform(rng, &[nodes, emb], -1.0, 1.0), uniform(rng, &[nodes, nodes], 0.0, 1.0)];
        let mut w_in = emb;
        for _ in 0..layers {
            let w_out = dims(rng, 1, 5);
            ins.push(uniform(rng, &[w_in, w_out], -1.0, 1.0));
            w_in = w_out;
        }
        t.inputs("gcn_layer", &ins, |g, v| gcn_forward(g, v[0], v[1], &v[2..], 0.2).unwrap());

        // Decoder and classifier against their latent inputs and weights.
        let input = dims(rng, 2, 6);
        let cfg = enc_cfg(rng, input, m);
        let mut store = ParamStore::new();
        let dec = Decoder::new(&mut store, rng, &cfg);
        let k = if trial % 2 == 0 { 1 } else { 3 };
        let hidden = dims(rng, 2, 6);
        let cls = ClassifierHead::new(&mut store, rng, cfg.q_s, cfg.q_a, hidden, k, 0.2);
        let z = uniform(rng, &[n, cfg.q_z], -1.0, 1.0);
        let s = uniform(rng, &[n, cfg.q_s], -1.0, 1.0);
        let a = uniform(rng, &[n, cfg.q_a], -1.0, 1.0);
        {
            let (dec, cls, st) = (&dec, &cls, &store);
            t.inputs("decoder(z, s, a)", &[z.clone(), s.clone(), a.clone()], move |g, v| {
                dec.decode(g, st, v[0], v[1], v[2]).unwrap()
            });
            t.inputs("classifier(s, a)", &[s.clone(), a.clone()], move |g, v| cls.classify(g, st, v[0], v[1]).unwrap());
        }
        let e = check_param_gradients(&store, H, |g, st| {
            let (zv, sv, av) = (g.constant(z.clone()), g.constant(s.clone()), g.constant(a.clone()));
            let x = dec.decode(g, st, zv, sv, av).unwrap();
            let p = cls.classify(g, st, sv, av).unwrap();
            let (sx, sp) = (g.sum(x), g.sum(p));
            g.add(sx, sp)
        });
        t.record("decoder+classifier(params)", e.max_relative_error());
    }
}

/// Full objective of a small model, differentiated with respect to every
/// trainable parameter (encoders with DAL banks, prior, decoder, GCN and
/// classifier).
fn model_checks(t: &mut GradTally, rng: &mut ChaCha) {
    for trial in 0..5 {
        let m = dims(rng, 2, 3);
        let input = dims(rng, 3, 5);
        let mut enc = enc_cfg(rng, input, m);
        if let Backbone::Mlp { hidden } = &mut enc.backbone {
            hidden.truncate(1);
        }
        let nodes = dims(rng, 2, 4);
        let binary = trial % 2 == 0;
        let classes = if trial == 3 { 3 } else { 2 };
        let cfg = ModelConfig {
            encoder: enc,
            single_branch: false,
            classes,
            prior_hidden: 4,
            domain_embedding: if trial == 4 { DomainEmbedding::Learned { dim: 2 } } else { DomainEmbedding::OneHot },
            classifier_hidden: 4,
            gcn_hidden: vec![3],
            attribute_kind: if binary { AttributeKind::Binary } else { AttributeKind::Continuous },
            scored_attributes: None,
            rec_mode: RecMode::Sum,
            partial_fill: PartialFill::Zero,
            latent_samples: 1,
        };
        let b = uniform(rng, &[nodes, nodes], 0.0, 1.0);
        let graph = AttributeGraph::one_hot((0..nodes).map(|i| format!("n{i}")).collect(), b);
        let model = DimGcn::new(cfg, graph, trial as u64).unwrap();
        let n = 4;
        let batches: Vec<DomainBatch> = (0..m)
            .map(|d| DomainBatch {
                domain: d,
                x: uniform(rng, &[n, input], -1.0, 1.0),
                attributes: if binary {
                    Tensor::new(&[n, nodes], (0..n * nodes).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect())
                } else {
                    uniform(rng, &[n, nodes], -1.0, 1.0)
                },
                labels: (0..n).map(|i| i % classes).collect(),
            })
            .collect();
        let e = check_param_gradients(&model.store, H, |g, st| {
            let mut mm = model.clone();
            mm.store = st.clone();
            let mut noise = stream(9, 9);
            let mut ctx = ForwardCtx::new(Mode::Train);
            let terms: Vec<_> =
                batches.iter().map(|bt| mm.domain_terms(g, bt, &mut ctx, &mut noise).unwrap().terms).collect();
            total_loss(g, &terms, 1.0, &Default::default()).unwrap()
        });
        t.record("model objective(params)", e.max_relative_error());
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(202, 1);
    let mut t = GradTally { worst: 0.0, worst_name: String::new(), counts: Vec::new() };
    primitive_checks(&mut t, &mut rng);
    loss_checks(&mut t, &mut rng);
    module_checks(&mut t, &mut rng);
    model_checks(&mut t, &mut rng);
    let elapsed = start.elapsed();
    let min_shapes = t.counts.iter().map(|(_, c)| *c).min().unwrap_or(0);
    let ok = t.worst < GRAD_TOL && min_shapes >= 5 && elapsed < Duration::from_secs(300);
    pass_if(
        ok,
        format!(
            "{} operations x >= {min_shapes} shapes, worst relative error {:.2e} ({}), {:.1}s",
            t.counts.len(),
            t.worst,
            t.worst_name,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn naive_gcn(h0: &Tensor, b: &Tensor, ws: &[Tensor], slope: f64) -> Vec<Vec<f64>> {
    let c = b.shape()[0];
    let mut h: Vec<Vec<f64>> = (0..c).map(|i| h0.row(i).to_vec()).collect();
    for w in ws {
        let (win, wout) = w.dims2();
        let mut bh = vec![vec![0.0; win]; c];
        for i in 0..c {
            for k in 0..c {
                for j in 0..win {
                    bh[i][j] += b.at2(i, k) * h[k][j];
                }
            }
        }
        let mut next = vec![vec![0.0; wout]; c];
        for i in 0..c {
            for j in 0..wout {
                let mut acc = 0.0;
                for k in 0..win {
                    acc += bh[i][k] * w.at2(k, j);
                }
                next[i][j] = if acc >= 0.0 { acc } else { slope * acc };
            }
        }
        h = next;
    }
    h
}

fn criterion_3() -> Outcome {
    let mut rng = stream(303, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let c = dims(&mut rng, 1, 12);
        let mut width = dims(&mut rng, 1, 8);
        let h0 = uniform(&mut rng, &[c, width], -2.0, 2.0);
        let raw = uniform(&mut rng, &[c, c], 0.0, 1.0);
        let b = Tensor::new(&[c, c], (0..c).flat_map(|i| {
            let s: f64 = raw.row(i).iter().sum();
            raw.row(i).iter().map(move |v| v / s).collect::<Vec<_>>()
        }).collect());
        let ws: Vec<Tensor> = (0..dims(&mut rng, 1, 3))
            .map(|_| {
                let out = dims(&mut rng, 1, 8);
                let w = uniform(&mut rng, &[width, out], -1.0, 1.0);
                width = out;
                w
            })
            .collect();
        let got = gcn_forward_value(&h0, &b, &ws, 0.2).unwrap();
        let want = naive_gcn(&h0, &b, &ws, 0.2);
        for (i, row) in want.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                worst = worst.max((got.at2(i, j) - v).abs());
            }
        }
    }
    let mut identity_exact = true;
    for _ in 0..10 {
        let c = dims(&mut rng, 1, 12);
        let h0 = uniform(&mut rng, &[c, c], 0.0, 3.0);
        let layers = dims(&mut rng, 1, 3);
        let out = gcn_forward_value(&h0, &Tensor::identity(c), &vec![Tensor::identity(c); layers], 0.2).unwrap();
        identity_exact &= out == h0;
    }
    pass_if(worst < 1e-6 && identity_exact, format!("50 instances max |diff| {worst:.2e}, identity case exact: {identity_exact}"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = stream(404, 1);
    let mut mismatches = 0;
    let mut ties = 0usize;
    for trial in 0..100 {
        let n = dims(&mut rng, 2, 500);
        let levels = if trial % 3 == 0 { 5 } else { 1000 };
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let (mut num, mut pos, mut neg) = (0u64, 0u64, 0u64);
        for i in 0..n {
            if labels[i] {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        for i in (0..n).filter(|&i| labels[i]) {
            for j in (0..n).filter(|&j| !labels[j]) {
                num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => {
                        ties += 1;
                        1
                    }
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        let oracle = num as f64 / (2 * pos * neg) as f64;
        if evaluate_auc(&scores, &labels).unwrap() != oracle {
            mismatches += 1;
        }
    }
    pass_if(mismatches == 0 && ties > 0, format!("100 sets, {mismatches} mismatches, {ties} tied pairs exercised"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::synthetic_default();
    let rank = match &cfg.data {
        DataConfig::Synthetic { seed, synthetic, .. } => {
            generate_dataset(synthetic, *seed).unwrap().world.rank_report().unwrap()
        }
        DataConfig::Manifest { .. } => unreachable!(),
    };
    let summary = match dimgcn::run::train(&cfg, dir.path(), |_| {}) {
        Ok(s) => s,
        Err(e) => return pass_if(false, format!("training failed: {e}")),
    };
    let ck = dimgcn::checkpoint::Checkpoint::load(&summary.checkpoint).unwrap();
    let rep = disentangle_checkpoint(&ck).unwrap();
    let ok = rank.all_blocks_pass() && rep.passes(0.8, 0.2);
    let leak: Vec<String> = (0..3).map(|i| format!("{:.3}", rep.max_leakage(dimgcn_core::synth::Block::ALL[i]))).collect();
    pass_if(
        ok,
        format!(
            "K={} rank ok {}, R2 s/a/z {:.3}/{:.3}/{:.3}, max leakage {}, {} steps, {:.0}s",
            cfg.model.classes,
            rank.all_blocks_pass(),
            rep.block_r2[0],
            rep.block_r2[1],
            rep.block_r2[2],
            leak.join("/"),
            summary.steps,
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn spurious_setup() -> SyntheticConfig {
    SyntheticConfig {
        classes: 2,
        domains: 3,
        held_out_domains: 1,
        samples_per_cell: 1000,
        class_mean_range: 0.5,
        // The channel tracks the label with domain-dependent strength and
        // flips sign in the held-out domain.
        spurious: Some(SpuriousConfig { strengths: vec![0.5, 1.5, 3.0, -2.0], noise: 0.3 }),
        ..SyntheticConfig::default()
    }
}

fn ood_auc(syn: &SyntheticConfig, seed: u64, beta: f64) -> f64 {
    let ds = generate_dataset(syn, seed).unwrap();
    let mut cfg = RunConfig::synthetic_default();
    cfg.model.classes = syn.classes;
    cfg.model.encoder.domains = syn.domains;
    cfg.model.encoder.input = InputShape::Vector { dim: syn.x_dim() };
    cfg.model.encoder.backbone = Backbone::Mlp { hidden: vec![32; 2] };
    let model = DimGcn::new(cfg.model, ds.world.attribute_graph(), seed).unwrap();
    let tc = TrainConfig {
        steps: 1500,
        batch_size: 64,
        beta,
        optimizer: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() },
        seed,
        flip: false,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(model, tc).unwrap();
    let data = ds.training_data();
    for _ in 0..1500 {
        t.step(&data).unwrap();
    }
    let ood = ds.held_out().next().unwrap().data();
    eval_ood(&t.model, &ood).unwrap().auc
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let syn = spurious_setup();
    let runs: Vec<(f64, f64)> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..3u64)
            .map(|seed| {
                let syn = &syn;
                s.spawn(move || (ood_auc(syn, seed, 0.0), ood_auc(syn, seed, 1.0)))
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let without: f64 = runs.iter().map(|r| r.0).sum::<f64>() / 3.0;
    let with: f64 = runs.iter().map(|r| r.1).sum::<f64>() / 3.0;
    let per: Vec<String> = runs.iter().map(|(a, b)| format!("{a:.3}->{b:.3}")).collect();
    pass_if(
        with >= without,
        format!(
            "mean OOD AUC beta=0 {without:.4}, beta=1 {with:.4} (per seed {}), {:.0}s",
            per.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 7

const FIXTURES: &[(&str, &str)] = &[
    ("mass_benign", include_str!("../../core/tests/fixtures/overlay/mass_benign.OVERLAY")),
    ("mass_malignant_compound", include_str!("../../core/tests/fixtures/overlay/mass_malignant_compound.OVERLAY")),
    ("two_abnormalities", include_str!("../../core/tests/fixtures/overlay/two_abnormalities.OVERLAY")),
    ("calcification_and_mass", include_str!("../../core/tests/fixtures/overlay/calcification_and_mass.OVERLAY")),
    ("core_outline", include_str!("../../core/tests/fixtures/overlay/core_outline.OVERLAY")),
    ("empty", include_str!("../../core/tests/fixtures/overlay/empty.OVERLAY")),
];

fn criterion_7() -> Outcome {
    let tokens = DDSM_TEST_LIST.split_whitespace().count();
    let listed = load_test_list(DDSM_TEST_LIST).map(|s| s.len()).unwrap_or(0);
    let list_ok = listed == tokens && listed == 75 && ddsm_test_cases().len() == 75;

    let mut round_trip_failures = Vec::new();
    for (name, text) in FIXTURES {
        match parse_overlay(text) {
            Ok(f) if serialize_overlay(&f) == *text => {}
            _ => round_trip_failures.push(*name),
        }
    }

    let patients: Vec<String> = (0..137).map(|i| format!("p{i:03}")).collect();
    let mut split_failures = 0;
    for seed in 0..100u64 {
        let a = patient_split(&patients, SplitRatios::default(), seed).unwrap();
        let b = patient_split(&patients, SplitRatios::default(), seed).unwrap();
        let keys: BTreeSet<&String> = a.keys().collect();
        let exhaustive = keys.len() == patients.len() && patients.iter().all(|p| keys.contains(p));
        if !(exhaustive && a == b) {
            split_failures += 1;
        }
    }
    pass_if(
        list_ok && round_trip_failures.is_empty() && split_failures == 0,
        format!(
            "test list {listed}/{tokens} ids, {} fixtures round-trip failures {:?}, split partition failures {split_failures}/100",
            FIXTURES.len(),
            round_trip_failures
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let Ok(path) = std::env::var("DIMGCN_DDSM_CONFIG") else {
        return Outcome {
            pass: None,
            detail: "skipped: full-scale run, set DIMGCN_DDSM_CONFIG to a manifest run config".into(),
        };
    };
    let cfg = match RunConfig::load(std::path::Path::new(&path)) {
        Ok(c) => c,
        Err(e) => return pass_if(false, format!("{path}: {e}")),
    };
    let dataset = match &cfg.data {
        DataConfig::Manifest { train_datasets, .. } => train_datasets[0].clone(),
        DataConfig::Synthetic { .. } => return pass_if(false, "config is not a manifest run".into()),
    };
    let out = cfg.output.dir.clone();
    let run = dimgcn::run::train(&cfg, &out, |_| {}).and_then(|s| {
        let ck = dimgcn::checkpoint::Checkpoint::load(&s.checkpoint)?;
        let model = ck.restore()?;
        let test = eval_dataset(&ck.config, &dataset)?;
        Ok(dimgcn_core::train::evaluate(&model, &test)?.auc)
    });
    match run {
        Ok(auc) => pass_if((auc - 0.919).abs() <= 0.03, format!("in-distribution test AUC {auc:.4} (target 0.919 +- 0.03)")),
        Err(e) => pass_if(false, format!("run failed: {e}")),
    }
}

fn main() {
    let checks: Vec<(&str, fn() -> Outcome)> = vec![
        ("loss oracles", criterion_1),
        ("gradient suite", criterion_2),
        ("GCN algebra", criterion_3),
        ("AUC oracle", criterion_4),
        ("synthetic identifiability", criterion_5),
        ("variance regularizer effect", criterion_6),
        ("ingestion", criterion_7),
        ("full DDSM run", criterion_8),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = checks.iter().map(|(_, f)| s.spawn(*f)).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Outcome { pass: Some(false), detail: "panicked".into() }))
            .collect()
    });
    let mut failed = 0;
    for (i, ((name, _), r)) in checks.iter().zip(&results).enumerate() {
        let status = match r.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("criterion {} [{status}] {name}: {}", i + 1, r.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
