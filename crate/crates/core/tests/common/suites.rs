//! Check suites shared by the focused test files and the acceptance run.
//! Each returns named measurements; callers decide the tolerance.

use flowpf::autodiff::{grad_check, Tape, Tensor, Var};
use flowpf::filtering::{ParticleModel, ResampleTiming};
use flowpf::flows::{CouplingLayer, FlowStack};
use flowpf::gaussian;
use flowpf::learning::{trajectory_loss, Method, TrainConfig};
use flowpf::nn::{grad_check_params, Encoder, Mlp, Normalizer, ParameterStore};
use flowpf::rng;
use flowpf::Result;
use rand::Rng;

use super::{jitter, tiny_episode, tiny_model};

const H: f64 = 1e-6;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut r = rng::stream(seed, &[0x7e57]);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

/// `Σ cᵢ yᵢ` with fixed random `c`, so every output entry matters.
fn project<'t>(y: Var<'t>) -> Result<Var<'t>> {
    let c = y.tape().constant(random(&y.shape(), 99, 0.5, 1.5));
    Ok(y.mul(c)?.sum())
}

type Unary = for<'t> fn(&'t Tape, Var<'t>) -> Result<Var<'t>>;

fn op_cases() -> Vec<(&'static str, Tensor, Unary)> {
    let m = random(&[3, 4], 1, -1.0, 1.0);
    let pos = random(&[3, 4], 2, 0.5, 2.0);
    let v = random(&[5], 3, -1.0, 1.0);
    vec![
        ("add", m.clone(), |t, x| project(x.add(t.constant(random(&[3, 4], 4, -1.0, 1.0)))?)),
        ("sub", m.clone(), |t, x| project(t.constant(random(&[3, 4], 4, -1.0, 1.0)).sub(x)?)),
        ("mul", m.clone(), |_, x| project(x.mul(x.exp())?)),
        ("div", pos.clone(), |t, x| project(t.constant(random(&[3, 4], 5, 0.5, 1.0)).div(x)?.add(x.div(x.exp())?)?)),
        ("maximum", m.clone(), |t, x| project(x.maximum(t.constant(random(&[3, 4], 6, -1.0, 1.0)))?)),
        ("scalar broadcast", m.clone(), |t, x| project(x.mul(t.scalar(1.7))?.add(t.scalar(0.3))?)),
        ("neg", m.clone(), |_, x| project(x.neg())),
        ("scale", m.clone(), |_, x| project(x.scale(-2.5))),
        ("shift", m.clone(), |_, x| project(x.shift(4.0).square())),
        ("exp", m.clone(), |_, x| project(x.exp())),
        ("log", pos.clone(), |_, x| project(x.log()?)),
        ("tanh", m.clone(), |_, x| project(x.tanh())),
        ("sqrt", pos.clone(), |_, x| project(x.sqrt()?)),
        ("square", m.clone(), |_, x| project(x.square())),
        ("clamp", m.scale_by(3.0), |_, x| project(x.clamp(-1.5, 1.5).square())),
        ("matmul", m.clone(), |t, x| project(x.matmul(t.constant(random(&[4, 2], 7, -1.0, 1.0)))?)),
        ("matmul rhs", m.clone(), |t, x| project(t.constant(random(&[2, 3], 8, -1.0, 1.0)).matmul(x)?)),
        ("transpose", m.clone(), |_, x| project(x.transpose()?.matmul(x)?)),
        ("sum", m.clone(), |_, x| Ok(x.square().sum())),
        ("mean", m.clone(), |_, x| Ok(x.exp().mean())),
        ("sum_axis 0", m.clone(), |_, x| project(x.sum_axis(0)?.square())),
        ("sum_axis 1", m.clone(), |_, x| project(x.sum_axis(1)?.square())),
        ("logsumexp", v.clone(), |_, x| Ok(x.scale(3.0).logsumexp())),
        ("concat", m.clone(), |_, x| project(Var::concat(&[x, x.square()], 1)?)),
        ("slice", m.clone(), |_, x| project(x.slice(0, 1, 3)?.exp())),
        ("cols", m.clone(), |_, x| project(x.cols(1, 3)?.exp())),
        ("reshape", m.clone(), |_, x| project(x.reshape(&[2, 6])?.exp())),
        ("broadcast_rows", v, |_, x| project(x.broadcast_rows(3)?.exp())),
        ("gather_rows", m, |_, x| project(x.gather_rows(&[2, 0, 2, 2, 1])?.exp())),
    ]
}

trait ScaleBy {
    fn scale_by(&self, c: f64) -> Tensor;
}

impl ScaleBy for Tensor {
    fn scale_by(&self, c: f64) -> Tensor {
        Tensor::new(self.shape().to_vec(), self.data().iter().map(|x| x * c).collect()).unwrap()
    }
}

fn params_case(
    out: &mut Vec<(String, f64)>,
    name: &str,
    store: &ParameterStore,
    f: impl for<'t> Fn(&'t Tape, &flowpf::nn::Params<'t>) -> Result<Var<'t>>,
) {
    let (err, worst) = grad_check_params(store, f, H, 12).unwrap();
    out.push((format!("{name} (worst at {worst})"), err));
}

/// Worst relative finite-difference error per case.
pub fn gradient_suite() -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = op_cases()
        .into_iter()
        .map(|(name, point, f)| (format!("op {name}"), grad_check(f, &point, H).unwrap()))
        .collect();

    // Networks: gradients with respect to inputs and to parameters.
    let mlp = Mlp::new("mlp", &[3, 6, 5, 2]).unwrap();
    let mut store = ParameterStore::new();
    mlp.init(&mut store, &mut rng::stream(1, &[rng::PARAMS]), false).unwrap();
    let x = random(&[4, 3], 11, -1.0, 1.0);
    let xs = x.clone();
    params_case(&mut out, "mlp parameters", &store, move |t, p| project(mlp.forward(p, t.constant(xs.clone()))?));
    let mlp = Mlp::new("mlp", &[3, 6, 5, 2]).unwrap();
    let s2 = store.clone();
    let err = grad_check(
        move |t, x| project(mlp.forward(&s2.attach_frozen(t), x)?),
        &x,
        H,
    )
    .unwrap();
    out.push(("mlp input".into(), err));

    let norm = Normalizer {
        mean: vec![0.2, -0.1, 0.4],
        std: vec![0.5, 2.0, 1.5],
    };
    let enc = Encoder::new("enc", &[12, 5, 3], norm).unwrap();
    let mut store = ParameterStore::new();
    enc.init(&mut store, &mut rng::stream(2, &[rng::PARAMS])).unwrap();
    let obs = random(&[2, 12], 12, 0.0, 1.0);
    params_case(&mut out, "encoder parameters", &store, move |t, p| project(enc.encode(t, p, &obs)?));

    // Coupling layers and stacks, including their log-determinants.
    for cond in [None, Some(3)] {
        let layer = CouplingLayer::new("c", 3, 1, cond, &[5]).unwrap();
        let mut store = ParameterStore::new();
        layer.init(&mut store, &mut rng::stream(3, &[rng::PARAMS])).unwrap();
        jitter(&mut store, 0.3, 3);
        let u = random(&[4, 3], 13, -1.0, 1.0);
        let e = random(&[1, 3], 14, -1.0, 1.0);
        let tag = if cond.is_some() { "conditional coupling" } else { "coupling" };
        let (l2, s2, e2) = (layer.clone(), store.clone(), e.clone());
        let err = grad_check(
            move |t, u| {
                let c = cond.map(|_| t.constant(e2.clone()).broadcast_rows(4)).transpose()?;
                let (x, ld) = l2.forward(&s2.attach_frozen(t), u, c)?;
                project(x)?.add(ld.sum())
            },
            &u,
            H,
        )
        .unwrap();
        out.push((format!("{tag} input and logdet"), err));
        let (l2, u2, e2) = (layer.clone(), u.clone(), e.clone());
        params_case(&mut out, &format!("{tag} parameters"), &store, move |t, p| {
            let c = cond.map(|_| t.constant(e2.clone()).broadcast_rows(4)).transpose()?;
            let (x, ld) = l2.forward(p, t.constant(u2.clone()), c)?;
            project(x)?.add(ld.sum())
        });
        let (l2, u2, s2) = (layer.clone(), u.clone(), store.clone());
        let err = grad_check(
            move |t, x| {
                let c = cond.map(|_| t.constant(e.clone()).broadcast_rows(4)).transpose()?;
                let (y, ld) = l2.inverse(&s2.attach_frozen(t), x, c)?;
                project(y)?.add(ld.sum())
            },
            &u2,
            H,
        )
        .unwrap();
        out.push((format!("{tag} inverse"), err));
        if cond.is_some() {
            let (l2, s2) = (layer, store);
            let err = grad_check(
                move |t, c| {
                    let (x, ld) = l2.forward(&s2.attach_frozen(t), t.constant(u.clone()), Some(c.broadcast_rows(4)?))?;
                    project(x)?.add(ld.sum())
                },
                &Tensor::vector(vec![0.3, -0.7, 0.2]),
                H,
            )
            .unwrap();
            out.push(("conditioner input".into(), err));
        }
    }

    let stack = FlowStack::standard("s", 2, 3, &[5], None).unwrap();
    let mut store = ParameterStore::new();
    stack.init(&mut store, &mut rng::stream(4, &[rng::PARAMS])).unwrap();
    jitter(&mut store, 0.3, 4);
    let x = random(&[5, 2], 15, -1.0, 1.0);
    params_case(&mut out, "flow stack pushforward density", &store, move |t, p| {
        Ok(stack
            .pushforward_log_density(p, gaussian::standard_normal, t.constant(x.clone()), None)?
            .sum())
    });

    // Proposal and dynamic densities of the full model, flows switched on
    // and moved away from the identity.
    let (model, mut store) = tiny_model(true, 5);
    jitter(&mut store, 0.2, 5);
    let ep = tiny_episode(1, 5);
    let prev = random(&[4, 2], 16, 0.5, 3.5);
    let noise = random(&[4, 2], 17, -1.5, 1.5);
    let (m2, ep2, prev2) = (model.clone(), ep.clone(), prev.clone());
    params_case(&mut out, "proposal density", &store, move |t, p| {
        let e = m2.encode_observations(t, p, &ep2.observations)?;
        Ok(m2.propagate(p, t.constant(prev2.clone()), ep2.actions.row(0), e, &noise)?.log_proposal.sum())
    });
    let states = random(&[4, 2], 18, 0.5, 3.5);
    let (m2, ep2, prev2, st2) = (model.clone(), ep.clone(), prev.clone(), states.clone());
    params_case(&mut out, "dynamic density", &store, move |t, p| {
        Ok(m2
            .log_dynamics(p, t.constant(st2.clone()), t.constant(prev2.clone()), ep2.actions.row(0))?
            .sum())
    });
    let (m2, s2) = (model.clone(), store.clone());
    let err = grad_check(
        move |t, s| {
            let p = s2.attach_frozen(t);
            m2.log_dynamics(&p, s, t.constant(prev.clone()), ep.actions.row(0)).map(|v| v.sum())
        },
        &states,
        H,
    )
    .unwrap();
    out.push(("dynamic density wrt state".into(), err));
    let ep = tiny_episode(1, 6);
    let (m2, states2) = (model.clone(), states.clone());
    params_case(&mut out, "measurement likelihood", &store, move |t, p| {
        let e = m2.encode_observations(t, p, &ep.observations)?;
        Ok(m2.log_likelihood(p, t.constant(states2.clone()), e)?.sum())
    });

    // The full training objective: T = 3, five particles, semi-supervised
    // with one block, resampling at every step.
    let mut cfg = TrainConfig {
        n_particles: 5,
        block_len: 3,
        n_thres: Some(6.0),
        ..TrainConfig::default()
    };
    Method::CnfSdpf.configure(&mut cfg);
    cfg.lambda2 = 0.1;
    let mut fcfg = cfg.filter_config();
    fcfg.timing = ResampleTiming::BeforePropagate;
    let ep = tiny_episode(3, 7);
    params_case(&mut out, "total loss", &store, move |t, p| {
        Ok(trajectory_loss(t, &model, p, &ep, &cfg, &fcfg, 21, 0)?.loss)
    });
    out
}

fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

fn jittered_stack(dim: usize, layers: usize, cond: Option<usize>, scale: f64, seed: u64) -> (FlowStack, ParameterStore) {
    let stack = FlowStack::standard("f", dim, layers, &[8], cond).unwrap();
    let mut store = ParameterStore::new();
    stack.init(&mut store, &mut rng::stream(seed, &[rng::PARAMS])).unwrap();
    jitter(&mut store, scale, seed);
    (stack, store)
}

/// Largest `|x − T(T⁻¹(x))|` and `|u − T⁻¹(T(u))|` over `trials` random
/// couplings and stacks, plus the largest `|logdet + inverse logdet|`.
pub fn round_trip_errors(trials: usize) -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut worst_ld = 0.0f64;
    let mut r = rng::stream(31, &[0x7219]);
    let mut k = 0;
    while k < trials {
        let dim = r.gen_range(2..=4);
        let cond = if r.gen_bool(0.5) { Some(r.gen_range(1..=3)) } else { None };
        let seed = r.gen::<u64>();
        let (stack, store) = if r.gen_bool(0.5) {
            let split = r.gen_range(1..dim);
            let layer = CouplingLayer::new("f.0", dim, split, cond, &[8]).unwrap();
            let steps = vec![flowpf::flows::FlowStep::Coupling(layer)];
            let stack = FlowStack::from_steps(dim, cond, steps).unwrap();
            let mut store = ParameterStore::new();
            stack.init(&mut store, &mut rng::stream(seed, &[rng::PARAMS])).unwrap();
            jitter(&mut store, 0.5, seed);
            (stack, store)
        } else {
            jittered_stack(dim, r.gen_range(1..=5), cond, 0.5, seed)
        };
        // One parameter draw serves a batch of 50 trials.
        let n = 50.min(trials - k);
        let tape = Tape::new();
        let p = store.attach_frozen(&tape);
        let x = Tensor::new(vec![n, dim], (0..n * dim).map(|_| r.gen_range(-3.0..3.0)).collect()).unwrap();
        let c = cond.map(|e| {
            tape.constant(Tensor::new(vec![n, e], (0..n * e).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap())
        });
        let xv = tape.constant(x.clone());
        let (u, ld_inv) = stack.inverse(&p, xv, c).unwrap();
        let (back, ld_fwd) = stack.forward(&p, u, c).unwrap();
        let (y, _) = stack.forward(&p, xv, c).unwrap();
        let (back2, _) = stack.inverse(&p, y, c).unwrap();
        for (a, b) in x.data().iter().zip(back.to_vec()) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in x.data().iter().zip(back2.to_vec()) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in ld_inv.to_vec().iter().zip(ld_fwd.to_vec()) {
            worst_ld = worst_ld.max((a + b).abs());
        }
        k += n;
    }
    (worst, worst_ld)
}

/// Relative error of the analytic log-determinant against a central
/// difference Jacobian, worst over a few points, for each dimension.
pub fn logdet_errors() -> Vec<(usize, f64)> {
    let mut r = rng::stream(32, &[0x7219]);
    [2usize, 3, 4]
        .into_iter()
        .map(|dim| {
            let (stack, store) = jittered_stack(dim, 4, Some(2), 0.4, 40 + dim as u64);
            let cond = Tensor::matrix(1, 2, vec![0.4, -0.9]).unwrap();
            let f = |x: &[f64]| -> (Vec<f64>, f64) {
                let tape = Tape::new();
                let p = store.attach_frozen(&tape);
                let xv = tape.constant(Tensor::matrix(1, dim, x.to_vec()).unwrap());
                let (y, ld) = stack.forward(&p, xv, Some(tape.constant(cond.clone()))).unwrap();
                (y.to_vec(), ld.item())
            };
            let mut worst = 0.0f64;
            for _ in 0..5 {
                let x: Vec<f64> = (0..dim).map(|_| r.gen_range(-2.0..2.0)).collect();
                let (_, analytic) = f(&x);
                let h = 1e-5;
                let mut jac = vec![vec![0.0; dim]; dim];
                for j in 0..dim {
                    let mut xp = x.clone();
                    xp[j] += h;
                    let mut xm = x.clone();
                    xm[j] -= h;
                    let (yp, _) = f(&xp);
                    let (ym, _) = f(&xm);
                    for i in 0..dim {
                        jac[i][j] = (yp[i] - ym[i]) / (2.0 * h);
                    }
                }
                let numeric = det(jac).abs().ln();
                worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
            }
            (dim, worst)
        })
        .collect()
}

/// Midpoint-rule integral of a 2-d pushforward of the standard normal.
pub fn pushforward_mass() -> f64 {
    let (stack, store) = jittered_stack(2, 4, None, 0.3, 51);
    let (lo, hi, m) = (-12.0, 12.0, 600usize);
    let dx = (hi - lo) / m as f64;
    let mut total = 0.0;
    for row in 0..m {
        let y = lo + (row as f64 + 0.5) * dx;
        let pts: Vec<f64> = (0..m).flat_map(|c| [lo + (c as f64 + 0.5) * dx, y]).collect();
        let tape = Tape::new();
        let p = store.attach_frozen(&tape);
        let x = tape.constant(Tensor::matrix(m, 2, pts).unwrap());
        let logp = stack.pushforward_log_density(&p, gaussian::standard_normal, x, None).unwrap();
        total += logp.to_vec().iter().map(|l| l.exp()).sum::<f64>() * dx * dx;
    }
    total
}

/// Plain-number bootstrap filter sharing the engine's random streams, run
/// against the engine on a flow model whose flows are still the identity.
/// Returns the largest per-step difference in normalized weights.
pub fn bootstrap_reduction_error(steps: usize) -> f64 {
    use flowpf::filtering::{run_filter, step_noise, FilterConfig, InitialDistribution};

    let (model, store) = tiny_model(true, 8);
    let ep = tiny_episode(steps, 8);
    let (seed, traj, n) = (17u64, 3u64, 16usize);
    let mut cfg = FilterConfig::new(n, InitialDistribution::gaussian(1.0));
    cfg.n_thres = 12.0;

    let tape = Tape::new();
    let p = store.attach_frozen(&tape);
    let run = run_filter(&tape, &model, &p, &ep, &cfg, seed, traj).unwrap();

    let features = model.encode_observations(&tape, &p, &ep.observations).unwrap();
    let sigma = &model.config.sigma_dyn;
    let mut states: Vec<[f64; 2]> = cfg
        .init
        .sample(n, &ep.initial_state, &mut rng::stream(seed, &[rng::INIT, traj]))
        .unwrap()
        .data()
        .chunks(2)
        .map(|c| [c[0], c[1]])
        .collect();
    let mut w = vec![1.0 / n as f64; n];
    let mut worst = 0.0f64;
    for t in 1..=steps {
        let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        if ess < cfg.n_thres {
            let beta = cfg.beta;
            let v: Vec<f64> = w.iter().map(|x| beta * x + (1.0 - beta) / n as f64).collect();
            let mut cdf = Vec::with_capacity(n);
            let mut acc = 0.0;
            for x in &v {
                acc += x;
                cdf.push(acc);
            }
            let mut r = rng::stream(seed, &[rng::RESAMPLE, traj, t as u64]);
            let ancestors: Vec<usize> = (0..n)
                .map(|_| {
                    let u = r.gen::<f64>() * acc;
                    cdf.iter().position(|&c| c > u).unwrap_or(n - 1)
                })
                .collect();
            let ratio: Vec<f64> = ancestors.iter().map(|&a| w[a] / v[a]).collect();
            let total: f64 = ratio.iter().sum();
            w = ratio.iter().map(|x| x / total).collect();
            states = ancestors.iter().map(|&a| states[a]).collect();
        }
        let noise = step_noise(seed, traj, t, n, 2);
        let prev = tape.constant(Tensor::matrix(n, 2, states.iter().flatten().copied().collect()).unwrap());
        let motion = model.dynamics.motion(&p, prev, ep.actions.row(t - 1)).unwrap().to_vec();
        for (i, s) in states.iter_mut().enumerate() {
            for k in 0..2 {
                s[k] += motion[2 * i + k] + sigma[k] * noise.data()[2 * i + k];
            }
        }
        let moved = tape.constant(Tensor::matrix(n, 2, states.iter().flatten().copied().collect()).unwrap());
        let log_l = model
            .log_likelihood(&p, moved, features.slice(0, t - 1, t).unwrap())
            .unwrap()
            .to_vec();
        let unnorm: Vec<f64> = w.iter().zip(&log_l).map(|(x, l)| x * l.exp()).collect();
        let total: f64 = unnorm.iter().sum();
        w = unnorm.iter().map(|x| x / total).collect();

        for (a, b) in w.iter().zip(run.steps[t - 1].ensemble.weights()) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Per-step check of a bootstrap filter against the Kalman posterior on a
/// 1-d random walk. Returns, over all seeds and steps, the fraction of
/// steps within `3·se` (with `se = posterior std / √ESS`) and the fraction
/// within `3·C·std/√N`, `C = 3`.
pub fn kalman_agreement(n: usize, steps: usize, seeds: u64) -> (f64, f64) {
    use flowpf::filtering::{kalman_oracle, run_filter, Episode, FilterConfig, InitialDistribution, LinearGaussian};
    use rand_distr::{Distribution, StandardNormal};

    let (a, q, r_std) = (0.9, 1.0, 0.7);
    let model = LinearGaussian::scalar(a, q, r_std).unwrap();
    let (mut tight, mut loose, mut total) = (0usize, 0usize, 0usize);
    for seed in 0..seeds {
        let mut r = rng::stream(seed, &[rng::DATA]);
        let mut x = 0.0;
        let mut obs = Vec::with_capacity(steps);
        for _ in 0..steps {
            let e: f64 = StandardNormal.sample(&mut r);
            x = a * x + q * e;
            let e: f64 = StandardNormal.sample(&mut r);
            obs.push(x + r_std * e);
        }
        let observations = Tensor::matrix(steps, 1, obs).unwrap();
        let actions = Tensor::zeros(&[steps, 0]);
        let kf = kalman_oracle(&model, &[0.0], &[1.0], &observations, &actions).unwrap();
        let ep = Episode {
            observations,
            actions,
            truths: None,
            initial_state: vec![0.0],
        };
        let cfg = FilterConfig::new(n, InitialDistribution::gaussian(1.0));
        let tape = Tape::new();
        let p = ParameterStore::new().attach_frozen(&tape);
        let run = run_filter(&tape, &model, &p, &ep, &cfg, seed, 0).unwrap();
        for (t, s) in run.steps.iter().enumerate() {
            let err = (s.estimate.item() - kf.means[t][0]).abs();
            let std = kf.std(t)[0];
            if err <= 3.0 * std / s.ess.sqrt() {
                tight += 1;
            }
            if err <= 9.0 * std / (n as f64).sqrt() {
                loose += 1;
            }
            total += 1;
        }
    }
    (tight as f64 / total as f64, loose as f64 / total as f64)
}

/// Soft resampling of fixed weights, `trials` times, for each `β`.
///
/// Returns `(β, bias, se, normalized bias, normalized se)`. The first pair
/// is for the properly weighted mean `(1/N) Σ (w/v)ₐ xₐ`; the second for
/// the mean under the renormalized weights, a ratio estimator whose bias
/// is `O(1/N)`.
pub fn soft_resampling_bias(n: usize, trials: usize) -> Vec<(f64, f64, f64, f64, f64)> {
    use flowpf::filtering::{soft_probs, soft_resample, ParticleEnsemble};

    let mut r = rng::stream(5, &[0xb1a5]);
    let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..1.0f64)).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let xs: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
    let target: f64 = w.iter().zip(&xs).map(|(a, b)| a * b).sum();
    [0.25, 0.5, 1.0]
        .into_iter()
        .map(|beta| {
            let v = soft_probs(&w, beta);
            let (proper, normalized): (Vec<f64>, Vec<f64>) = (0..trials)
                .map(|k| {
                    let tape = Tape::new();
                    let ens = ParticleEnsemble {
                        states: tape.constant(Tensor::matrix(n, 1, xs.clone()).unwrap()),
                        log_weights: tape.constant(Tensor::vector(w.iter().map(|x| x.ln()).collect())),
                        t: 1,
                    };
                    let mut rr = rng::stream(k as u64, &[rng::RESAMPLE, (beta * 100.0) as u64]);
                    let (out, ancestors) = soft_resample(ens, beta, &mut rr).unwrap();
                    let proper = ancestors.iter().map(|&a| w[a] / v[a] * xs[a]).sum::<f64>() / n as f64;
                    (proper, out.estimate().unwrap().item())
                })
                .unzip();
            let se = |xs: &[f64]| super::std(xs) / (trials as f64).sqrt();
            (
                beta,
                (super::mean(&proper) - target).abs(),
                se(&proper),
                (super::mean(&normalized) - target).abs(),
                se(&normalized),
            )
        })
        .collect()
}

/// Worst relative error between log-space block pseudo-likelihoods and
/// the direct product along backward-traced lineages, over `N_p ≤ 3`,
/// `L ≤ 3`, two blocks each, resampling at every step.
pub fn pseudo_likelihood_agreement() -> f64 {
    use flowpf::filtering::run_filter;
    use flowpf::learning::{block_log_prior, direct_product_pseudo_likelihood, run_block_pseudo_likelihood};

    let (model, mut store) = tiny_model(true, 9);
    jitter(&mut store, 0.2, 9);
    let mut worst = 0.0f64;
    for n in 1..=3 {
        for l in 1..=3 {
            let ep = tiny_episode(2 * l, 10 + (n * 3 + l) as u64);
            let mut cfg = TrainConfig {
                n_particles: n,
                block_len: l,
                n_thres: Some(n as f64 + 1.0),
                ..TrainConfig::default()
            };
            Method::CnfSdpf.configure(&mut cfg);
            let fcfg = cfg.filter_config();
            let tape = Tape::new();
            let p = store.attach_frozen(&tape);
            let run = run_filter(&tape, &model, &p, &ep, &fcfg, 3, 0).unwrap();
            let exp = |v: Var<'_>| v.to_vec().into_iter().map(f64::exp).collect::<Vec<f64>>();
            for b in 0..2 {
                let q = run_block_pseudo_likelihood(&run, b, l, &fcfg.init, &ep.initial_state).unwrap().item();
                let prior = exp(block_log_prior(&run, b, l, &fcfg.init, &ep.initial_state).unwrap());
                let steps: Vec<_> = run.steps[b * l..(b + 1) * l]
                    .iter()
                    .map(|s| (s.parents.clone(), exp(s.log_dynamics), exp(s.log_likelihood)))
                    .collect();
                let direct = direct_product_pseudo_likelihood(
                    &prior,
                    &steps,
                    &exp(run.steps[(b + 1) * l - 1].ensemble.log_weights),
                );
                worst = worst.max((q - direct).abs() / direct.abs().max(1e-300));
            }
        }
    }
    worst
}

/// Identity flows, three particles, one 3-step block: `Q̂` against a
/// hand-composed sum of Gaussian and clamped-cosine log terms along each
/// lineage. Returns the absolute difference.
pub fn identity_flow_pseudo_likelihood_error() -> f64 {
    use flowpf::filtering::run_filter;
    use flowpf::learning::run_block_pseudo_likelihood;

    let (model, store) = tiny_model(true, 12);
    let ep = tiny_episode(3, 12);
    let mut cfg = TrainConfig {
        n_particles: 3,
        block_len: 3,
        n_thres: Some(4.0),
        ..TrainConfig::default()
    };
    Method::CnfSdpf.configure(&mut cfg);
    let fcfg = cfg.filter_config();
    let tape = Tape::new();
    let p = store.attach_frozen(&tape);
    let run = run_filter(&tape, &model, &p, &ep, &fcfg, 4, 0).unwrap();
    let q = run_block_pseudo_likelihood(&run, 0, 3, &fcfg.init, &ep.initial_state).unwrap().item();

    let states: Vec<Vec<[f64; 2]>> = run
        .steps
        .iter()
        .map(|s| s.ensemble.states.to_vec().chunks(2).map(|c| [c[0], c[1]]).collect())
        .collect();
    let obs_embed = model.encode_observations(&tape, &p, &ep.observations).unwrap().to_tensor();
    let sigma = model.config.sigma_dyn.clone();
    let log_l = |t: usize, s: [f64; 2]| -> f64 {
        let e = model
            .measurement
            .state_encoder
            .encode_var(&p, tape.constant(Tensor::matrix(1, 2, s.to_vec()).unwrap()))
            .unwrap()
            .to_vec();
        let o = obs_embed.row(t);
        let dot: f64 = e.iter().zip(o).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = dot / (norm(&e) * norm(o));
        -(1.0 - cos).max(model.config.eps_d).ln()
    };
    let log_p = |t: usize, s: [f64; 2], prev: [f64; 2]| -> f64 {
        let f = model
            .dynamics
            .motion(&p, tape.constant(Tensor::matrix(1, 2, prev.to_vec()).unwrap()), ep.actions.row(t))
            .unwrap()
            .to_vec();
        gaussian::log_density_scalar(&s, &[prev[0] + f[0], prev[1] + f[1]], &sigma)
    };
    let w = run.steps[2].ensemble.weights();
    let mut hand = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let i2 = run.steps[2].parent(i);
        let i1 = run.steps[1].parent(i2);
        let (s1, s2, s3) = (states[0][i1], states[1][i2], states[2][i]);
        let log_eta = gaussian::log_density_scalar(&s1, &ep.initial_state, &[fcfg.init.sigma; 2])
            + log_l(0, s1)
            + log_p(1, s2, s1)
            + log_l(1, s2)
            + log_p(2, s3, s2)
            + log_l(2, s3);
        hand += wi * log_eta;
    }
    (q - hand).abs()
}

/// Mean training-set loss at fixed filter randomness, for watching the
/// objective epoch by epoch.
pub fn mean_train_loss(
    model: &flowpf::filtering::FlowModel,
    store: &ParameterStore,
    episodes: &[flowpf::filtering::Episode],
    cfg: &TrainConfig,
) -> f64 {
    let fcfg = cfg.filter_config();
    let total: f64 = episodes
        .iter()
        .enumerate()
        .map(|(i, ep)| {
            let tape = Tape::new();
            let p = store.attach_frozen(&tape);
            trajectory_loss(&tape, model, &p, ep, cfg, &fcfg, 1234, i as u64).unwrap().loss.item()
        })
        .sum();
    total / episodes.len() as f64
}
