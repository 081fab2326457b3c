//! The full gradient suite: every tape op, the composite layers and the two
//! end-to-end training objectives, each on several random instances.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compare_at, GradCheckError, DEFAULT_STEP, TOLERANCE};
use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::ModelError;
use crate::generator::{ChannelSchedule, Generator, GeneratorConfig};
use crate::geometry::{self, Pose};
use crate::layers::{self, MappingNetwork};
use crate::losses::LossWeights;
use crate::params::ParamStore;
use crate::tensor::{BranchPattern, Tape, Tensor, TensorError, Var};
use crate::training::{discriminator_loss, generator_loss, sample_latents};

/// Parameter coordinates probed per tensor in the end-to-end checks.
const COORDS_PER_PARAM: usize = 3;

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    /// Random instances per check.
    pub instances: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Scales the analytic gradient of the named check by 1.5, to exercise
    /// the failure path.
    pub inject_fault: Option<String>,
    /// Run only checks whose name contains this string.
    pub filter: Option<String>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            instances: 3,
            seed: 0,
            step: DEFAULT_STEP,
            tolerance: TOLERANCE,
            inject_fault: None,
            filter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    /// Largest relative error over all instances, or `None` if a check
    /// could not be evaluated.
    pub max_error: Option<f64>,
    pub error: Option<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub outcomes: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            let verdict = if o.passed { "PASS" } else { "FAIL" };
            match (&o.max_error, &o.error) {
                (_, Some(e)) => writeln!(f, "{verdict} {:<24} error: {e}", o.name)?,
                (Some(err), None) => {
                    writeln!(f, "{verdict} {:<24} max rel err {err:.3e} over {} instances", o.name, o.instances)?
                }
                (None, None) => writeln!(f, "{verdict} {:<24}", o.name)?,
            }
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} checks, {} failed (tolerance {:.0e})",
            self.outcomes.len(),
            failed,
            self.tolerance
        )
    }
}

type Graph = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>;

struct Ctx {
    rng: ChaCha8Rng,
    h: f64,
    fault: f64,
}

impl Ctx {
    fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| self.rng.random_range(lo..hi))
    }

    /// Values bounded away from zero, for ops with a kink there.
    fn off_zero(&mut self, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| {
            let m = self.rng.random_range(0.1..2.0);
            if self.rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
    }

    /// Checks `graph` with respect to each input in turn, the others held
    /// constant; returns the worst relative error.
    fn check(&mut self, inputs: &[Tensor<f64>], graph: &Graph) -> Result<f64, GradCheckError> {
        let mut worst = 0.0f64;
        for k in 0..inputs.len() {
            let build = |tape: &mut Tape<f64>, probe: &Tensor<f64>, grad: bool| -> Result<(Var, Var), TensorError> {
                let vars: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        if i == k {
                            tape.leaf(probe.clone(), grad)
                        } else {
                            tape.constant(t.clone())
                        }
                    })
                    .collect();
                Ok((vars[k], graph(tape, &vars)?))
            };
            let mut tape = Tape::new();
            let (leaf, loss) = build(&mut tape, &inputs[k], true)?;
            tape.backward(loss)?;
            let analytic = tape
                .grad(leaf)
                .map(|g| g.map(|v| v * self.fault))
                .unwrap_or_else(|| Tensor::zeros(inputs[k].shape().to_vec()));
            let eval = |probe: &Tensor<f64>| -> Result<f64, TensorError> {
                let mut t = Tape::new();
                let (_, out) = build(&mut t, probe, false)?;
                Ok(t.value(out).item())
            };
            let coords: Vec<usize> = (0..inputs[k].len()).collect();
            worst = worst.max(compare_at(eval, &analytic, &inputs[k], self.h, &coords)?);
        }
        Ok(worst)
    }
}

/// `Σ y ⊙ r` for a fixed random `r`, so every output element matters with a
/// distinct weight.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor::from_fn(tape.shape(y).to_vec(), |_| rng.random_range(-1.0..1.0));
    let r = tape.constant(r);
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

fn model_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => TensorError::Contract {
            op: "gradcheck",
            detail: other.to_string(),
        },
    }
}

type CheckFn = fn(&mut Ctx, u64) -> Result<f64, GradCheckError>;

fn op_checks() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("add", |c, s| {
            let x = [c.uniform(&[3, 4], -1.0, 1.0), c.uniform(&[3, 4], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.add(v[0], v[1])?;
                weighted_sum(t, y, s)
            })
        }),
        ("sub", |c, s| {
            let x = [c.uniform(&[5], -1.0, 1.0), c.uniform(&[5], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.sub(v[0], v[1])?;
                weighted_sum(t, y, s)
            })
        }),
        ("mul", |c, s| {
            let x = [c.uniform(&[2, 3], -2.0, 2.0), c.uniform(&[2, 3], -2.0, 2.0)];
            c.check(&x, &move |t, v| {
                let y = t.mul(v[0], v[1])?;
                weighted_sum(t, y, s)
            })
        }),
        ("scale", |c, s| {
            let x = [c.uniform(&[4], -1.0, 1.0)];
            let k = c.rng.random_range(-3.0..3.0);
            c.check(&x, &move |t, v| {
                let y = t.scale(v[0], k);
                weighted_sum(t, y, s)
            })
        }),
        ("leaky_relu", |c, s| {
            let x = [c.off_zero(&[3, 5])];
            c.check(&x, &move |t, v| {
                let y = t.lrelu(v[0]);
                weighted_sum(t, y, s)
            })
        }),
        ("tanh", |c, s| {
            let x = [c.uniform(&[6], -3.0, 3.0)];
            c.check(&x, &move |t, v| {
                let y = t.tanh(v[0]);
                weighted_sum(t, y, s)
            })
        }),
        ("softplus", |c, s| {
            let x = [c.uniform(&[6], -8.0, 8.0)];
            c.check(&x, &move |t, v| {
                let y = t.softplus(v[0]);
                weighted_sum(t, y, s)
            })
        }),
        ("reshape", |c, s| {
            let x = [c.uniform(&[2, 3, 4], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.reshape(v[0], vec![4, 6])?;
                weighted_sum(t, y, s)
            })
        }),
        ("concat", |c, s| {
            let x = [c.uniform(&[2, 3, 2], -1.0, 1.0), c.uniform(&[2, 1, 2], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.concat(&[v[0], v[1]], 1)?;
                weighted_sum(t, y, s)
            })
        }),
        ("narrow", |c, s| {
            let x = [c.uniform(&[3, 6], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.narrow(v[0], 1, 2, 3)?;
                weighted_sum(t, y, s)
            })
        }),
        ("repeat_batch", |c, s| {
            let x = [c.uniform(&[2, 2, 3], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.repeat_batch(v[0], 3);
                weighted_sum(t, y, s)
            })
        }),
        ("matmul", |c, s| {
            let x = [c.uniform(&[3, 4], -1.0, 1.0), c.uniform(&[4, 2], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.matmul(v[0], v[1])?;
                weighted_sum(t, y, s)
            })
        }),
        ("linear", |c, s| {
            let x = [
                c.uniform(&[3, 4], -1.0, 1.0),
                c.uniform(&[4, 5], -1.0, 1.0),
                c.uniform(&[5], -1.0, 1.0),
            ];
            c.check(&x, &move |t, v| {
                let y = t.linear(v[0], v[1], v[2])?;
                weighted_sum(t, y, s)
            })
        }),
        ("conv2d", |c, s| {
            let x = [
                c.uniform(&[2, 6, 5, 2], -1.0, 1.0),
                c.uniform(&[3, 3, 2, 3], -1.0, 1.0),
                c.uniform(&[3], -1.0, 1.0),
            ];
            let stride = 1 + (s as usize % 2);
            c.check(&x, &move |t, v| {
                let y = t.conv2d(v[0], v[1], v[2], stride, 1)?;
                weighted_sum(t, y, s)
            })
        }),
        ("conv3d", |c, s| {
            let x = [
                c.uniform(&[1, 4, 3, 4, 2], -1.0, 1.0),
                c.uniform(&[3, 3, 3, 2, 2], -1.0, 1.0),
                c.uniform(&[2], -1.0, 1.0),
            ];
            c.check(&x, &move |t, v| {
                let y = t.conv3d(v[0], v[1], v[2], 1, 1)?;
                weighted_sum(t, y, s)
            })
        }),
        ("upsample_nearest", |c, s| {
            let x = [c.uniform(&[2, 2, 3, 2, 2], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.upsample_nearest(v[0], 2)?;
                weighted_sum(t, y, s)
            })
        }),
        ("trilinear_resample", |c, s| {
            let x = [c.uniform(&[2, 3, 4, 3, 2], -1.0, 1.0)];
            let grid = c.uniform(&[2, 3, 2, 2, 3], -0.7, 3.7);
            c.check(&x, &move |t, v| {
                let y = t.trilinear_resample(v[0], grid.clone())?;
                weighted_sum(t, y, s)
            })
        }),
        ("sum", |c, _| {
            let x = [c.uniform(&[3, 3], -1.0, 1.0)];
            c.check(&x, &|t, v| {
                let y = t.tanh(v[0]);
                Ok(t.sum(y))
            })
        }),
        ("mean", |c, _| {
            let x = [c.uniform(&[4, 2], -1.0, 1.0)];
            c.check(&x, &|t, v| {
                let y = t.tanh(v[0]);
                Ok(t.mean(y))
            })
        }),
        ("mean_axes", |c, s| {
            let x = [c.uniform(&[2, 3, 4, 2], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.mean_axes(v[0], &[1, 2])?;
                weighted_sum(t, y, s)
            })
        }),
        ("std_axes", |c, s| {
            let x = [c.uniform(&[2, 3, 4, 2], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.std_axes(v[0], &[1, 2])?;
                weighted_sum(t, y, s)
            })
        }),
        ("instance_norm", |c, s| {
            let x = [c.uniform(&[2, 3, 3, 2, 2], -1.0, 1.0)];
            c.check(&x, &move |t, v| {
                let y = t.instance_norm(v[0])?;
                weighted_sum(t, y, s)
            })
        }),
        ("channel_affine", |c, s| {
            let x = [
                c.uniform(&[2, 3, 3, 2], -1.0, 1.0),
                c.uniform(&[2, 2], -1.0, 1.0),
                c.uniform(&[2, 2], -1.0, 1.0),
            ];
            c.check(&x, &move |t, v| {
                let y = t.channel_affine(v[0], v[1], v[2])?;
                weighted_sum(t, y, s)
            })
        }),
        ("spectral_scale", |c, s| {
            let x = [c.uniform(&[3, 3, 2, 3], -1.0, 1.0)];
            let mut u: Vec<f64> = (0..3).map(|_| c.rng.random_range(-1.0..1.0)).collect();
            layers::power_iteration(&x[0], &mut u, 3);
            c.check(&x, &move |t, v| {
                let y = layers::spectral_normalize(t, v[0], &u).map_err(model_err)?;
                weighted_sum(t, y, s)
            })
        }),
    ]
}

fn composite_checks() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("adain", |c, s| {
            let x = [
                c.uniform(&[2, 3, 3, 3], -1.0, 1.0),
                c.uniform(&[2, 3], 0.5, 1.5),
                c.uniform(&[2, 3], -1.0, 1.0),
            ];
            c.check(&x, &move |t, v| {
                let style = layers::StyleParams {
                    gamma: v[1],
                    beta: v[2],
                };
                let y = layers::adain(t, v[0], style).map_err(model_err)?;
                weighted_sum(t, y, s)
            })
        }),
        ("mapping_network", |c, s| {
            let net = MappingNetwork::new("m", 3, 4).with_site("a", 2);
            let mut store = ParamStore::new();
            net.init_params(&mut store, &mut c.rng);
            // Larger weights than the default init so the layer is not
            // nearly linear.
            for (_, p) in store.params_mut() {
                *p = p.map(|v| v * 20.0);
            }
            let names: Vec<String> = store.names().map(str::to_string).collect();
            let mut inputs = vec![c.uniform(&[2, 3], -1.0, 1.0)];
            inputs.extend(names.iter().map(|n| store.get(n).unwrap().clone()));
            c.check(&inputs, &move |t, v| {
                let mut local = ParamStore::new();
                for (n, &var) in names.iter().zip(&v[1..]) {
                    local.insert(n.clone(), t.value(var).clone());
                }
                // Route the bound parameters through the tape vars directly.
                let style = map_with_vars(t, &net, &names, &v[1..], v[0]).map_err(model_err)?;
                drop(local);
                let g = weighted_sum(t, style.gamma, s)?;
                let b = weighted_sum(t, style.beta, s + 1)?;
                t.add(g, b)
            })
        }),
        ("rigid_transform", |c, s| {
            let x = [c.uniform(&[2, 4, 4, 4, 2], -1.0, 1.0)];
            let poses = [
                Pose::new(c.rng.random_range(-180.0..180.0), c.rng.random_range(-30.0..30.0), 1.0),
                Pose::new(c.rng.random_range(-180.0..180.0), 0.0, c.rng.random_range(0.9..1.1)),
            ];
            c.check(&x, &move |t, v| {
                let y = geometry::rigid_transform(t, v[0], &poses)?;
                weighted_sum(t, y, s)
            })
        }),
        ("project", |c, s| {
            let cfg = tiny_generator();
            let g = Generator::<f64>::new(cfg, &mut c.rng).map_err(|e| GradCheckError::Tensor(model_err(e)))?;
            let w = g.params.get("g.project.w").unwrap().map(|v| v * 10.0);
            let b = c.uniform(&[g.config().channels.projection], -0.5, 0.5);
            let x = [c.uniform(&[1, 16, 16, 16, 2], -1.0, 1.0), w, b];
            c.check(&x, &move |t, v| {
                let s0 = t.shape(v[0]).to_vec();
                let flat = t.reshape(v[0], vec![s0[0], s0[1], s0[2], s0[3] * s0[4]])?;
                let h = t.conv2d(flat, v[1], v[2], 1, 0)?;
                let y = t.lrelu(h);
                weighted_sum(t, y, s)
            })
        }),
    ]
}

/// The mapping network evaluated with its parameters supplied as tape vars.
fn map_with_vars(
    tape: &mut Tape<f64>,
    net: &MappingNetwork,
    names: &[String],
    vars: &[Var],
    z: Var,
) -> Result<layers::StyleParams, ModelError> {
    let find = |suffix: &str| {
        names
            .iter()
            .position(|n| n.ends_with(suffix))
            .map(|i| vars[i])
            .expect("mapping parameter")
    };
    let (w1, b1, w2, b2) = (find(".w1"), find(".b1"), find(".w2"), find(".b2"));
    let h = tape.linear(z, w1, b1)?;
    let h = tape.lrelu(h);
    let out = tape.linear(h, w2, b2)?;
    let c = net.sites().next().expect("one site").1;
    let gamma = tape.narrow(out, 1, 0, c)?;
    let beta = tape.narrow(out, 1, c, c)?;
    Ok(layers::StyleParams { gamma, beta })
}

fn tiny_generator() -> GeneratorConfig {
    let mut cfg = GeneratorConfig::new(32, ChannelSchedule::tiny(32));
    cfg.latent_dim = 3;
    cfg.mapping_hidden = 3;
    cfg
}

/// Adds uniform noise of width 1 to every parameter. At initialisation the
/// tiny generator has channels with variance far below the normalisation
/// epsilon, where the objective is smooth but so sharply curved that a probe
/// of width `h` measures curvature rather than slope.
fn condition(c: &mut Ctx, store: &mut ParamStore<f64>) {
    for (_, p) in store.params_mut() {
        let noise = c.uniform(p.shape(), -0.5, 0.5);
        for (v, n) in p.data_mut().iter_mut().zip(noise.data()) {
            *v += n;
        }
    }
}

/// Central differences on a sample of coordinates of every named tensor of
/// `store`. `loss` evaluates the objective for a store on a given tape.
///
/// A full model has enough leaky ReLU units that a probe of width `h`
/// usually crosses a kink somewhere. The probes therefore replay the branch
/// pattern of the analytic pass, so both sides differentiate the same smooth
/// piece.
fn check_store<L>(
    c: &mut Ctx,
    store: &ParamStore<f64>,
    analytic: &[(String, Tensor<f64>)],
    pattern: &BranchPattern,
    loss: L,
) -> Result<f64, GradCheckError>
where
    L: Fn(&ParamStore<f64>, &mut Tape<f64>) -> Result<f64, TensorError>,
{
    let mut worst = 0.0f64;
    for (name, grad) in analytic {
        let x = store.get(name).expect("parameter").clone();
        let coords: Vec<usize> = (0..COORDS_PER_PARAM.min(x.len()))
            .map(|_| c.rng.random_range(0..x.len()))
            .collect();
        let scaled = grad.map(|v| v * c.fault);
        let eval = |probe: &Tensor<f64>| {
            let mut local = store.clone();
            *local.get_mut(name).unwrap() = probe.clone();
            loss(&local, &mut Tape::replaying(pattern.clone()))
        };
        worst = worst.max(compare_at(eval, &scaled, &x, c.h, &coords)?);
    }
    Ok(worst)
}

fn end_to_end_checks() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("generator_objective", |c, _| {
            let mut g = Generator::<f64>::new(tiny_generator(), &mut c.rng).map_err(|e| GradCheckError::Tensor(model_err(e)))?;
            condition(c, &mut g.params);
            let d = Discriminator::<f64>::new(DiscriminatorConfig::tiny(32, 3), &mut c.rng)
                .map_err(|e| GradCheckError::Tensor(model_err(e)))?;
            let z = sample_latents::<f64, _>(&mut c.rng, 2, 3);
            let poses = [
                Pose::new(c.rng.random_range(-60.0..60.0), c.rng.random_range(-15.0..15.0), 1.0),
                Pose::new(c.rng.random_range(-60.0..60.0), c.rng.random_range(-15.0..15.0), 1.05),
            ];
            let weights = LossWeights::default();
            let value = |gen: &Generator<f64>, tape: &mut Tape<f64>| -> Result<Var, TensorError> {
                let zv = tape.constant(z.clone());
                Ok(generator_loss(tape, gen, &d, zv, &poses, &weights).map_err(model_err)?.total)
            };
            let mut tape = Tape::recording();
            let loss = value(&g, &mut tape)?;
            tape.backward(loss)?;
            let grads: Vec<(String, Tensor<f64>)> = tape
                .bound_grads()
                .map(|(n, gr)| (n.to_string(), gr.cloned().unwrap_or_else(|| Tensor::zeros(g.params.get(n).unwrap().shape().to_vec()))))
                .collect();
            let cfg = g.config().clone();
            let pattern = tape.branch_pattern();
            check_store(c, &g.params, &grads, &pattern, |store, t| {
                let gen = Generator::from_params(cfg.clone(), store.clone()).map_err(model_err)?;
                let l = value(&gen, t)?;
                Ok(t.value(l).item())
            })
        }),
        ("discriminator_objective", |c, _| {
            let mut d = Discriminator::<f64>::new(DiscriminatorConfig::tiny(32, 3), &mut c.rng)
                .map_err(|e| GradCheckError::Tensor(model_err(e)))?;
            d.power_iterate(2);
            let real = c.uniform(&[2, 32, 32, 3], -1.0, 1.0);
            let fake = c.uniform(&[2, 32, 32, 3], -1.0, 1.0);
            let z = sample_latents::<f64, _>(&mut c.rng, 2, 3);
            let weights = LossWeights::default();
            let value = |disc: &Discriminator<f64>, tape: &mut Tape<f64>| -> Result<Var, TensorError> {
                let (r, f, zv) = (tape.constant(real.clone()), tape.constant(fake.clone()), tape.constant(z.clone()));
                discriminator_loss(tape, disc, r, f, zv, &weights, true).map_err(model_err)
            };
            let mut tape = Tape::recording();
            let loss = value(&d, &mut tape)?;
            tape.backward(loss)?;
            let grads: Vec<(String, Tensor<f64>)> = tape
                .bound_grads()
                .map(|(n, gr)| (n.to_string(), gr.cloned().unwrap_or_else(|| Tensor::zeros(d.params.get(n).unwrap().shape().to_vec()))))
                .collect();
            let cfg = d.config().clone();
            let pattern = tape.branch_pattern();
            check_store(c, &d.params, &grads, &pattern, |store, t| {
                let disc = Discriminator::from_params(cfg.clone(), store.clone()).map_err(model_err)?;
                let l = value(&disc, t)?;
                Ok(t.value(l).item())
            })
        }),
    ]
}

/// Names of every check in suite order.
pub fn check_names() -> Vec<&'static str> {
    op_checks()
        .into_iter()
        .chain(composite_checks())
        .chain(end_to_end_checks())
        .map(|(n, _)| n)
        .collect()
}

pub fn run_suite(options: &SuiteOptions) -> SuiteReport {
    let mut outcomes = Vec::new();
    let all = op_checks().into_iter().chain(composite_checks()).chain(end_to_end_checks());
    for (k, (name, check)) in all.enumerate() {
        if options.filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let mut ctx = Ctx {
            rng: ChaCha8Rng::seed_from_u64(options.seed),
            h: options.step,
            fault: if options.inject_fault.as_deref() == Some(name) { 1.5 } else { 1.0 },
        };
        ctx.rng.set_stream(k as u64);
        let mut worst = 0.0f64;
        let mut error = None;
        for i in 0..options.instances {
            match check(&mut ctx, options.seed.wrapping_mul(31).wrapping_add(i as u64)) {
                Ok(e) => worst = worst.max(e),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let passed = error.is_none() && worst <= options.tolerance;
        outcomes.push(CheckOutcome {
            name,
            instances: options.instances,
            max_error: error.is_none().then_some(worst),
            error,
            passed,
        });
    }
    SuiteReport {
        tolerance: options.tolerance,
        outcomes,
    }
}
