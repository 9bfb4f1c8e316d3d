use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BarModel, NoiseModel};
use crate::error::{Error, Result};
use crate::seed::{chacha_key, stream_rng, INIT_STREAM_BIT};
use crate::tree::{NodeIndex, TreeShape};

/// Generations at least this wide are filled in parallel.
const PARALLEL_GENERATION: usize = 1 << 13;

/// Values for the ancestors `X_1, ..., X_{2^p - 1}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// Exactly `2^p - 1` values in label order.
    Values {
        values: Vec<f64>,
    },
    /// Independent `N(0, std^2)` draws keyed by label.
    Gaussian {
        std: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulateOptions {
    pub record_noise: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions { record_noise: true }
    }
}

/// Level-order values over `T_n` (slot 0 unused) plus, optionally, the noise
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTree {
    shape: TreeShape,
    x: Vec<f64>,
    eps: Option<Vec<f64>>,
    master_seed: u64,
}

pub fn simulate(
    model: &BarModel,
    noise: Option<&NoiseModel>,
    init: &InitSpec,
    n: u32,
    master_seed: u64,
) -> Result<SimulatedTree> {
    simulate_with(model, noise, init, n, master_seed, SimulateOptions::default())
}

/// Fills `X_k` for every `k` in `T_n` generation by generation. `noise = None`
/// runs the deterministic recursion.
pub fn simulate_with(
    model: &BarModel,
    noise: Option<&NoiseModel>,
    init: &InitSpec,
    n: u32,
    master_seed: u64,
    opts: SimulateOptions,
) -> Result<SimulatedTree> {
    let p = model.p();
    let shape = TreeShape::new(n, p as u32)?;
    if (n as usize) < p {
        return Err(Error::InvalidShape(format!("need n >= p, got n = {n}, p = {p}")));
    }
    let len = shape.len() as usize + 1;
    let mut x = alloc(len, n)?;
    let mut eps = if opts.record_noise { Some(alloc(len, n)?) } else { None };
    let key = chacha_key(master_seed);

    let n_init = (1usize << p) - 1;
    match init {
        InitSpec::Zero => {}
        InitSpec::Constant { value } => x[1..=n_init].fill(*value),
        InitSpec::Values { values } => {
            if values.len() != n_init {
                return Err(Error::InvalidInit(format!(
                    "order {p} needs {n_init} initial values, got {}",
                    values.len()
                )));
            }
            x[1..=n_init].copy_from_slice(values);
        }
        InitSpec::Gaussian { std } => {
            if !(*std >= 0.0) {
                return Err(Error::InvalidInit(format!("standard deviation must be nonnegative, got {std}")));
            }
            for (k, v) in x.iter_mut().enumerate().take(n_init + 1).skip(1) {
                let mut rng = stream_rng(&key, INIT_STREAM_BIT | k as u64);
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = std * z;
            }
        }
    }

    let a = model.a();
    let b = model.b();
    for g in p as u32..=n {
        let start = 1usize << g;
        let (done, rest) = x.split_at_mut(start);
        let done: &[f64] = done;
        let gen = &mut rest[..start];
        let eps_gen = eps.as_mut().map(|e| &mut e[start..2 * start]);
        let fill = |j: usize, xs: &mut [f64], es: Option<&mut [f64]>| {
            let mother = (start + 2 * j) / 2;
            let (ee, eo) = match noise {
                Some(noise) => {
                    let mut rng = stream_rng(&key, mother as u64);
                    noise.sample_pair(done[mother], &mut rng)
                }
                None => (0.0, 0.0),
            };
            let mut ve = a[0];
            let mut vo = b[0];
            let mut anc = mother;
            for i in 1..=p {
                let xa = done[anc];
                ve += a[i] * xa;
                vo += b[i] * xa;
                anc >>= 1;
            }
            xs[0] = ve + ee;
            xs[1] = vo + eo;
            if let Some(es) = es {
                es[0] = ee;
                es[1] = eo;
            }
        };
        match eps_gen {
            Some(eg) if start >= PARALLEL_GENERATION => gen
                .par_chunks_mut(2)
                .zip(eg.par_chunks_mut(2))
                .enumerate()
                .for_each(|(j, (xs, es))| fill(j, xs, Some(es))),
            Some(eg) => {
                gen.chunks_mut(2).zip(eg.chunks_mut(2)).enumerate().for_each(|(j, (xs, es))| fill(j, xs, Some(es)))
            }
            None if start >= PARALLEL_GENERATION => {
                gen.par_chunks_mut(2).enumerate().for_each(|(j, xs)| fill(j, xs, None))
            }
            None => gen.chunks_mut(2).enumerate().for_each(|(j, xs)| fill(j, xs, None)),
        }
    }

    Ok(SimulatedTree { shape, x, eps, master_seed })
}

fn alloc(len: usize, n: u32) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| Error::TreeTooLarge(n))?;
    v.resize(len, 0.0);
    Ok(v)
}

impl SimulatedTree {
    /// Assembles a tree from level-order arrays with slot 0 unused.
    pub fn from_parts(shape: TreeShape, x: Vec<f64>, eps: Option<Vec<f64>>, master_seed: u64) -> Result<Self> {
        let len = shape.len() as usize + 1;
        if x.len() != len {
            return Err(Error::DimensionMismatch(format!("expected {len} value slots, got {}", x.len())));
        }
        if let Some(e) = &eps {
            if e.len() != len {
                return Err(Error::DimensionMismatch(format!("expected {len} noise slots, got {}", e.len())));
            }
        }
        Ok(SimulatedTree { shape, x, eps, master_seed })
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn n(&self) -> u32 {
        self.shape.n()
    }

    pub fn p(&self) -> usize {
        self.shape.p() as usize
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// `X_k`.
    #[inline]
    pub fn x(&self, k: u64) -> f64 {
        self.x[k as usize]
    }

    /// Level-order values, slot 0 unused.
    pub fn values(&self) -> &[f64] {
        &self.x
    }

    /// Recorded noise, slot 0 unused; zero below label `2^p`.
    pub fn noise(&self) -> Option<&[f64]> {
        self.eps.as_deref()
    }

    pub fn has_noise(&self) -> bool {
        self.eps.is_some()
    }

    /// Writes `(X_k, X_{k/2}, ..., X_{k/2^{p-1}})` into `out[..p]`.
    #[inline]
    pub(crate) fn fill_regression(&self, k: u64, out: &mut [f64]) {
        let mut anc = k as usize;
        for o in out.iter_mut() {
            *o = self.x[anc];
            anc >>= 1;
        }
    }

    /// Regression vector of cell `k`; needs `2^{p-1} <= k` and `k` in the tree.
    pub fn regression_vector(&self, k: NodeIndex) -> Result<Vec<f64>> {
        let p = self.p();
        let k = k.get();
        if k < 1 << (p - 1) {
            return Err(Error::InvalidArgument(format!(
                "regression vector of order {p} needs k >= {}, got {k}",
                1u64 << (p - 1)
            )));
        }
        if k > self.shape.len() {
            return Err(Error::InvalidArgument(format!("label {k} is outside the tree")));
        }
        let mut out = vec![0.0; p];
        self.fill_regression(k, &mut out);
        Ok(out)
    }

    /// Recomputes every simulated value from its ancestors and the recorded
    /// noise and compares bit for bit.
    pub fn replay_check(&self, model: &BarModel) -> Result<bool> {
        let eps = self.eps.as_ref().ok_or(Error::NoiseNotRecorded)?;
        let p = self.p();
        if model.p() != p {
            return Err(Error::DimensionMismatch("model order differs from tree order".into()));
        }
        let (a, b) = (model.a(), model.b());
        let mut reg = vec![0.0; p];
        let last_mother = self.shape.len() / 2;
        for k in (1u64 << (p - 1))..=last_mother {
            self.fill_regression(k, &mut reg);
            let mut ve = a[0];
            let mut vo = b[0];
            for i in 1..=p {
                ve += a[i] * reg[i - 1];
                vo += b[i] * reg[i - 1];
            }
            let (e, o) = (2 * k as usize, 2 * k as usize + 1);
            if (ve + eps[e]).to_bits() != self.x[e].to_bits() || (vo + eps[o]).to_bits() != self.x[o].to_bits() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
