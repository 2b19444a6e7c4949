//! Forward filtering backward sampling over sparse, state-keyed weight tables.

use rand::Rng;
use rustc_hash::FxHashMap;

use super::grid::ConstraintGrid;
use super::SamplerError;
use crate::model::{Generator, NetworkSpec, NetworkState, Params, UniformizedPath};

/// Default ceiling on the number of states kept at one slot.
pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct FfbsOutput {
    pub path: UniformizedPath,
    /// Number of states with positive forward weight at each slot.
    pub support: Vec<usize>,
}

/// Forward weights at one slot plus the weighted edges that produced them.
struct Layer {
    states: Vec<NetworkState>,
    alpha: Vec<f64>,
    /// `(index in previous layer, index in this layer, alpha_prev * step weight)`.
    edges: Vec<(u32, u32, f64)>,
}

fn sample_index<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> Option<usize> {
    let total: f64 = weights.clone().sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (k, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(k);
            if u < acc {
                return Some(k);
            }
        }
    }
    last
}

/// Samples a state sequence on the grid from its conditional law given the
/// slot constraints, starting from the empty network.
///
/// The step weight from `x` to `x'` is `1 - |Q_x| / omega` for a virtual jump
/// and `Q_{x,x'} / omega` for a real move, times `1 - q` when the move is an
/// inner transition at a slot without a service observation. Forward weights
/// are renormalized at every slot.
pub fn ffbs<R: Rng + ?Sized>(
    cgrid: &ConstraintGrid,
    params: &Params,
    spec: &NetworkSpec,
    omega: f64,
    support_cap: usize,
    rng: &mut R,
) -> Result<FfbsOutput, SamplerError> {
    let opts = FilterOptions {
        support_cap,
        ..FilterOptions::default()
    };
    ffbs_with(cgrid, params, spec, omega, &opts, rng)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FilterOptions {
    pub support_cap: usize,
    /// Keep the emission factor `q` of an observed service in the step
    /// weight. It is common to every candidate at that slot, so the draws
    /// coincide.
    pub weigh_observed: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            support_cap: DEFAULT_SUPPORT_CAP,
            weigh_observed: false,
        }
    }
}

pub(crate) fn ffbs_with<R: Rng + ?Sized>(
    cgrid: &ConstraintGrid,
    params: &Params,
    spec: &NetworkSpec,
    omega: f64,
    opts: &FilterOptions,
    rng: &mut R,
) -> Result<FfbsOutput, SamplerError> {
    let support_cap = opts.support_cap;
    let weigh_observed = opts.weigh_observed;
    let gen = Generator::new(spec, params);
    let bound = gen.rate_bound();
    if !(omega > bound && omega.is_finite()) {
        return Err(SamplerError::DominatingRate { omega, bound });
    }
    let unobserved_factor = 1.0 - spec.obs_prob();
    let mut layers: Vec<Layer> = Vec::with_capacity(cgrid.len() + 1);
    layers.push(Layer {
        states: vec![NetworkState::empty(spec.station_count())],
        alpha: vec![1.0],
        edges: Vec::new(),
    });
    let mut moves = Vec::new();
    for (i, slot) in cgrid.slots.iter().enumerate() {
        let prev = layers.last().expect("initial layer");
        let mut index: FxHashMap<NetworkState, u32> = FxHashMap::default();
        let mut alpha: Vec<f64> = Vec::new();
        let mut edges = Vec::new();
        let mut add = |state: NetworkState, from: usize, w: f64| {
            let next = index.len() as u32;
            let to = *index.entry(state).or_insert(next);
            if to == next {
                alpha.push(0.0);
            }
            alpha[to as usize] += w;
            edges.push((from as u32, to, w));
        };
        let filter = slot.effective();
        let virtual_ok = slot.admits_virtual();
        let observed = slot.is_observed();
        for (a, x) in prev.states.iter().enumerate() {
            let w = prev.alpha[a];
            if w <= 0.0 {
                continue;
            }
            if virtual_ok {
                let stay = 1.0 - gen.exit_rate(x) / omega;
                if stay > 0.0 {
                    add(x.clone(), a, w * stay);
                }
            }
            moves.clear();
            gen.moves_into(x, &filter, 0, &mut moves);
            for m in &moves {
                if !slot.admits_move(m) {
                    continue;
                }
                let mut step = m.rate / omega;
                if !observed && m.is_inner() {
                    step *= unobserved_factor;
                } else if weigh_observed && observed && m.is_inner() {
                    step *= spec.obs_prob();
                }
                if step > 0.0 {
                    add(m.apply(x), a, w * step);
                }
            }
        }
        let n = index.len();
        if n == 0 {
            return Err(SamplerError::EmptySupport {
                slot: i,
                time: cgrid.times[i],
            });
        }
        if n > support_cap {
            return Err(SamplerError::SupportCap {
                slot: i,
                time: cgrid.times[i],
                size: n,
                cap: support_cap,
            });
        }
        let total: f64 = alpha.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(SamplerError::EmptySupport {
                slot: i,
                time: cgrid.times[i],
            });
        }
        for a in &mut alpha {
            *a /= total;
        }
        let mut states: Vec<Option<NetworkState>> = vec![None; n];
        for (s, k) in index {
            states[k as usize] = Some(s);
        }
        layers.push(Layer {
            states: states.into_iter().map(|s| s.expect("dense indices")).collect(),
            alpha,
            edges,
        });
    }

    let support: Vec<usize> = layers[1..].iter().map(|l| l.states.len()).collect();
    let m = cgrid.len();
    let mut picked = vec![0usize; m + 1];
    if m > 0 {
        let last = &layers[m];
        picked[m] = sample_index(last.alpha.iter().copied(), rng).expect("normalized weights");
        for i in (1..=m).rev() {
            let cur = picked[i] as u32;
            let edges = &layers[i].edges;
            let w = edges.iter().map(|&(_, to, w)| if to == cur { w } else { 0.0 });
            let k = sample_index(w, rng).ok_or_else(|| {
                SamplerError::Inconsistent(format!("no predecessor for the state sampled at slot {}", i - 1))
            })?;
            picked[i - 1] = edges[k].0 as usize;
        }
    }
    let states: Vec<NetworkState> = (1..=m)
        .map(|i| std::mem::replace(&mut layers[i].states[picked[i]], NetworkState::empty(0)))
        .collect();
    Ok(FfbsOutput {
        path: UniformizedPath::new(spec.station_count(), cgrid.horizon, cgrid.times.clone(), states),
        support,
    })
}
