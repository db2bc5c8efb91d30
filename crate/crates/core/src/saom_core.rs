//! Behaviour dynamics of the stochastic actor-oriented model with frozen
//! ties: effect statistics, the behaviour objective function, ministep
//! choice probabilities, and forward simulation of one period in continuous
//! time.
//!
//! Actors hold a binary behaviour value. A period consists of a Poisson
//! number of change opportunities; at each opportunity one uniformly sampled
//! actor evaluates the two reachable states (keep or toggle its own value)
//! through the objective function and picks one by multinomial logit. The
//! state commits immediately, so each ministep conditions on the previous
//! one. Network ties never change.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::net::Network;
use crate::rng::rng_from_seed;

/// One effect entering the behaviour objective function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EffectKind {
    /// Proportion of neighbours holding the behaviour, counted only while the
    /// actor itself holds it.
    AvAlt,
    /// Weighted mean of pairwise similarity to neighbours, centered at the
    /// network-wide mean similarity.
    AvSim,
    /// Behaviour times a node covariate (column index into the covariate
    /// matrix).
    EffFrom(usize),
    /// The behaviour value itself.
    LinearShape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectSpec {
    pub kind: EffectKind,
    pub label: String,
}

impl EffectSpec {
    pub fn av_alt() -> Self {
        EffectSpec {
            kind: EffectKind::AvAlt,
            label: "avAlt".to_string(),
        }
    }

    pub fn av_sim() -> Self {
        EffectSpec {
            kind: EffectKind::AvSim,
            label: "avSim".to_string(),
        }
    }

    pub fn eff_from(covariate: usize) -> Self {
        EffectSpec {
            kind: EffectKind::EffFrom(covariate),
            label: format!("effFrom{covariate}"),
        }
    }

    pub fn linear_shape() -> Self {
        EffectSpec {
            kind: EffectKind::LinearShape,
            label: "linearShape".to_string(),
        }
    }
}

/// Reject effect lists that pair the two spatial statistics; they are
/// estimated separately, never jointly.
pub fn validate_effects(effects: &[EffectSpec]) -> Result<()> {
    let spatial = effects
        .iter()
        .filter(|e| matches!(e.kind, EffectKind::AvAlt | EffectKind::AvSim))
        .count();
    if spatial > 1 {
        return Err(Error::invalid(
            "at most one of avSim/avAlt may be active in a model",
        ));
    }
    Ok(())
}

/// Behaviour state along a simulated chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviourState {
    pub y: Vec<u8>,
    /// Elapsed model time in [0, 1].
    pub clock: f64,
}

/// Network-wide mean similarity over adjacent ordered pairs,
/// `delta_ij = 1 - |y_i - y_j|`; zero when the network has no edges.
pub fn mean_similarity(net: &Network, y: &[u8]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..net.n() {
        for &j in net.neighbors(i) {
            total += 1.0 - (y[i] as f64 - y[j] as f64).abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Evaluate one effect statistic for actor `i` at state `y`.
///
/// `mean_sim` is required for `AvSim` (the centering constant, held fixed
/// during simulation) and ignored otherwise. Isolates score zero on both
/// spatial statistics.
pub fn effect_statistic(
    spec: &EffectSpec,
    i: usize,
    net: &Network,
    y: &[u8],
    x: &DMatrix<f64>,
    mean_sim: Option<f64>,
) -> Result<f64> {
    match spec.kind {
        EffectKind::AvAlt => {
            if y[i] == 0 {
                return Ok(0.0);
            }
            let mut wsum = 0.0;
            let mut wy = 0.0;
            for &j in net.neighbors(i) {
                let w = net.weight(i, j);
                wsum += w;
                wy += w * y[j] as f64;
            }
            Ok(if wsum > 0.0 { wy / wsum } else { 0.0 })
        }
        EffectKind::AvSim => {
            let m = mean_sim.ok_or_else(|| {
                Error::invalid("avSim requires the network-wide mean similarity")
            })?;
            let mut wsum = 0.0;
            let mut acc = 0.0;
            for &j in net.neighbors(i) {
                let w = net.weight(i, j);
                let delta = 1.0 - (y[i] as f64 - y[j] as f64).abs();
                wsum += w;
                acc += w * (delta - m);
            }
            Ok(if wsum > 0.0 { acc / wsum } else { 0.0 })
        }
        EffectKind::EffFrom(c) => {
            if c >= x.ncols() {
                return Err(Error::invalid(format!(
                    "effFrom covariate index {c} out of range for {} columns",
                    x.ncols()
                )));
            }
            Ok(y[i] as f64 * x[(i, c)])
        }
        EffectKind::LinearShape => Ok(y[i] as f64),
    }
}

/// Behaviour objective function: the theta-weighted sum of effect statistics
/// for actor `i` at the proposed state.
///
/// `y_prop` must equal `y_current` everywhere except possibly coordinate `i`;
/// actors control only their own attribute.
#[allow(clippy::too_many_arguments)]
pub fn behaviour_objective(
    i: usize,
    net: &Network,
    y_current: &[u8],
    y_prop: &[u8],
    effects: &[EffectSpec],
    theta: &[f64],
    x: &DMatrix<f64>,
    mean_sim: Option<f64>,
) -> Result<f64> {
    if y_prop.len() != y_current.len() {
        return Err(Error::invalid("proposal length mismatch"));
    }
    if effects.len() != theta.len() {
        return Err(Error::invalid("one coefficient per effect required"));
    }
    for j in 0..y_prop.len() {
        if j != i && y_prop[j] != y_current[j] {
            return Err(Error::invalid(format!(
                "proposal changes coordinate {j}, but the ministep belongs to actor {i}"
            )));
        }
    }
    let mut f = 0.0;
    for (spec, &t) in effects.iter().zip(theta) {
        f += t * effect_statistic(spec, i, net, y_prop, x, mean_sim)?;
    }
    Ok(f)
}

/// Two-option multinomial logit: probabilities proportional to exp(f),
/// computed through the difference for numerical stability. Shifting both
/// objective values by a constant leaves the probabilities unchanged.
pub fn two_option_logit(f_a: f64, f_b: f64) -> (f64, f64) {
    let p_a = 1.0 / (1.0 + (f_b - f_a).exp());
    (p_a, 1.0 - p_a)
}

/// Choice distribution for one ministep of actor `i`: probabilities over
/// {keep, toggle} with their objective values.
#[derive(Debug, Clone)]
pub struct MinistepChoice {
    pub f_keep: f64,
    pub f_toggle: f64,
    pub p_keep: f64,
    pub p_toggle: f64,
}

/// Evaluate the ministep choice probabilities for actor `i` at the current
/// state. The binary option set holds exactly the status quo and the toggle
/// (increment at 0, decrement at 1).
#[allow(clippy::too_many_arguments)]
pub fn ministep_probabilities(
    i: usize,
    net: &Network,
    y: &[u8],
    effects: &[EffectSpec],
    theta: &[f64],
    x: &DMatrix<f64>,
    mean_sim: Option<f64>,
) -> Result<MinistepChoice> {
    let mut y_toggle = y.to_vec();
    y_toggle[i] = 1 - y_toggle[i];
    let f_keep = behaviour_objective(i, net, y, y, effects, theta, x, mean_sim)?;
    let f_toggle = behaviour_objective(i, net, y, &y_toggle, effects, theta, x, mean_sim)?;
    let (p_keep, p_toggle) = two_option_logit(f_keep, f_toggle);
    Ok(MinistepChoice {
        f_keep,
        f_toggle,
        p_keep,
        p_toggle,
    })
}

/// One executed ministep, for diagnostic traces.
#[derive(Debug, Clone)]
pub struct MinistepRecord {
    pub index: usize,
    pub time: f64,
    pub actor: usize,
    pub toggled: bool,
    pub f_keep: f64,
    pub f_toggle: f64,
    pub prob_taken: f64,
}

/// Render a ministep trace as CSV.
pub fn trace_to_csv(trace: &[MinistepRecord]) -> String {
    let mut out = String::from("event,time,actor,option,f_keep,f_toggle,prob_taken\n");
    for r in trace {
        out.push_str(&format!(
            "{},{:.6},{},{},{:.6},{:.6},{:.6}\n",
            r.index,
            r.time,
            r.actor,
            if r.toggled { "toggle" } else { "keep" },
            r.f_keep,
            r.f_toggle,
            r.prob_taken
        ));
    }
    out
}

/// Simulate one period of behaviour dynamics and return the end state.
///
/// The total opportunity count is Poisson(n * rate); each opportunity picks
/// a uniform focal actor, evaluates [`ministep_probabilities`], and commits
/// the sampled option immediately. Equal seeds reproduce the chain exactly.
#[allow(clippy::too_many_arguments)]
pub fn simulate_period(
    net: &Network,
    y0: &[u8],
    effects: &[EffectSpec],
    theta: &[f64],
    rate: f64,
    x: &DMatrix<f64>,
    mean_sim: Option<f64>,
    seed: u64,
) -> Result<BehaviourState> {
    simulate_period_traced(net, y0, effects, theta, rate, x, mean_sim, seed, false)
        .map(|(state, _)| state)
}

/// As [`simulate_period`], optionally recording the ministep trace.
///
/// Event times are the order statistics of uniforms on [0, 1], the
/// conditional law of a homogeneous Poisson process given its event count;
/// they are diagnostic only and never influence the dynamics.
#[allow(clippy::too_many_arguments)]
pub fn simulate_period_traced(
    net: &Network,
    y0: &[u8],
    effects: &[EffectSpec],
    theta: &[f64],
    rate: f64,
    x: &DMatrix<f64>,
    mean_sim: Option<f64>,
    seed: u64,
    record: bool,
) -> Result<(BehaviourState, Vec<MinistepRecord>)> {
    let n = net.n();
    if y0.len() != n {
        return Err(Error::invalid("state length must match node count"));
    }
    if rate <= 0.0 {
        return Err(Error::invalid("behaviour rate must be positive"));
    }
    validate_effects(effects)?;
    if effects.len() != theta.len() {
        return Err(Error::invalid("one coefficient per effect required"));
    }

    let mut rng = rng_from_seed(seed);
    let poisson = Poisson::new(n as f64 * rate)
        .map_err(|e| Error::invalid(format!("invalid opportunity intensity: {e}")))?;
    let k = poisson.sample(&mut rng) as usize;

    let mut times: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));

    let mut y = y0.to_vec();
    let mut trace = Vec::new();
    for (event, &time) in times.iter().enumerate() {
        let actor = rng.gen_range(0..n);
        let choice = ministep_probabilities(actor, net, &y, effects, theta, x, mean_sim)?;
        let toggled = rng.gen::<f64>() < choice.p_toggle;
        if toggled {
            y[actor] = 1 - y[actor];
        }
        if record {
            trace.push(MinistepRecord {
                index: event,
                time,
                actor,
                toggled,
                f_keep: choice.f_keep,
                f_toggle: choice.f_toggle,
                prob_taken: if toggled {
                    choice.p_toggle
                } else {
                    choice.p_keep
                },
            });
        }
    }

    Ok((BehaviourState { y, clock: 1.0 }, trace))
}

/// Method-of-moments target statistics: the sum over actors of each effect
/// statistic at the end-of-period state.
pub fn target_statistics(
    net: &Network,
    y_end: &[u8],
    effects: &[EffectSpec],
    x: &DMatrix<f64>,
    mean_sim: Option<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(effects.len());
    for spec in effects {
        let mut s = 0.0;
        for i in 0..net.n() {
            s += effect_statistic(spec, i, net, y_end, x, mean_sim)?;
        }
        out.push(s);
    }
    Ok(out)
}
