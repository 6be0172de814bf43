//! Per-farm production economics: target yield and input choice from
//! prices, then realized yields under idiosyncratic shocks.
//!
//! The yield response to countermeasure inputs is multiplicative across
//! stress factors:
//!
//! ```text
//! y(x) = ybar * prod_i (1 - s_i * exp(-lambda_i * x_i))
//! ```
//!
//! With a single factor the profit maximum has a closed form; with several,
//! cyclic coordinate ascent solves each coordinate in closed form given the
//! others (the per-coordinate problem has the same shape with an effective
//! potential yield).

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand_distr::{Distribution, LogNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::SyntheticPopulation;
use crate::rng::{stream_rng, Stream};

/// Yield-reducing stress agents a farm can counter with inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressKind {
    Nutrition,
    Weeds,
    Pests,
    Fungi,
}

impl StressKind {
    pub const ALL: [StressKind; 4] = [
        StressKind::Nutrition,
        StressKind::Weeds,
        StressKind::Pests,
        StressKind::Fungi,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            StressKind::Nutrition => "nutrition",
            StressKind::Weeds => "weeds",
            StressKind::Pests => "pests",
            StressKind::Fungi => "fungi",
        }
    }
}

/// One stress factor acting on a farm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressFactor {
    pub kind: StressKind,
    /// Share of potential yield lost if the stress is not countered, in (0,1).
    pub loss_share: f64,
    /// Response rate: how fast input effort closes the loss, per input unit.
    pub response_rate: f64,
    /// Input price, currency per input unit.
    pub input_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Optimizer,
    RuleBased,
}

/// A simulated farm agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Farm {
    pub id: u64,
    pub area: f64,
    /// Potential yield under optimal conditions, t/ha.
    pub potential_yield: f64,
    pub stress_factors: Vec<StressFactor>,
    pub behavior: Behavior,
    /// Per-factor input levels used last season (rule-based memory).
    pub last_inputs: Vec<f64>,
    pub adopted_schemes: BTreeSet<String>,
    pub cluster_id: usize,
    pub tractor_hours_per_ha: f64,
    /// How the nutrition input splits into N/P/K flows for the inventory.
    pub npk_shares: [f64; 3],
}

impl Farm {
    pub fn validate(&self) -> Result<()> {
        if !(self.potential_yield > 0.0) || !(self.area > 0.0) {
            return Err(Error::Agronomy(format!(
                "farm {}: area and potential yield must be > 0",
                self.id
            )));
        }
        let mut loss_sum = 0.0;
        for f in &self.stress_factors {
            if !(f.loss_share > 0.0 && f.loss_share < 1.0) {
                return Err(Error::Agronomy(format!(
                    "farm {}: loss share {} outside (0,1)",
                    self.id, f.loss_share
                )));
            }
            if !(f.response_rate > 0.0) || !(f.input_price > 0.0) {
                return Err(Error::Agronomy(format!(
                    "farm {}: response rate and input price must be > 0",
                    self.id
                )));
            }
            loss_sum += f.loss_share;
        }
        if loss_sum >= 1.0 {
            return Err(Error::Agronomy(format!(
                "farm {}: stress loss shares sum to {loss_sum} >= 1",
                self.id
            )));
        }
        Ok(())
    }
}

/// A production plan chosen before sowing.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Planned yield, t/ha. Positive and at most the potential yield.
    pub target_yield: f64,
    /// Per-factor input levels, aligned with the farm's stress factors.
    pub inputs: Vec<f64>,
    /// Expected profit per hectare (includes any per-hectare payment).
    pub expected_profit: f64,
    /// False when the numerical solver hit its sweep cap.
    pub converged: bool,
}

/// Realized end-of-season result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub actual_yield: f64,
    /// potential - actual, always in [0, potential].
    pub yield_gap: f64,
    /// actual_yield * area, tonnes.
    pub production: f64,
    pub realized_profit: f64,
}

/// Effective decision environment after policy is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionEnv {
    pub wheat_price: f64,
    /// Effective input price per factor (taxes/subsidies folded in).
    pub input_prices: Vec<f64>,
    /// Upper bound per factor; `f64::INFINITY` when unconstrained.
    pub caps: Vec<f64>,
    /// Per-hectare payment entering profit additively.
    pub per_ha_payment: f64,
}

impl DecisionEnv {
    /// Environment with raw farm prices and no constraints or payments.
    pub fn raw(farm: &Farm, wheat_price: f64) -> Self {
        DecisionEnv {
            wheat_price,
            input_prices: farm.stress_factors.iter().map(|f| f.input_price).collect(),
            caps: vec![f64::INFINITY; farm.stress_factors.len()],
            per_ha_payment: 0.0,
        }
    }
}

/// Yield as a function of per-factor input levels, t/ha.
/// Monotone non-decreasing in every input and bounded by potential yield.
pub fn yield_response(farm: &Farm, inputs: &[f64]) -> Result<f64> {
    if inputs.len() != farm.stress_factors.len() {
        return Err(Error::Agronomy(format!(
            "farm {}: {} inputs for {} stress factors",
            farm.id,
            inputs.len(),
            farm.stress_factors.len()
        )));
    }
    let mut y = farm.potential_yield;
    for (f, &x) in farm.stress_factors.iter().zip(inputs) {
        if x < 0.0 {
            return Err(Error::Agronomy(format!(
                "farm {}: negative input level {x}",
                farm.id
            )));
        }
        y *= 1.0 - f.loss_share * (-f.response_rate * x).exp();
    }
    Ok(y)
}

/// Closed-form coordinate optimum: input countering one stress factor with
/// effective potential yield `y_eff`, clamped to `[0, cap]`.
fn coordinate_optimum(
    factor: &StressFactor,
    input_price: f64,
    wheat_price: f64,
    y_eff: f64,
    cap: f64,
) -> f64 {
    let corner = wheat_price * factor.response_rate * factor.loss_share * y_eff;
    if input_price >= corner {
        return 0.0;
    }
    let x = -(input_price / corner).ln() / factor.response_rate;
    x.min(cap).max(0.0)
}

/// Analytic profit maximization for a farm with exactly one stress factor:
///
/// ```text
/// y* = ybar - p_x / (p_w * lambda)
/// x* = -(1/lambda) * ln(p_x / (p_w * lambda * s * ybar))
/// ```
///
/// When the interior solution would be negative (input too expensive), the
/// optimum is the corner x* = 0 with y* = ybar (1 - s); profit is continuous
/// across the corner price `p_x = p_w * lambda * s * ybar`.
pub fn optimize_single(farm: &Farm, wheat_price: f64) -> Result<Decision> {
    if farm.stress_factors.len() != 1 {
        return Err(Error::Agronomy(format!(
            "farm {}: optimize_single needs exactly one stress factor, got {}",
            farm.id,
            farm.stress_factors.len()
        )));
    }
    if !(wheat_price > 0.0) {
        return Err(Error::Agronomy(format!(
            "wheat price must be > 0, got {wheat_price}"
        )));
    }
    let f = &farm.stress_factors[0];
    let ybar = farm.potential_yield;
    let corner = wheat_price * f.response_rate * f.loss_share * ybar;
    let (target_yield, x) = if f.input_price >= corner {
        (ybar * (1.0 - f.loss_share), 0.0)
    } else {
        let y = ybar - f.input_price / (wheat_price * f.response_rate);
        let x = -(f.input_price / corner).ln() / f.response_rate;
        (y, x)
    };
    Ok(Decision {
        target_yield,
        inputs: vec![x],
        expected_profit: wheat_price * target_yield - f.input_price * x,
        converged: true,
    })
}

/// Sweep cap for cyclic coordinate ascent.
const MAX_SWEEPS: usize = 10_000;
/// Convergence threshold on the largest coordinate change per sweep.
const COORD_TOL: f64 = 1e-8;

/// Numerical profit maximization over all stress factors under the
/// environment's effective prices and input caps.
///
/// Cyclic coordinate ascent; each coordinate is solved in closed form given
/// the others, so a single-factor farm reproduces [`optimize_single`]
/// exactly. A decision with `converged = false` is returned if the sweep
/// cap is reached.
pub fn optimize_multi(farm: &Farm, env: &DecisionEnv) -> Result<Decision> {
    let n = farm.stress_factors.len();
    if n == 0 {
        return Err(Error::Agronomy(format!(
            "farm {}: no stress factors to optimize",
            farm.id
        )));
    }
    if env.input_prices.len() != n || env.caps.len() != n {
        return Err(Error::Agronomy(format!(
            "farm {}: environment sized for {} factors, farm has {n}",
            farm.id,
            env.input_prices.len()
        )));
    }
    if !(env.wheat_price > 0.0) {
        return Err(Error::Agronomy(format!(
            "wheat price must be > 0, got {}",
            env.wheat_price
        )));
    }

    let mut x = vec![0.0f64; n];
    // Factor terms 1 - s_i exp(-lambda_i x_i); each is >= 1 - s_i > 0.
    let mut terms: Vec<f64> = farm
        .stress_factors
        .iter()
        .map(|f| 1.0 - f.loss_share)
        .collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for i in 0..n {
            let f = &farm.stress_factors[i];
            let product: f64 = terms.iter().product();
            let y_eff = farm.potential_yield * product / terms[i];
            let xi = coordinate_optimum(f, env.input_prices[i], env.wheat_price, y_eff, env.caps[i]);
            max_change = max_change.max((xi - x[i]).abs());
            x[i] = xi;
            terms[i] = 1.0 - f.loss_share * (-f.response_rate * xi).exp();
        }
        if max_change < COORD_TOL {
            converged = true;
            break;
        }
    }

    let target_yield = yield_response(farm, &x)?;
    let cost: f64 = env.input_prices.iter().zip(&x).map(|(p, xi)| p * xi).sum();
    Ok(Decision {
        target_yield,
        inputs: x,
        expected_profit: env.wheat_price * target_yield - cost + env.per_ha_payment,
        converged,
    })
}

/// Clamp bounds for the rule-based price-response scale.
const RULE_SCALE_MIN: f64 = 0.8;
const RULE_SCALE_MAX: f64 = 1.2;

/// Adaptive repetition for rule-based farms: repeat last season's inputs,
/// scaled by the square root of the price ratio, clamped to [0.8, 1.2].
/// Mandatory caps still bind.
pub fn rule_based_decide(farm: &Farm, env: &DecisionEnv, previous_price: f64) -> Result<Decision> {
    if farm.behavior != Behavior::RuleBased {
        return Err(Error::Agronomy(format!(
            "farm {}: rule_based_decide on a non-rule-based farm",
            farm.id
        )));
    }
    if !(previous_price > 0.0) {
        return Err(Error::Agronomy(format!(
            "previous price must be > 0, got {previous_price}"
        )));
    }
    let scale = (env.wheat_price / previous_price)
        .sqrt()
        .clamp(RULE_SCALE_MIN, RULE_SCALE_MAX);
    let inputs: Vec<f64> = farm
        .last_inputs
        .iter()
        .zip(&env.caps)
        .map(|(&x, &cap)| (x * scale).min(cap))
        .collect();
    let target_yield = yield_response(farm, &inputs)?;
    let cost: f64 = env
        .input_prices
        .iter()
        .zip(&inputs)
        .map(|(p, x)| p * x)
        .sum();
    Ok(Decision {
        target_yield,
        inputs,
        expected_profit: env.wheat_price * target_yield - cost + env.per_ha_payment,
        converged: true,
    })
}

/// Realize the season: actual yield is the target times a log-normal shock
/// with median 1 (sigma_log = 0 makes it exactly the target), clamped above
/// by the potential yield. Deterministic per (global seed, farm id, season).
pub fn realize_yield(
    farm: &Farm,
    decision: &Decision,
    env: &DecisionEnv,
    sigma_log: f64,
    global_seed: u64,
    season: usize,
) -> Result<Outcome> {
    let shock = if sigma_log == 0.0 {
        1.0
    } else {
        let mut rng = stream_rng(global_seed, Stream::SeasonShock, farm.id, season as u64);
        LogNormal::new(0.0, sigma_log)
            .map_err(|e| Error::Agronomy(format!("bad sigma_log {sigma_log}: {e}")))?
            .sample(&mut rng)
    };
    let actual_yield = (decision.target_yield * shock).min(farm.potential_yield);
    let yield_gap = farm.potential_yield - actual_yield;
    let production = actual_yield * farm.area;
    let cost: f64 = env
        .input_prices
        .iter()
        .zip(&decision.inputs)
        .map(|(p, x)| p * x)
        .sum();
    let realized_profit =
        farm.area * (env.wheat_price * actual_yield - cost + env.per_ha_payment);
    let out = Outcome {
        actual_yield,
        yield_gap,
        production,
        realized_profit,
    };
    if !(out.actual_yield.is_finite()
        && out.yield_gap >= 0.0
        && out.production.is_finite()
        && out.realized_profit.is_finite())
    {
        return Err(Error::Agronomy(format!(
            "farm {}: non-finite outcome {out:?}",
            farm.id
        )));
    }
    Ok(out)
}

/// Per-stress-kind behavioral parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressParams {
    pub loss_share: f64,
    /// Fallback response rate when calibration cannot find one.
    pub response_rate: f64,
    pub input_price: f64,
}

/// Agronomy configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgronomyParams {
    /// Farms at or above this area act as optimizers; smaller ones are
    /// rule-based.
    pub size_threshold_ha: f64,
    /// Log-scale standard deviation of the seasonal yield shock.
    pub sigma_log: f64,
    /// Diesel use per tractor hour (inventory coefficient).
    pub liters_per_hour: f64,
    /// Reference wheat price used for response-rate calibration.
    pub reference_price: f64,
    /// Default potential-yield sampling range, t/ha.
    pub yield_range: (f64, f64),
    /// Per-cluster overrides of the potential-yield range.
    pub cluster_yield_ranges: BTreeMap<usize, (f64, f64)>,
    /// Parameters per stress kind, in [`StressKind::ALL`] order.
    pub stress: [StressParams; 4],
}

impl Default for AgronomyParams {
    fn default() -> Self {
        AgronomyParams {
            size_threshold_ha: 20.0,
            sigma_log: 0.10,
            liters_per_hour: 8.0,
            reference_price: 250.0,
            yield_range: (2.4, 5.2),
            cluster_yield_ranges: BTreeMap::new(),
            stress: [
                StressParams {
                    loss_share: 0.40,
                    response_rate: 0.02,
                    input_price: 1.1,
                },
                StressParams {
                    loss_share: 0.20,
                    response_rate: 1.5,
                    input_price: 25.0,
                },
                StressParams {
                    loss_share: 0.12,
                    response_rate: 1.5,
                    input_price: 30.0,
                },
                StressParams {
                    loss_share: 0.15,
                    response_rate: 1.8,
                    input_price: 35.0,
                },
            ],
        }
    }
}

impl AgronomyParams {
    pub fn validate(&self) -> Result<()> {
        let loss_sum: f64 = self.stress.iter().map(|s| s.loss_share).sum();
        if loss_sum >= 1.0 {
            return Err(Error::Agronomy(format!(
                "stress loss shares sum to {loss_sum} >= 1"
            )));
        }
        for s in &self.stress {
            if !(s.loss_share > 0.0 && s.loss_share < 1.0)
                || !(s.response_rate > 0.0)
                || !(s.input_price > 0.0)
            {
                return Err(Error::Agronomy(format!("invalid stress params {s:?}")));
            }
        }
        if !(self.sigma_log >= 0.0) {
            return Err(Error::Agronomy("sigma_log must be >= 0".into()));
        }
        if !(self.yield_range.0 > 0.0 && self.yield_range.1 >= self.yield_range.0) {
            return Err(Error::Agronomy(format!(
                "bad yield range {:?}",
                self.yield_range
            )));
        }
        Ok(())
    }

    fn yield_range_for(&self, cluster: usize) -> (f64, f64) {
        self.cluster_yield_ranges
            .get(&cluster)
            .copied()
            .unwrap_or(self.yield_range)
    }
}

/// Per-kind input intensity implied by a microdata record: total NPK
/// fertilizer for nutrition, the matching pesticide class otherwise.
pub fn record_intensities(record: &crate::population::FarmRecord) -> [f64; 4] {
    [
        record.fert_n + record.fert_p + record.fert_k,
        record.herbicide,
        record.insecticide,
        record.fungicide,
    ]
}

/// Calibrate per-kind response rates so the cluster-mean input intensities
/// sit at (or as near as achievable to) the joint interior optimum at the
/// reference price.
///
/// The factors couple multiplicatively, so each kind is calibrated against
/// the effective potential yield implied by the other kinds' terms at their
/// own means, iterated to a fixed point. Where the mean intensity cannot be
/// an interior optimum at any rate (observed input too high for the price),
/// the rate maximizing the implied input demand, `p e / (p_w s y_eff)`, is
/// used instead; a zero mean keeps the configured default.
fn calibrate_cluster_rates(
    stress: &[StressParams; 4],
    reference_price: f64,
    means: &[f64; 4],
    mid_yield: f64,
) -> [f64; 4] {
    let mut rates: [f64; 4] = std::array::from_fn(|i| stress[i].response_rate);
    let mut terms: [f64; 4] =
        std::array::from_fn(|i| 1.0 - stress[i].loss_share * (-rates[i] * means[i]).exp());
    for _ in 0..200 {
        let mut max_change = 0.0f64;
        for i in 0..4 {
            let xbar = means[i];
            if xbar <= 0.0 {
                continue;
            }
            let others: f64 = terms
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, t)| t)
                .product();
            let y_eff = mid_yield * others;
            let s = stress[i].loss_share;
            let p = stress[i].input_price;
            let g = |l: f64| reference_price * l * s * y_eff * (-l * xbar).exp() - p;
            let cap = 1.0 / xbar;
            let new_rate = if g(cap) >= 0.0 {
                let (mut lo, mut hi) = (0.0, cap);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            } else {
                p * std::f64::consts::E / (reference_price * s * y_eff)
            };
            max_change = max_change.max((new_rate - rates[i]).abs() / new_rate);
            rates[i] = new_rate;
            terms[i] = 1.0 - s * (-new_rate * xbar).exp();
        }
        if max_change < 1e-12 {
            break;
        }
    }
    rates
}

/// Build simulation farms from a synthetic population.
///
/// Potential yields are drawn per farm from the cluster's configured range;
/// response rates are calibrated per (cluster, stress kind) so cluster-mean
/// intensities are near the interior optimum at the reference price;
/// rule-based memory starts at the cluster-mean intensities.
pub fn build_farms(
    pop: &SyntheticPopulation,
    params: &AgronomyParams,
    global_seed: u64,
) -> Result<Vec<Farm>> {
    params.validate()?;
    if pop.farms.is_empty() {
        return Err(Error::Agronomy("empty population".into()));
    }

    // Cluster-mean intensities.
    let mut sums: BTreeMap<usize, ([f64; 4], usize)> = BTreeMap::new();
    for farm in &pop.farms {
        let entry = sums.entry(farm.cluster_id).or_insert(([0.0; 4], 0));
        for (s, v) in entry.0.iter_mut().zip(record_intensities(&farm.record)) {
            *s += v;
        }
        entry.1 += 1;
    }
    let mut cluster_means: BTreeMap<usize, [f64; 4]> = BTreeMap::new();
    let mut cluster_rates: BTreeMap<usize, [f64; 4]> = BTreeMap::new();
    for (&cluster, &(totals, n)) in &sums {
        let mut means = totals;
        for m in &mut means {
            *m /= n as f64;
        }
        let (lo, hi) = params.yield_range_for(cluster);
        let mid_yield = 0.5 * (lo + hi);
        let rates =
            calibrate_cluster_rates(&params.stress, params.reference_price, &means, mid_yield);
        cluster_means.insert(cluster, means);
        cluster_rates.insert(cluster, rates);
    }

    let mut farms = Vec::with_capacity(pop.farms.len());
    for (idx, assigned) in pop.farms.iter().enumerate() {
        let id = idx as u64;
        let record = &assigned.record;
        let (lo, hi) = params.yield_range_for(assigned.cluster_id);
        let potential_yield = if hi > lo {
            let mut rng = stream_rng(global_seed, Stream::PotentialYield, id, 0);
            Uniform::new(lo, hi)
                .map_err(|e| Error::Agronomy(format!("bad yield range: {e}")))?
                .sample(&mut rng)
        } else {
            lo
        };
        let rates = cluster_rates[&assigned.cluster_id];
        let stress_factors: Vec<StressFactor> = StressKind::ALL
            .iter()
            .enumerate()
            .map(|(i, &kind)| StressFactor {
                kind,
                loss_share: params.stress[i].loss_share,
                response_rate: rates[i],
                input_price: params.stress[i].input_price,
            })
            .collect();
        let npk_total = record.fert_n + record.fert_p + record.fert_k;
        let npk_shares = if npk_total > 0.0 {
            [
                record.fert_n / npk_total,
                record.fert_p / npk_total,
                record.fert_k / npk_total,
            ]
        } else {
            [0.6, 0.25, 0.15]
        };
        let farm = Farm {
            id,
            area: record.area,
            potential_yield,
            stress_factors,
            behavior: if record.area >= params.size_threshold_ha {
                Behavior::Optimizer
            } else {
                Behavior::RuleBased
            },
            last_inputs: cluster_means[&assigned.cluster_id].to_vec(),
            adopted_schemes: BTreeSet::new(),
            cluster_id: assigned.cluster_id,
            tractor_hours_per_ha: record.tractor_hours_per_ha,
            npk_shares,
        };
        farm.validate()?;
        farms.push(farm);
    }
    Ok(farms)
}
