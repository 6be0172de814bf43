//! Policy schemes and how they reshape a farm's decision environment.
//!
//! The scheme algebra is small: input taxes and subsidies move effective
//! input prices, mandatory caps become box constraints in the optimizer,
//! per-hectare payments enter profit additively (possibly gated by an input
//! limit), and voluntary cap schemes trade a binding cap for a payment,
//! adopted farm by farm when the optimized profit under the scheme is at
//! least the profit without it (ties adopt: the payment is risk-free).

use serde::{Deserialize, Serialize};

use crate::agronomy::{
    optimize_multi, rule_based_decide, Behavior, Decision, DecisionEnv, Farm, StressKind,
};
use crate::error::{Error, Result};

/// Input-intensity eligibility gate for a payment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputLimit {
    pub target: StressKind,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Effective input price becomes `(1 + rate) * p`.
    InputTax { target: StressKind, rate: f64 },
    /// Effective input price becomes `(1 - rate) * p`, rate < 1.
    InputSubsidy { target: StressKind, rate: f64 },
    /// Per-hectare payment, optionally gated by a decided input intensity.
    GreenPayment {
        per_ha: f64,
        #[serde(default)]
        max_input: Option<InputLimit>,
    },
    /// Hard upper bound on one input for every farm.
    InputCapMandatory { target: StressKind, cap: f64 },
    /// Cap plus payment, adopted at the farm's discretion. When `coupled`
    /// the payment conditions on accepting the cap; otherwise the payment
    /// is a pure transfer and adoption is trivially profitable.
    InputCapVoluntary {
        target: StressKind,
        cap: f64,
        per_ha: f64,
        #[serde(default = "default_true")]
        coupled: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScheme {
    pub id: String,
    /// Seasons in which the scheme is active; `None` means every season.
    #[serde(default)]
    pub seasons: Option<Vec<usize>>,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

impl PolicyScheme {
    pub fn active_in(&self, season: usize) -> bool {
        self.seasons.as_ref().is_none_or(|s| s.contains(&season))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("policy `{}`: {msg}", self.id)));
        match &self.kind {
            PolicyKind::InputTax { rate, .. } => {
                if !(*rate >= 0.0) {
                    return bad(format!("tax rate {rate} must be >= 0"));
                }
            }
            PolicyKind::InputSubsidy { rate, .. } => {
                if !(*rate >= 0.0 && *rate < 1.0) {
                    return bad(format!("subsidy rate {rate} must be in [0, 1)"));
                }
            }
            PolicyKind::GreenPayment { per_ha, max_input } => {
                if !(*per_ha >= 0.0) {
                    return bad(format!("payment {per_ha} must be >= 0"));
                }
                if let Some(limit) = max_input {
                    if !(limit.cap >= 0.0) {
                        return bad(format!("eligibility cap {} must be >= 0", limit.cap));
                    }
                }
            }
            PolicyKind::InputCapMandatory { cap, .. } => {
                if !(*cap >= 0.0) {
                    return bad(format!("cap {cap} must be >= 0"));
                }
            }
            PolicyKind::InputCapVoluntary { cap, per_ha, .. } => {
                if !(*cap >= 0.0) {
                    return bad(format!("cap {cap} must be >= 0"));
                }
                if !(*per_ha >= 0.0) {
                    return bad(format!("payment {per_ha} must be >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// The policy-adjusted decision problem for one farm and season.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEnv {
    /// Taxes, subsidies, mandatory caps and unconditional payments applied.
    pub env: DecisionEnv,
    /// Voluntary cap schemes awaiting per-farm adoption decisions.
    pub voluntary: Vec<PolicyScheme>,
    /// Payments granted after the decision if the decided input intensity
    /// is within the limit.
    pub conditional_payments: Vec<(InputLimit, f64)>,
}

fn factor_position(farm: &Farm, kind: StressKind) -> Option<usize> {
    farm.stress_factors.iter().position(|f| f.kind == kind)
}

/// Apply the mandatory parts of the active schemes to a farm's raw
/// environment. Voluntary schemes and gated payments are returned for the
/// caller's adoption and eligibility passes.
pub fn apply_policy(farm: &Farm, schemes: &[PolicyScheme], wheat_price: f64) -> Result<PolicyEnv> {
    let mut env = DecisionEnv::raw(farm, wheat_price);
    let mut voluntary = Vec::new();
    let mut conditional_payments = Vec::new();
    for scheme in schemes {
        scheme.validate()?;
        match &scheme.kind {
            PolicyKind::InputTax { target, rate } => {
                if let Some(i) = factor_position(farm, *target) {
                    env.input_prices[i] *= 1.0 + rate;
                }
            }
            PolicyKind::InputSubsidy { target, rate } => {
                if let Some(i) = factor_position(farm, *target) {
                    env.input_prices[i] *= 1.0 - rate;
                }
            }
            PolicyKind::GreenPayment { per_ha, max_input } => match max_input {
                None => env.per_ha_payment += per_ha,
                Some(limit) => conditional_payments.push((*limit, *per_ha)),
            },
            PolicyKind::InputCapMandatory { target, cap } => {
                if let Some(i) = factor_position(farm, *target) {
                    env.caps[i] = env.caps[i].min(*cap);
                }
            }
            PolicyKind::InputCapVoluntary { .. } => voluntary.push(scheme.clone()),
        }
    }
    Ok(PolicyEnv {
        env,
        voluntary,
        conditional_payments,
    })
}

/// Dispatch to the farm's decision process.
pub fn decide(farm: &Farm, env: &DecisionEnv, previous_price: f64) -> Result<Decision> {
    match farm.behavior {
        Behavior::Optimizer => optimize_multi(farm, env),
        Behavior::RuleBased => rule_based_decide(farm, env, previous_price),
    }
}

/// Environment with one voluntary scheme accepted.
pub fn env_with_scheme(farm: &Farm, env: &DecisionEnv, scheme: &PolicyScheme) -> DecisionEnv {
    let mut with = env.clone();
    if let PolicyKind::InputCapVoluntary {
        target,
        cap,
        per_ha,
        coupled,
    } = &scheme.kind
    {
        if *coupled {
            if let Some(i) = factor_position(farm, *target) {
                with.caps[i] = with.caps[i].min(*cap);
            }
        }
        with.per_ha_payment += per_ha;
    }
    with
}

/// Does the farm adopt a voluntary scheme? Adopt when the decision profit
/// under the scheme is at least the profit without it (tie adopts).
pub fn decide_adoption(
    farm: &Farm,
    scheme: &PolicyScheme,
    env: &DecisionEnv,
    previous_price: f64,
) -> Result<bool> {
    if !matches!(scheme.kind, PolicyKind::InputCapVoluntary { .. }) {
        return Err(Error::Config(format!(
            "policy `{}`: adoption decisions apply to voluntary cap schemes only",
            scheme.id
        )));
    }
    let without = decide(farm, env, previous_price)?;
    let with_env = env_with_scheme(farm, env, scheme);
    let with = decide(farm, &with_env, previous_price)?;
    Ok(with.expected_profit >= without.expected_profit)
}
