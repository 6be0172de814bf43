//! Global wheat market: regional producers and buyers clear in market
//! sessions. Equilibrium prices come from intersecting aggregated linear
//! supply and demand curves (truncated at zero quantity), with transport
//! costs borne by buyers as a shift of their willingness-to-pay at the
//! market.
//!
//! Clearing runs on the coordinator only, markets in configured order, so
//! price vectors are deterministic for identical world state and inputs.

use serde::Serialize;

use crate::config::{MemberSpec, WorldConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Producer,
    Buyer,
    Both,
}

/// A world region: one curve pair anchored at the reference price.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    pub name: String,
    pub role: Role,
    /// Supply at the reference price, tonnes.
    pub base_supply: f64,
    /// Demand at the reference price, tonnes.
    pub base_demand: f64,
    /// Tonnes per currency unit, >= 0.
    pub supply_slope: f64,
    /// Tonnes per currency unit, <= 0.
    pub demand_slope: f64,
    /// Transport zone index.
    pub location: usize,
    /// Optional exogenous per-season supply override (tonnes at reference
    /// price); the last entry persists beyond the series.
    pub supply_by_season: Option<Vec<f64>>,
}

/// Membership of a region in a market: the fraction of its curve offered
/// or demanded there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Member {
    pub region: usize,
    pub share: f64,
}

/// One market: participating producers and buyers plus transport rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub id: String,
    pub producers: Vec<Member>,
    pub buyers: Vec<Member>,
    /// `transport[p][b]`: currency per tonne from producer position `p` to
    /// buyer position `b`.
    pub transport: Vec<Vec<f64>>,
    /// Mean transport rate into this market per buyer position; shifts the
    /// buyer's demand curve (buyers bear transport).
    pub buyer_transport: Vec<f64>,
}

/// A settled trade.
#[derive(Debug, Clone, PartialEq)]
pub struct Deal {
    /// Indices into [`WorldState::regions`].
    pub producer: usize,
    pub buyer: usize,
    pub price: f64,
    pub quantity: f64,
    /// Total transport cost for the deal, paid by the buyer.
    pub transport_cost_paid: f64,
}

/// The full market-side state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub regions: Vec<Region>,
    /// Markets in clearing order.
    pub markets: Vec<Market>,
    pub reference_price: f64,
    pub italy_region: usize,
    /// Index into `markets` of Italy's reference market.
    pub italy_market: usize,
    pub italy_price_band: (f64, f64),
    /// Current-season supply override per region (tonnes at reference
    /// price); `None` keeps `base_supply`.
    overrides: Vec<Option<f64>>,
}

/// Result of clearing one market session.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionOutcome {
    Cleared {
        price: f64,
        quantity: f64,
        deals: Vec<Deal>,
    },
    /// Aggregate demand exceeds supply at every price: flagged and skipped.
    Skipped { reason: String },
}

/// One full market round: every market cleared once.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    /// Session outcomes aligned with [`WorldState::markets`].
    pub sessions: Vec<SessionOutcome>,
    /// Tonnes sold per region across all sessions.
    pub sold: Vec<f64>,
    /// Tonnes bought per region across all sessions.
    pub bought: Vec<f64>,
}

impl RoundResult {
    /// Clearing price of Italy's reference market; `None` when that market
    /// was skipped this season.
    pub fn italy_price(&self, world: &WorldState) -> Option<f64> {
        match &self.sessions[world.italy_market] {
            SessionOutcome::Cleared { price, .. } => Some(*price),
            SessionOutcome::Skipped { .. } => None,
        }
    }

    pub fn net_imports(&self, region: usize) -> f64 {
        self.bought[region] - self.sold[region]
    }
}

/// Build and validate the world from its config.
pub fn build_world(config: &WorldConfig) -> Result<WorldState> {
    config.validate_schema()?;
    let regions: Vec<Region> = config
        .region
        .iter()
        .map(|r| {
            let role = match r.role.as_str() {
                "producer" => Role::Producer,
                "buyer" => Role::Buyer,
                "both" => Role::Both,
                other => {
                    return Err(Error::Market(format!(
                        "region {}: unknown role `{other}`",
                        r.id
                    )))
                }
            };
            if r.base_supply < 0.0 || r.base_demand < 0.0 {
                return Err(Error::Market(format!(
                    "region {}: base quantities must be >= 0",
                    r.id
                )));
            }
            if r.supply_slope < 0.0 {
                return Err(Error::Market(format!(
                    "region {}: supply slope must be >= 0",
                    r.id
                )));
            }
            if r.demand_slope > 0.0 {
                return Err(Error::Market(format!(
                    "region {}: demand slope must be <= 0",
                    r.id
                )));
            }
            if r.location >= config.transport.matrix.len() {
                return Err(Error::Market(format!(
                    "region {}: location {} outside the transport matrix",
                    r.id, r.location
                )));
            }
            Ok(Region {
                id: r.id.clone(),
                name: r.name.clone(),
                role,
                base_supply: r.base_supply,
                base_demand: r.base_demand,
                supply_slope: r.supply_slope,
                demand_slope: r.demand_slope,
                location: r.location,
                supply_by_season: r.supply_by_season.clone(),
            })
        })
        .collect::<Result<_>>()?;

    for row in &config.transport.matrix {
        if row.len() != config.transport.matrix.len() {
            return Err(Error::Market("transport matrix is not square".into()));
        }
        if row.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::Market("transport costs must be >= 0".into()));
        }
    }

    let find_region = |id: &str| -> Result<usize> {
        regions
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| Error::Market(format!("unknown region `{id}` referenced by a market")))
    };

    // Count memberships per side for even-split defaults.
    let mut producer_memberships = vec![0usize; regions.len()];
    let mut buyer_memberships = vec![0usize; regions.len()];
    for m in &config.market {
        for spec in &m.producers {
            producer_memberships[find_region(spec.region())?] += 1;
        }
        for spec in &m.buyers {
            buyer_memberships[find_region(spec.region())?] += 1;
        }
    }

    let resolve = |spec: &MemberSpec, memberships: &[usize]| -> Result<Member> {
        let region = find_region(spec.region())?;
        let share = match spec.share() {
            Some(s) => {
                if !(s > 0.0 && s <= 1.0) {
                    return Err(Error::Market(format!(
                        "region {}: share {s} outside (0, 1]",
                        spec.region()
                    )));
                }
                s
            }
            None => 1.0 / memberships[region] as f64,
        };
        Ok(Member { region, share })
    };

    let mut markets = Vec::with_capacity(config.market.len());
    for m in &config.market {
        if m.producers.is_empty() || m.buyers.is_empty() {
            return Err(Error::Market(format!(
                "market {}: needs at least one producer and one buyer",
                m.id
            )));
        }
        let producers: Vec<Member> = m
            .producers
            .iter()
            .map(|s| resolve(s, &producer_memberships))
            .collect::<Result<_>>()?;
        let buyers: Vec<Member> = m
            .buyers
            .iter()
            .map(|s| resolve(s, &buyer_memberships))
            .collect::<Result<_>>()?;
        let transport: Vec<Vec<f64>> = producers
            .iter()
            .map(|p| {
                buyers
                    .iter()
                    .map(|b| {
                        config.transport.matrix[regions[p.region].location]
                            [regions[b.region].location]
                    })
                    .collect()
            })
            .collect();
        let buyer_transport: Vec<f64> = (0..buyers.len())
            .map(|bi| {
                transport.iter().map(|row| row[bi]).sum::<f64>() / producers.len() as f64
            })
            .collect();
        markets.push(Market {
            id: m.id.clone(),
            producers,
            buyers,
            transport,
            buyer_transport,
        });
    }

    // Reorder to the configured clearing order.
    if config.clearing_order.len() != markets.len() {
        return Err(Error::Market(format!(
            "clearing order lists {} markets, config defines {}",
            config.clearing_order.len(),
            markets.len()
        )));
    }
    let mut ordered = Vec::with_capacity(markets.len());
    for id in &config.clearing_order {
        let pos = markets
            .iter()
            .position(|m| &m.id == id)
            .ok_or_else(|| Error::Market(format!("clearing order names unknown market `{id}`")))?;
        ordered.push(markets[pos].clone());
    }

    // Every producer region must participate in at least one market.
    for (i, r) in regions.iter().enumerate() {
        let is_producer = matches!(r.role, Role::Producer | Role::Both);
        if is_producer && producer_memberships[i] == 0 {
            return Err(Error::Market(format!(
                "producer region `{}` participates in no market",
                r.id
            )));
        }
    }

    // Per-region explicit shares must sum to 1 on each side.
    let mut prod_share_sum = vec![0.0f64; regions.len()];
    let mut buy_share_sum = vec![0.0f64; regions.len()];
    for m in &ordered {
        for p in &m.producers {
            prod_share_sum[p.region] += p.share;
        }
        for b in &m.buyers {
            buy_share_sum[b.region] += b.share;
        }
    }
    for (i, r) in regions.iter().enumerate() {
        if producer_memberships[i] > 0 && (prod_share_sum[i] - 1.0).abs() > 1e-9 {
            return Err(Error::Market(format!(
                "region {}: producer shares sum to {}, expected 1",
                r.id, prod_share_sum[i]
            )));
        }
        if buyer_memberships[i] > 0 && (buy_share_sum[i] - 1.0).abs() > 1e-9 {
            return Err(Error::Market(format!(
                "region {}: buyer shares sum to {}, expected 1",
                r.id, buy_share_sum[i]
            )));
        }
    }

    let italy_region = find_region(&config.italy_region)?;
    let italy_market = ordered
        .iter()
        .position(|m| m.id == config.italy_market)
        .ok_or_else(|| {
            Error::Market(format!(
                "italy_market `{}` is not a configured market",
                config.italy_market
            ))
        })?;

    let overrides = vec![None; regions.len()];
    Ok(WorldState {
        regions,
        markets: ordered,
        reference_price: config.reference_price,
        italy_region,
        italy_market,
        italy_price_band: config.italy_price_band,
        overrides,
    })
}

impl WorldState {
    /// Region supply at price `p`, tonnes (truncated at zero). An active
    /// production override is realized output and sells inelastically:
    /// quantity at every price equals the override, so a zero harvest
    /// supplies nothing no matter how high prices go.
    pub fn region_supply(&self, region: usize, p: f64) -> f64 {
        match self.overrides[region] {
            Some(q) => q.max(0.0),
            None => {
                let r = &self.regions[region];
                (r.base_supply + r.supply_slope * (p - self.reference_price)).max(0.0)
            }
        }
    }

    /// Region demand at effective price `p` (market price plus the buyer's
    /// transport rate), tonnes, truncated at zero.
    pub fn region_demand(&self, region: usize, p: f64) -> f64 {
        let r = &self.regions[region];
        (r.base_demand + r.demand_slope * (p - self.reference_price)).max(0.0)
    }

    /// Apply exogenous per-season production overrides plus the endogenous
    /// Italy production.
    pub fn set_season(&mut self, season: usize, italian_production: f64) {
        for (i, r) in self.regions.iter().enumerate() {
            self.overrides[i] = r
                .supply_by_season
                .as_ref()
                .map(|series| series[season.min(series.len() - 1)]);
        }
        self.overrides[self.italy_region] = Some(italian_production);
    }
}

/// Evaluate the aggregated supply and demand of one market at a market
/// price, as `(supply, demand)` in tonnes.
pub fn aggregate_curves(market: &Market, world: &WorldState, price: f64) -> (f64, f64) {
    let supply: f64 = market
        .producers
        .iter()
        .map(|m| m.share * world.region_supply(m.region, price))
        .sum();
    let demand: f64 = market
        .buyers
        .iter()
        .zip(&market.buyer_transport)
        .map(|(m, t)| m.share * world.region_demand(m.region, price + t))
        .sum();
    (supply, demand)
}

/// Maximum doublings of the bracketing price before a market is declared
/// unsatisfiable.
const MAX_PRICE_DOUBLINGS: usize = 60;
const BISECTION_ITERS: usize = 100;

/// Clear one market session: find the price where aggregate supply meets
/// aggregate demand, then allocate the traded quantity pro rata across
/// active producers and buyers (every active producer sells to every active
/// buyer). Conservation is exact up to one final rounding.
pub fn clear_session(market: &Market, world: &WorldState) -> SessionOutcome {
    let (s0, d0) = aggregate_curves(market, world, 0.0);

    let price = if s0 >= d0 {
        // Excess supply at zero price: quantity is set by the demand side.
        0.0
    } else {
        let mut hi = world.reference_price.max(1.0);
        let mut doublings = 0;
        loop {
            let (s, d) = aggregate_curves(market, world, hi);
            if s >= d {
                break;
            }
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_PRICE_DOUBLINGS {
                return SessionOutcome::Skipped {
                    reason: format!(
                        "demand never met: excess demand at price {hi:.3e}"
                    ),
                };
            }
        }
        let mut lo = 0.0;
        for _ in 0..BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            let (s, d) = aggregate_curves(market, world, mid);
            if s >= d {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
        }
        hi
    };

    let (supply, demand) = aggregate_curves(market, world, price);
    let quantity = supply.min(demand);
    if quantity <= 0.0 {
        return SessionOutcome::Cleared {
            price,
            quantity: 0.0,
            deals: Vec::new(),
        };
    }

    // Pro-rata allocation: deal(p,b) proportional to producer supply times
    // buyer demand at the clearing price.
    let prod_qty: Vec<f64> = market
        .producers
        .iter()
        .map(|m| m.share * world.region_supply(m.region, price))
        .collect();
    let buy_qty: Vec<f64> = market
        .buyers
        .iter()
        .zip(&market.buyer_transport)
        .map(|(m, t)| m.share * world.region_demand(m.region, price + t))
        .collect();

    let mut weights: Vec<(usize, usize, f64)> = Vec::new();
    let mut total_weight = 0.0;
    for (pi, pq) in prod_qty.iter().enumerate() {
        if *pq <= 0.0 {
            continue;
        }
        for (bi, bq) in buy_qty.iter().enumerate() {
            if *bq <= 0.0 {
                continue;
            }
            let w = pq * bq;
            weights.push((pi, bi, w));
            total_weight += w;
        }
    }
    if weights.is_empty() || total_weight <= 0.0 {
        return SessionOutcome::Cleared {
            price,
            quantity: 0.0,
            deals: Vec::new(),
        };
    }

    let mut deals: Vec<Deal> = weights
        .iter()
        .map(|&(pi, bi, w)| Deal {
            producer: market.producers[pi].region,
            buyer: market.buyers[bi].region,
            price,
            quantity: quantity * (w / total_weight),
            transport_cost_paid: 0.0,
        })
        .collect();

    // Force exact conservation: assign the rounding residual to the
    // largest deal.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for d in &deals {
        let y = d.quantity - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let residual = quantity - sum;
    if let Some(largest) = deals
        .iter_mut()
        .max_by(|a, b| a.quantity.partial_cmp(&b.quantity).unwrap())
    {
        largest.quantity += residual;
    }
    for (d, &(pi, bi, _)) in deals.iter_mut().zip(&weights) {
        d.transport_cost_paid = d.quantity * market.transport[pi][bi];
    }
    deals.retain(|d| d.quantity > 0.0);

    SessionOutcome::Cleared {
        price,
        quantity,
        deals,
    }
}

/// Run one full market round with Italy's production rebased to the
/// season's realized output. Markets clear sequentially in configured
/// order.
pub fn run_market_round(
    world: &mut WorldState,
    italian_production: f64,
    season: usize,
) -> Result<RoundResult> {
    if !(italian_production >= 0.0) {
        return Err(Error::Market(format!(
            "italian production must be >= 0, got {italian_production}"
        )));
    }
    world.set_season(season, italian_production);

    let mut sessions = Vec::with_capacity(world.markets.len());
    let mut sold = vec![0.0; world.regions.len()];
    let mut bought = vec![0.0; world.regions.len()];
    for market in &world.markets {
        let outcome = clear_session(market, world);
        if let SessionOutcome::Cleared { deals, .. } = &outcome {
            for d in deals {
                sold[d.producer] += d.quantity;
                bought[d.buyer] += d.quantity;
            }
        }
        sessions.push(outcome);
    }
    Ok(RoundResult {
        sessions,
        sold,
        bought,
    })
}
