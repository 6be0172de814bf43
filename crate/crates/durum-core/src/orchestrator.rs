//! The seasonal feedback loop: distribute prices and schemes to farms,
//! decide/realize/assess in parallel, reduce national production and
//! impacts in fixed farm order on the coordinator, clear the world market,
//! and carry the new price into the next season.
//!
//! Concurrency contract: one coordinator, `w` workers. Workers own disjoint
//! contiguous farm partitions and never communicate; all randomness is
//! keyed by (global seed, farm id, season), and every reduction runs on the
//! coordinator in ascending farm id order. Results are therefore
//! bit-identical for any worker count, including `w = 1`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::agronomy::{self, Behavior, Decision, Farm, Outcome, StressKind};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::lca::{self, CharacterizationMatrix, FunctionalUnit, ImpactResult, NUM_FLOWS};
use crate::market::{self, RoundResult, SessionOutcome, WorldState};
use crate::policy::{self, PolicyScheme};

/// Everything recorded for one farm in one season.
#[derive(Debug, Clone, PartialEq)]
pub struct FarmSeasonRecord {
    pub farm_id: u64,
    pub cluster_id: usize,
    pub area: f64,
    pub behavior: Behavior,
    /// Scheme ids adopted this season, in config order.
    pub adopted: Vec<String>,
    pub decision: Decision,
    pub outcome: Outcome,
    /// Per-hectare flows and impacts.
    pub flows: [f64; NUM_FLOWS],
    pub impacts: ImpactResult,
}

/// Aggregate outputs of one season.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonResult {
    pub season: usize,
    /// Price farms decided at this season.
    pub decision_price: f64,
    /// Italy-relevant price produced by this season's market round.
    pub italy_price: f64,
    /// True when the reference market was skipped and the previous price
    /// was carried forward.
    pub price_flagged: bool,
    pub national_production: f64,
    pub mean_yield_gap: f64,
    /// Farms adopting each voluntary scheme.
    pub adoption_counts: BTreeMap<String, u64>,
    /// National flow totals (per-hectare flows times area, farm-id order).
    pub national_flows: [f64; NUM_FLOWS],
    pub national_midpoints: Vec<f64>,
    pub national_endpoints: [f64; 3],
    pub per_tonne_endpoints: Option<[f64; 3]>,
    /// Per-market clearing prices in clearing order; `None` = skipped.
    pub market_prices: Vec<(String, Option<f64>)>,
    /// Optimizations that hit the sweep cap (0 in a healthy run).
    pub non_converged: u64,
}

/// Wall-clock phase timings for one season (never part of the exports).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonTiming {
    pub farm_phase_s: f64,
    pub reduce_phase_s: f64,
    pub market_phase_s: f64,
    pub total_s: f64,
}

/// Everything one season produces.
pub struct SeasonOutput {
    pub result: SeasonResult,
    pub records: Vec<FarmSeasonRecord>,
    pub round: RoundResult,
    pub timing: SeasonTiming,
}

/// A scenario in progress.
pub struct Simulation {
    pub config: ScenarioConfig,
    pub farms: Vec<Farm>,
    pub world: WorldState,
    current_price: f64,
    previous_price: f64,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Simulation> {
        let pop = config.build_population()?;
        let farms = agronomy::build_farms(&pop, &config.agronomy, config.seed)?;
        let world = market::build_world(&config.world)?;
        let current_price = config.initial_price;
        Ok(Simulation {
            config,
            farms,
            world,
            current_price,
            previous_price: current_price,
        })
    }

    pub fn current_price(&self) -> f64 {
        self.current_price
    }

    /// Run one season and advance the price state.
    pub fn run_season(&mut self, season: usize) -> Result<SeasonOutput> {
        let t_start = Instant::now();
        let schemes = self.config.schemes_for_season(season);
        let price = self.current_price;
        let prev_price = self.previous_price;

        // Phase 2+3: per-farm decisions, realization and impact assessment,
        // parallel over contiguous partitions.
        let workers = self.config.workers.max(1);
        let n = self.farms.len();
        let chunk_size = n.div_ceil(workers);
        let agronomy = &self.config.agronomy;
        let matrix = &self.config.matrix;
        let seed = self.config.seed;

        let mut partials: Vec<Result<Vec<FarmSeasonRecord>>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .farms
                .chunks_mut(chunk_size)
                .map(|chunk| {
                    let schemes = &schemes;
                    scope.spawn(move || {
                        chunk
                            .iter_mut()
                            .map(|farm| {
                                process_farm(
                                    farm, schemes, price, prev_price, agronomy, matrix, seed,
                                    season,
                                )
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            for h in handles {
                partials.push(h.join().expect("worker panicked"));
            }
        });
        let mut records = Vec::with_capacity(n);
        for partial in partials {
            records.extend(partial?);
        }
        let t_farms = Instant::now();

        // Phase 4: coordinator reduction in ascending farm id order.
        debug_assert!(records.windows(2).all(|w| w[0].farm_id < w[1].farm_id));
        let mut national_production = 0.0;
        let mut gap_sum = 0.0;
        let mut national_flows = [0.0; NUM_FLOWS];
        let mut adoption_counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut non_converged = 0u64;
        for r in &records {
            national_production += r.outcome.production;
            gap_sum += r.outcome.yield_gap;
            for (t, f) in national_flows.iter_mut().zip(&r.flows) {
                *t += f * r.area;
            }
            for id in &r.adopted {
                *adoption_counts.entry(id.clone()).or_default() += 1;
            }
            if !r.decision.converged {
                non_converged += 1;
            }
        }
        let impact_inputs: Vec<(u64, f64, ImpactResult)> = records
            .iter()
            .map(|r| (r.farm_id, r.area, r.impacts.clone()))
            .collect();
        let national = lca::aggregate_national(&impact_inputs, national_production)?;
        let t_reduce = Instant::now();

        // Phase 5: market round with the realized national production.
        let round = market::run_market_round(&mut self.world, national_production, season)?;
        let (italy_price, price_flagged) = match round.italy_price(&self.world) {
            Some(p) => (p, false),
            None => (self.current_price, true),
        };
        let market_prices = market_price_vector(&self.world, &round);
        self.previous_price = self.current_price;
        self.current_price = italy_price;
        let t_market = Instant::now();

        let result = SeasonResult {
            season,
            decision_price: price,
            italy_price,
            price_flagged,
            national_production,
            mean_yield_gap: gap_sum / n as f64,
            adoption_counts,
            national_flows,
            national_midpoints: national.totals.midpoints,
            national_endpoints: national.totals.endpoints,
            per_tonne_endpoints: national.per_tonne,
            market_prices,
            non_converged,
        };
        let timing = SeasonTiming {
            farm_phase_s: (t_farms - t_start).as_secs_f64(),
            reduce_phase_s: (t_reduce - t_farms).as_secs_f64(),
            market_phase_s: (t_market - t_reduce).as_secs_f64(),
            total_s: (t_market - t_start).as_secs_f64(),
        };
        Ok(SeasonOutput {
            result,
            records,
            round,
            timing,
        })
    }
}

fn market_price_vector(world: &WorldState, round: &RoundResult) -> Vec<(String, Option<f64>)> {
    world
        .markets
        .iter()
        .zip(&round.sessions)
        .map(|(m, s)| {
            let p = match s {
                SessionOutcome::Cleared { price, .. } => Some(*price),
                SessionOutcome::Skipped { .. } => None,
            };
            (m.id.clone(), p)
        })
        .collect()
}

/// Full per-farm pipeline for one season: policy, adoption, decision,
/// conditional payments, realization, inventory, characterization.
#[allow(clippy::too_many_arguments)]
fn process_farm(
    farm: &mut Farm,
    schemes: &[PolicyScheme],
    price: f64,
    prev_price: f64,
    agronomy: &crate::agronomy::AgronomyParams,
    matrix: &CharacterizationMatrix,
    seed: u64,
    season: usize,
) -> Result<FarmSeasonRecord> {
    let farm_id = farm.id;
    let wrap = move |e: Error| Error::FarmArithmetic {
        season,
        farm: farm_id,
        msg: e.to_string(),
    };

    let policy_env = policy::apply_policy(farm, schemes, price).map_err(wrap)?;
    let mut env = policy_env.env;
    let mut adopted = Vec::new();
    for scheme in &policy_env.voluntary {
        if policy::decide_adoption(farm, scheme, &env, prev_price).map_err(wrap)? {
            env = policy::env_with_scheme(farm, &env, scheme);
            adopted.push(scheme.id.clone());
        }
    }

    let mut decision = policy::decide(farm, &env, prev_price).map_err(wrap)?;
    for (limit, amount) in &policy_env.conditional_payments {
        let within = farm
            .stress_factors
            .iter()
            .zip(&decision.inputs)
            .filter(|(f, _)| f.kind == limit.target)
            .all(|(_, x)| *x <= limit.cap);
        if within {
            env.per_ha_payment += amount;
            decision.expected_profit += amount;
        }
    }

    let outcome =
        agronomy::realize_yield(farm, &decision, &env, agronomy.sigma_log, seed, season)
            .map_err(wrap)?;
    let inventory = lca::build_inventory(
        farm,
        &decision,
        &outcome,
        agronomy.liters_per_hour,
        FunctionalUnit::PerHectare,
    )
    .map_err(wrap)?;
    let impacts = lca::characterize(&inventory, matrix).map_err(wrap)?;

    farm.last_inputs = decision.inputs.clone();
    farm.adopted_schemes = adopted.iter().cloned().collect();

    Ok(FarmSeasonRecord {
        farm_id: farm.id,
        cluster_id: farm.cluster_id,
        area: farm.area,
        behavior: farm.behavior,
        adopted,
        decision,
        outcome,
        flows: inventory.flows,
        impacts,
    })
}

/// Run a whole scenario, writing `seasons.csv`, `farms_<season>.csv` and
/// `markets_<season>.csv` under `out_dir`. `on_season` fires after each
/// season with its result and timing.
pub fn run_scenario(
    config: ScenarioConfig,
    out_dir: &Path,
    mut on_season: impl FnMut(&SeasonResult, &SeasonTiming),
) -> Result<Vec<SeasonResult>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let seasons = config.seasons;
    let farm_export_every = config.farm_export_every;
    let category_names = config.matrix.categories.clone();
    let mut sim = Simulation::new(config)?;

    let seasons_path = out_dir.join("seasons.csv");
    let mut seasons_file = std::io::BufWriter::new(
        std::fs::File::create(&seasons_path).map_err(|e| Error::io(&seasons_path, e))?,
    );
    write_seasons_header(&mut seasons_file, &category_names)
        .map_err(|e| Error::io(&seasons_path, e))?;

    let mut results = Vec::with_capacity(seasons);
    for season in 0..seasons {
        let output = sim.run_season(season)?;
        write_season_row(&mut seasons_file, &output.result)
            .map_err(|e| Error::io(&seasons_path, e))?;

        let farms_path = out_dir.join(format!("farms_{season}.csv"));
        write_farms_csv(&farms_path, &output.records, &category_names, farm_export_every)?;
        let markets_path = out_dir.join(format!("markets_{season}.csv"));
        write_markets_csv(&markets_path, &sim.world, &output.round)?;

        on_season(&output.result, &output.timing);
        results.push(output.result);
    }
    seasons_file
        .flush()
        .map_err(|e| Error::io(&seasons_path, e))?;
    Ok(results)
}

fn write_seasons_header(w: &mut impl Write, categories: &[String]) -> std::io::Result<()> {
    write!(
        w,
        "season,decision_price,italy_price,price_flagged,national_production_t,mean_yield_gap_t_ha,adoptions_total,adoptions_by_scheme"
    )?;
    for f in lca::FLOW_NAMES {
        write!(w, ",flow_{f}")?;
    }
    for c in categories {
        write!(w, ",mid_{c}")?;
    }
    for e in lca::ENDPOINT_NAMES {
        write!(w, ",end_{e}")?;
    }
    for e in lca::ENDPOINT_NAMES {
        write!(w, ",per_t_{e}")?;
    }
    writeln!(w)
}

fn write_season_row(w: &mut impl Write, r: &SeasonResult) -> std::io::Result<()> {
    let adoptions_total: u64 = r.adoption_counts.values().sum();
    let by_scheme = r
        .adoption_counts
        .iter()
        .map(|(id, n)| format!("{id}={n}"))
        .collect::<Vec<_>>()
        .join(";");
    write!(
        w,
        "{},{},{},{},{},{},{},{}",
        r.season,
        r.decision_price,
        r.italy_price,
        r.price_flagged,
        r.national_production,
        r.mean_yield_gap,
        adoptions_total,
        by_scheme
    )?;
    for f in r.national_flows {
        write!(w, ",{f}")?;
    }
    for m in &r.national_midpoints {
        write!(w, ",{m}")?;
    }
    for e in r.national_endpoints {
        write!(w, ",{e}")?;
    }
    match r.per_tonne_endpoints {
        Some(pt) => {
            for e in pt {
                write!(w, ",{e}")?;
            }
        }
        None => write!(w, ",,,")?,
    }
    writeln!(w)
}

fn write_farms_csv(
    path: &Path,
    records: &[FarmSeasonRecord],
    categories: &[String],
    every: usize,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);

    write!(
        w,
        "farm_id,cluster_id,area_ha,behavior,adopted,target_yield_t_ha,input_nutrition,input_weeds,input_pests,input_fungi,expected_profit_per_ha,actual_yield_t_ha,yield_gap_t_ha,production_t,realized_profit"
    )
    .map_err(io)?;
    for f in lca::FLOW_NAMES {
        write!(w, ",flow_{f}").map_err(io)?;
    }
    for c in categories {
        write!(w, ",mid_{c}").map_err(io)?;
    }
    for e in lca::ENDPOINT_NAMES {
        write!(w, ",end_{e}").map_err(io)?;
    }
    // Per-tonne impacts (empty when the farm harvested nothing).
    for c in categories {
        write!(w, ",mid_{c}_per_t").map_err(io)?;
    }
    for e in lca::ENDPOINT_NAMES {
        write!(w, ",end_{e}_per_t").map_err(io)?;
    }
    writeln!(w).map_err(io)?;

    if every == 0 {
        return w.flush().map_err(io);
    }
    for r in records.iter().filter(|r| r.farm_id % every as u64 == 0) {
        let behavior = match r.behavior {
            Behavior::Optimizer => "optimizer",
            Behavior::RuleBased => "rule_based",
        };
        // Inputs by kind, zero when the farm lacks a factor of that kind.
        let mut by_kind = [0.0f64; 4];
        for (i, _kind) in StressKind::ALL.iter().enumerate() {
            by_kind[i] = r
                .decision
                .inputs
                .get(i)
                .copied()
                .unwrap_or(0.0);
        }
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.farm_id,
            r.cluster_id,
            r.area,
            behavior,
            r.adopted.join(";"),
            r.decision.target_yield,
            by_kind[0],
            by_kind[1],
            by_kind[2],
            by_kind[3],
            r.decision.expected_profit,
            r.outcome.actual_yield,
            r.outcome.yield_gap,
            r.outcome.production,
            r.outcome.realized_profit,
        )
        .map_err(io)?;
        for f in r.flows {
            write!(w, ",{f}").map_err(io)?;
        }
        for m in &r.impacts.midpoints {
            write!(w, ",{m}").map_err(io)?;
        }
        for e in r.impacts.endpoints {
            write!(w, ",{e}").map_err(io)?;
        }
        let yield_t = r.outcome.actual_yield;
        for m in &r.impacts.midpoints {
            if yield_t > 0.0 {
                write!(w, ",{}", m / yield_t).map_err(io)?;
            } else {
                write!(w, ",").map_err(io)?;
            }
        }
        for e in r.impacts.endpoints {
            if yield_t > 0.0 {
                write!(w, ",{}", e / yield_t).map_err(io)?;
            } else {
                write!(w, ",").map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_markets_csv(path: &Path, world: &WorldState, round: &RoundResult) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    writeln!(
        w,
        "market_id,row,price,quantity,producer,buyer,transport_cost_paid"
    )
    .map_err(io)?;

    for (market, session) in world.markets.iter().zip(&round.sessions) {
        let id = &market.id;
        match session {
            SessionOutcome::Skipped { .. } => {
                writeln!(w, "{id},skipped,,,,,").map_err(io)?;
            }
            SessionOutcome::Cleared {
                price,
                quantity,
                deals,
            } => {
                writeln!(w, "{id},market,{price},{quantity},,,").map_err(io)?;
                for d in deals {
                    writeln!(
                        w,
                        "{id},deal,{},{},{},{},{}",
                        d.price,
                        d.quantity,
                        world.regions[d.producer].id,
                        world.regions[d.buyer].id,
                        d.transport_cost_paid,
                    )
                    .map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}
