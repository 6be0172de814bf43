//! Acceptance suite: every release criterion as one test with its
//! tolerance pinned in code. Run with `--nocapture` for the per-criterion
//! PASS lines and timing reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use durum_core::agronomy::{
    optimize_multi, optimize_single, Behavior, DecisionEnv, Farm, StressFactor, StressKind,
};
use durum_core::config::{
    MarketConfig, MemberSpec, RegionConfig, ScenarioConfig, TransportConfig, WorldConfig,
};
use durum_core::lca::{characterize, CharacterizationMatrix, FunctionalUnit, Inventory, NUM_FLOWS};
use durum_core::market::{self, SessionOutcome};
use durum_core::orchestrator;
use durum_core::population;

fn records_fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../durum-core/fixtures/microdata_1800.csv")
        .display()
        .to_string()
}

fn single_factor_farm(ybar: f64, s: f64, lambda: f64, price: f64) -> Farm {
    Farm {
        id: 0,
        area: 1.0,
        potential_yield: ybar,
        stress_factors: vec![StressFactor {
            kind: StressKind::Nutrition,
            loss_share: s,
            response_rate: lambda,
            input_price: price,
        }],
        behavior: Behavior::Optimizer,
        last_inputs: vec![0.0],
        adopted_schemes: Default::default(),
        cluster_id: 0,
        tractor_hours_per_ha: 8.0,
        npk_shares: [0.6, 0.25, 0.15],
    }
}

/// Criterion 1: the numerical optimizer reproduces the closed-form optimum
/// on 1,000 randomized interior single-factor farms to 1e-6 relative, and
/// corner cases clamp to x = 0 with continuous profit. Runtime < 5 s.
#[test]
fn criterion_1_closed_form_optimum_reproduction() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut interior = 0;
    while interior < 1000 {
        let ybar = rng.random_range(2.0..9.0);
        let s = rng.random_range(0.05..0.6);
        let lambda = rng.random_range(0.01..2.0);
        let pw = rng.random_range(100.0..400.0);
        let corner = pw * lambda * s * ybar;
        let px = rng.random_range(0.2..60.0);
        if px >= 0.95 * corner {
            continue; // keep a safety margin from the corner
        }
        interior += 1;
        let farm = single_factor_farm(ybar, s, lambda, px);

        let y_closed = ybar - px / (pw * lambda);
        let x_closed = -(px / corner).ln() / lambda;

        let d = optimize_multi(&farm, &DecisionEnv::raw(&farm, pw)).unwrap();
        assert!(d.converged);
        assert!(
            (d.target_yield - y_closed).abs() <= 1e-6 * y_closed.abs(),
            "y*: {} vs closed form {y_closed}",
            d.target_yield
        );
        assert!(
            (d.inputs[0] - x_closed).abs() <= 1e-6 * x_closed.abs().max(1e-12),
            "x*: {} vs closed form {x_closed}",
            d.inputs[0]
        );
    }

    // Corner clamping and profit continuity across the corner price.
    for _ in 0..100 {
        let ybar = rng.random_range(2.0..9.0);
        let s = rng.random_range(0.05..0.6);
        let lambda = rng.random_range(0.01..2.0);
        let pw = rng.random_range(100.0..400.0);
        let corner = pw * lambda * s * ybar;

        let above = single_factor_farm(ybar, s, lambda, corner * rng.random_range(1.0..10.0));
        let d_above = optimize_single(&above, pw).unwrap();
        assert_eq!(d_above.inputs[0], 0.0);
        assert!((d_above.target_yield - ybar * (1.0 - s)).abs() <= 1e-12 * ybar);

        let at = single_factor_farm(ybar, s, lambda, corner);
        let just_below = single_factor_farm(ybar, s, lambda, corner * (1.0 - 1e-9));
        let p_at = optimize_single(&at, pw).unwrap().expected_profit;
        let p_below = optimize_single(&just_below, pw).unwrap().expected_profit;
        assert!(
            (p_at - p_below).abs() <= 1e-6 * p_at.abs(),
            "profit discontinuity at the corner: {p_at} vs {p_below}"
        );
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion 1 took {elapsed:.2}s (limit 5s)");
    println!("ACCEPTANCE 1 closed-form optimum reproduction: PASS ({elapsed:.2}s)");
}

/// Criterion 2: optimizer profit within 1e-4 relative of an exhaustive
/// 2-D grid search (step 1e-3 per axis) on 50 randomized farms. < 60 s.
#[test]
fn criterion_2_multi_factor_grid_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    const STEP: f64 = 1e-3;
    for trial in 0..50 {
        let ybar: f64 = rng.random_range(3.0..8.0);
        let pw: f64 = rng.random_range(150.0..350.0);
        let s = [rng.random_range(0.1..0.4), rng.random_range(0.1..0.4)];
        let lam = [rng.random_range(0.8..2.0), rng.random_range(0.8..2.0)];
        let p = [rng.random_range(5.0..60.0), rng.random_range(5.0..60.0)];

        let farm = Farm {
            stress_factors: vec![
                StressFactor {
                    kind: StressKind::Nutrition,
                    loss_share: s[0],
                    response_rate: lam[0],
                    input_price: p[0],
                },
                StressFactor {
                    kind: StressKind::Weeds,
                    loss_share: s[1],
                    response_rate: lam[1],
                    input_price: p[1],
                },
            ],
            last_inputs: vec![0.0, 0.0],
            ..single_factor_farm(ybar, 0.3, 1.0, 1.0)
        };
        let d = optimize_multi(&farm, &DecisionEnv::raw(&farm, pw)).unwrap();
        assert!(d.converged);

        // Per-axis grid bound: past the single-factor corner input the
        // response is provably not worth the cost.
        let bound = |i: usize| -> f64 {
            let corner = pw * lam[i] * s[i] * ybar;
            if p[i] >= corner {
                2.0
            } else {
                (corner / p[i]).ln() / lam[i] + 1.0
            }
        };
        let (n1, n2) = (
            (bound(0) / STEP).ceil() as usize,
            (bound(1) / STEP).ceil() as usize,
        );
        let t1: Vec<f64> = (0..=n1)
            .map(|i| 1.0 - s[0] * (-lam[0] * (i as f64 * STEP)).exp())
            .collect();
        let t2: Vec<f64> = (0..=n2)
            .map(|j| 1.0 - s[1] * (-lam[1] * (j as f64 * STEP)).exp())
            .collect();
        let mut grid_best = f64::NEG_INFINITY;
        for (i, a) in t1.iter().enumerate() {
            let base = pw * ybar * a;
            let cost1 = p[0] * (i as f64 * STEP);
            let mut row_best = f64::NEG_INFINITY;
            for (j, b) in t2.iter().enumerate() {
                let v = base * b - p[1] * (j as f64 * STEP);
                if v > row_best {
                    row_best = v;
                }
            }
            let v = row_best - cost1;
            if v > grid_best {
                grid_best = v;
            }
        }
        assert!(
            (d.expected_profit - grid_best).abs() <= 1e-4 * grid_best.abs(),
            "trial {trial}: optimizer {} vs grid {grid_best}",
            d.expected_profit
        );
        assert!(d.expected_profit >= grid_best - 1e-9 * grid_best.abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 2 took {elapsed:.2}s (limit 60s)");
    println!("ACCEPTANCE 2 multi-factor grid-oracle equivalence: PASS ({elapsed:.2}s)");
}

/// Criterion 3: generate-population at the census scale emits exactly
/// 195,735 rows with largest-remainder cluster counts, in < 30 s.
#[test]
fn criterion_3_population_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("pop.csv");
    let start = Instant::now();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_durum"))
        .args([
            "generate-population",
            "--records",
            &records_fixture(),
            "--clusters",
            "6",
            "--size",
            "195735",
            "--seed",
            "42",
            "--out",
        ])
        .arg(&out_csv)
        .output()
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elapsed < 30.0, "criterion 3 took {elapsed:.2}s (limit 30s)");

    let text = fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.ends_with(",cluster_id"));
    let mut total = 0usize;
    let mut per_cluster: BTreeMap<usize, usize> = BTreeMap::new();
    for line in lines {
        total += 1;
        let cluster: usize = line.rsplit(',').next().unwrap().parse().unwrap();
        *per_cluster.entry(cluster).or_default() += 1;
    }
    assert_eq!(total, 195_735, "row count");

    // Independent recomputation of the largest-remainder apportionment.
    let records = population::load_farm_records(Path::new(&records_fixture())).unwrap();
    let kept = population::remove_outliers(&records, 4.0).unwrap();
    let specs = population::cluster(&kept, 6, 42).unwrap();
    let weights: Vec<f64> = specs.iter().map(|s| s.weight).collect();
    let expected = population::apportion(&weights, 195_735);
    for (cluster, count) in expected.iter().enumerate() {
        assert_eq!(
            per_cluster.get(&cluster).copied().unwrap_or(0),
            *count,
            "cluster {cluster} count"
        );
    }
    println!("ACCEPTANCE 3 population scale 195,735: PASS ({elapsed:.2}s)");
}

fn random_world(rng: &mut ChaCha8Rng) -> WorldConfig {
    let n_regions = rng.random_range(2..=8);
    let n_zones = rng.random_range(1..=3);
    let mut regions = Vec::new();
    for i in 0..n_regions {
        let producer = i == 0 || rng.random_bool(0.6);
        let buyer = i == 1 || !producer || rng.random_bool(0.6);
        regions.push(RegionConfig {
            id: format!("r{i}"),
            name: format!("Region {i}"),
            role: match (producer, buyer) {
                (true, true) => "both",
                (true, false) => "producer",
                _ => "buyer",
            }
            .into(),
            base_supply: if producer { rng.random_range(10.0..500.0) } else { 0.0 },
            base_demand: if buyer { rng.random_range(10.0..500.0) } else { 0.0 },
            supply_slope: if producer { rng.random_range(0.0..5.0) } else { 0.0 },
            demand_slope: if buyer { -rng.random_range(0.05..5.0) } else { 0.0 },
            location: rng.random_range(0..n_zones),
            supply_by_season: None,
        });
    }
    let n_markets = rng.random_range(1..=4);
    let mut markets: Vec<MarketConfig> = (0..n_markets)
        .map(|m| MarketConfig {
            id: format!("m{m}"),
            producers: Vec::new(),
            buyers: Vec::new(),
        })
        .collect();
    for r in &regions {
        if r.role == "producer" || r.role == "both" {
            let m = rng.random_range(0..n_markets);
            markets[m].producers.push(MemberSpec::Plain(r.id.clone()));
        }
        if r.base_demand > 0.0 {
            let m = rng.random_range(0..n_markets);
            markets[m].buyers.push(MemberSpec::Plain(r.id.clone()));
        }
    }
    markets.retain(|m| !m.producers.is_empty() && !m.buyers.is_empty());
    if markets.is_empty() {
        markets.push(MarketConfig {
            id: "m0".into(),
            producers: vec![MemberSpec::Plain(regions[0].id.clone())],
            buyers: vec![MemberSpec::Plain(regions[1].id.clone())],
        });
    }
    for r in &regions {
        let is_producer = r.role == "producer" || r.role == "both";
        if is_producer
            && !markets
                .iter()
                .any(|m| m.producers.iter().any(|p| p.region() == r.id))
        {
            markets[0].producers.push(MemberSpec::Plain(r.id.clone()));
        }
    }
    let matrix: Vec<Vec<f64>> = (0..n_zones)
        .map(|i| {
            (0..n_zones)
                .map(|j| if i == j { 0.0 } else { rng.random_range(0.0..20.0) })
                .collect()
        })
        .collect();
    WorldConfig {
        schema_version: 1,
        reference_price: rng.random_range(50.0..400.0),
        italy_region: regions[0].id.clone(),
        italy_market: markets[0].id.clone(),
        italy_price_band: (0.0, 1e9),
        clearing_order: markets.iter().map(|m| m.id.clone()).collect(),
        transport: TransportConfig { matrix },
        region: regions,
        market: markets,
    }
}

/// Criterion 4: 200 randomized linear worlds clear correctly, conserve
/// traded quantity, and respond monotonically to supply expansion.
#[test]
fn criterion_4_market_clearing_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for trial in 0..200 {
        let config = random_world(&mut rng);
        let world = market::build_world(&config).unwrap();
        let mut base_prices = Vec::new();
        for m in &world.markets {
            match market::clear_session(m, &world) {
                SessionOutcome::Cleared {
                    price,
                    quantity,
                    deals,
                } => {
                    assert!(price >= 0.0 && quantity >= 0.0);
                    let (s, d) = market::aggregate_curves(m, &world, price);
                    if quantity > 0.0 && price > 0.0 {
                        assert!(
                            (s - d).abs() <= 1e-6 * quantity,
                            "trial {trial} market {}: |S-D| = {}",
                            m.id,
                            (s - d).abs()
                        );
                    }
                    let mut sum = 0.0f64;
                    let mut comp = 0.0f64;
                    for deal in &deals {
                        assert!(deal.quantity > 0.0 && deal.price >= 0.0);
                        let y = deal.quantity - comp;
                        let t = sum + y;
                        comp = (t - sum) - y;
                        sum = t;
                    }
                    if !deals.is_empty() {
                        assert!(
                            (sum - quantity).abs() <= 1e-6,
                            "trial {trial} market {}: conservation off by {}",
                            m.id,
                            (sum - quantity).abs()
                        );
                    }
                    base_prices.push(price);
                }
                SessionOutcome::Skipped { .. } => base_prices.push(f64::NAN),
            }
        }

        let producers: Vec<usize> = config
            .region
            .iter()
            .enumerate()
            .filter(|(_, r)| r.base_supply > 0.0)
            .map(|(i, _)| i)
            .collect();
        let pick = producers[rng.random_range(0..producers.len())];
        let mut expanded = config.clone();
        expanded.region[pick].base_supply *= 1.5;
        let expanded_world = market::build_world(&expanded).unwrap();
        for (mi, m) in expanded_world.markets.iter().enumerate() {
            let member = config.market[..]
                .iter()
                .find(|mc| mc.id == m.id)
                .unwrap()
                .producers
                .iter()
                .any(|p| p.region() == config.region[pick].id);
            if !member || base_prices[mi].is_nan() {
                continue;
            }
            if let SessionOutcome::Cleared { price, .. } =
                market::clear_session(m, &expanded_world)
            {
                assert!(
                    price <= base_prices[mi] + 1e-9 * base_prices[mi].max(1.0),
                    "trial {trial} market {}: price rose {} -> {price}",
                    m.id,
                    base_prices[mi]
                );
            }
        }
    }
    println!("ACCEPTANCE 4 market clearing correctness (200 worlds): PASS");
}

/// Criterion 5: the bundled baseline world clears with Italy importing
/// 2.5 Mt +/- 10% at reference prices.
#[test]
fn criterion_5_italy_deficit_fixture() {
    let mut world = market::build_world(&WorldConfig::builtin()).unwrap();
    let round = market::run_market_round(&mut world, 3.8e6, 0).unwrap();
    let net = round.net_imports(world.italy_region);
    assert!(
        (2.25e6..=2.75e6).contains(&net),
        "Italy net imports {net} outside 2.5 Mt +/- 10%"
    );
    let price = round.italy_price(&world).unwrap();
    let (lo, hi) = world.italy_price_band;
    assert!((lo..=hi).contains(&price), "price {price} outside [{lo},{hi}]");
    println!("ACCEPTANCE 5 Italy structural deficit fixture: PASS (net {:.3} Mt)", net / 1e6);
}

/// Criterion 6: linearity and additivity of characterization to 1e-12
/// relative on randomized inventories; zero maps to zero everywhere.
#[test]
fn criterion_6_lca_linearity_additivity() {
    let matrix = CharacterizationMatrix::builtin();
    let zero = Inventory {
        farm_id: 0,
        unit: FunctionalUnit::PerHectare,
        flows: [0.0; NUM_FLOWS],
    };
    let rz = characterize(&zero, &matrix).unwrap();
    assert!(rz.midpoints.iter().all(|&m| m == 0.0));
    assert_eq!(rz.endpoints, [0.0; 3]);

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..500 {
        let fa: [f64; NUM_FLOWS] = std::array::from_fn(|_| rng.random_range(0.0..1e4));
        let fb: [f64; NUM_FLOWS] = std::array::from_fn(|_| rng.random_range(0.0..1e4));
        let alpha: f64 = rng.random_range(0.0..50.0);
        let inv = |flows: [f64; NUM_FLOWS]| Inventory {
            farm_id: 0,
            unit: FunctionalUnit::PerHectare,
            flows,
        };
        let ra = characterize(&inv(fa), &matrix).unwrap();
        let rb = characterize(&inv(fb), &matrix).unwrap();
        let r_scaled =
            characterize(&inv(std::array::from_fn(|i| fa[i] * alpha)), &matrix).unwrap();
        let r_sum = characterize(&inv(std::array::from_fn(|i| fa[i] + fb[i])), &matrix).unwrap();
        for (i, m) in r_scaled.midpoints.iter().enumerate() {
            let expect = ra.midpoints[i] * alpha;
            assert!((m - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
        }
        for i in 0..3 {
            let expect = ra.endpoints[i] * alpha;
            assert!((r_scaled.endpoints[i] - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
            let expect = ra.endpoints[i] + rb.endpoints[i];
            assert!((r_sum.endpoints[i] - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
        }
        for (i, m) in r_sum.midpoints.iter().enumerate() {
            let expect = ra.midpoints[i] + rb.midpoints[i];
            assert!((m - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
        }
    }
    println!("ACCEPTANCE 6 LCA linearity and additivity: PASS");
}

fn write_scenario(dir: &Path, size: usize, seasons: usize, workers: usize, policy: &str) -> PathBuf {
    let body = format!(
        r#"
schema_version = 1
[run]
seasons = {seasons}
seed = 42
workers = {workers}
[population]
source = "generate"
records = "{records}"
clusters = 6
size = {size}
[world]
builtin = "baseline"
{policy}
"#,
        records = records_fixture(),
    );
    let path = dir.join(format!("scenario_w{workers}.toml"));
    fs::write(&path, body).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

/// Criterion 7: a 1,000-farm, 5-season scenario produces byte-identical
/// exports for worker counts 1, 2, 4, 8 under a fixed seed.
#[test]
fn criterion_7_partition_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
    for workers in [1usize, 2, 4, 8] {
        let config_path = write_scenario(dir.path(), 1000, 5, workers, "");
        let config = ScenarioConfig::load(&config_path).unwrap();
        let out_dir = dir.path().join(format!("out_w{workers}"));
        orchestrator::run_scenario(config, &out_dir, |_, _| {}).unwrap();
        let bytes = dir_bytes(&out_dir);
        assert_eq!(bytes.len(), 11, "5 seasons x 2 files + seasons.csv");
        match &reference {
            None => reference = Some(bytes),
            Some(reference) => {
                for ((n1, b1), (n2, b2)) in reference.iter().zip(&bytes) {
                    assert_eq!(n1, n2);
                    assert_eq!(
                        b1, b2,
                        "file {n1} differs between 1 worker and {workers} workers"
                    );
                }
            }
        }
    }
    println!("ACCEPTANCE 7 partition invariance (w = 1,2,4,8): PASS");
}

/// Criterion 8: the full national scale (195,735 farms, 10 seasons)
/// completes with per-season timing reported and no flags raised.
#[test]
fn criterion_8_full_scale_smoke() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let workers = std::thread::available_parallelism()
        .map(|n| n.get().min(8))
        .unwrap_or(2);
    let config_path = write_scenario(
        dir.path(),
        195_735,
        10,
        workers,
        "[output]\nfarm_export_every = 20000\n",
    );
    let config = ScenarioConfig::load(&config_path).unwrap();
    let out_dir = dir.path().join("out");
    let mut timings = Vec::new();
    let results = orchestrator::run_scenario(config, &out_dir, |result, timing| {
        println!(
            "  season {:>2}: {:.2}s farms, {:.4}s reduce, {:.4}s market (price {:.2}, production {:.3} Mt)",
            result.season,
            timing.farm_phase_s,
            timing.reduce_phase_s,
            timing.market_phase_s,
            result.italy_price,
            result.national_production / 1e6,
        );
        timings.push(timing.total_s);
    })
    .unwrap();
    assert_eq!(results.len(), 10);
    for r in &results {
        assert!(!r.price_flagged, "season {}: price fallback used", r.season);
        assert_eq!(r.non_converged, 0, "season {}: optimizer flags", r.season);
        assert!(r.market_prices.iter().all(|(_, p)| p.is_some()));
        assert!(r.national_production > 0.0);
        assert!(r.national_production.is_finite());
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "ACCEPTANCE 8 full-scale smoke (195,735 farms x 10 seasons, {workers} workers): PASS ({elapsed:.1}s)"
    );
}

/// Criterion 9: a fertilizer tax weakly reduces national fertilizer flows
/// and their midpoint impacts every season; an empty policy set reproduces
/// the baseline byte-identically.
#[test]
fn criterion_9_policy_sanity_chain() {
    let dir = tempfile::tempdir().unwrap();

    let base_config = ScenarioConfig::load(&write_scenario(dir.path(), 1000, 5, 2, "")).unwrap();
    let base_dir = dir.path().join("baseline");
    let base = orchestrator::run_scenario(base_config, &base_dir, |_, _| {}).unwrap();

    let tax_policy = r#"
[[policy]]
id = "fert_tax"
kind = "input_tax"
target = "nutrition"
rate = 0.15
"#;
    let tax_path = dir.path().join("tax.toml");
    fs::write(
        &tax_path,
        fs::read_to_string(write_scenario(dir.path(), 1000, 5, 2, tax_policy)).unwrap(),
    )
    .unwrap();
    let tax_config = ScenarioConfig::load(&tax_path).unwrap();
    let tax_dir = dir.path().join("taxed");
    let taxed = orchestrator::run_scenario(tax_config, &tax_dir, |_, _| {}).unwrap();

    // Fertilizer flows (indices 1..4) and their midpoint contributions.
    let matrix = CharacterizationMatrix::builtin();
    let fert_midpoints = |flows: &[f64; NUM_FLOWS]| -> Vec<f64> {
        let mut v = vec![0.0; matrix.categories.len()];
        for (flow, row) in flows.iter().zip(&matrix.midpoint).skip(1).take(3) {
            for (slot, factor) in v.iter_mut().zip(row) {
                *slot += flow * factor;
            }
        }
        v
    };
    for (b, t) in base.iter().zip(&taxed) {
        for flow in 1..4 {
            assert!(
                t.national_flows[flow] <= b.national_flows[flow] + 1e-9,
                "season {}: fertilizer flow {flow} rose under the tax",
                b.season
            );
        }
        let mb = fert_midpoints(&b.national_flows);
        let mt = fert_midpoints(&t.national_flows);
        for (c, (x, y)) in mb.iter().zip(&mt).enumerate() {
            assert!(
                y <= &(x + 1e-9 * x.abs()),
                "season {}: fertilizer midpoint {} rose under the tax",
                b.season,
                matrix.categories[c]
            );
        }
        let total_b: f64 = b.national_flows[1..4].iter().sum();
        let total_t: f64 = t.national_flows[1..4].iter().sum();
        assert!(total_t < total_b, "season {}: the tax did not bite", b.season);
    }

    // Empty policy set == baseline, byte for byte.
    let empty_path = dir.path().join("empty.toml");
    let mut body = fs::read_to_string(write_scenario(dir.path(), 1000, 5, 2, "")).unwrap();
    body.push_str("\npolicy = []\n");
    fs::write(&empty_path, body).unwrap();
    let empty_config = ScenarioConfig::load(&empty_path).unwrap();
    let empty_dir = dir.path().join("empty");
    orchestrator::run_scenario(empty_config, &empty_dir, |_, _| {}).unwrap();
    for ((n1, b1), (n2, b2)) in dir_bytes(&base_dir).iter().zip(dir_bytes(&empty_dir).iter()) {
        assert_eq!(n1, n2);
        assert_eq!(b1, b2, "file {n1} differs between baseline and empty policy set");
    }
    println!("ACCEPTANCE 9 policy sanity chain: PASS");
}
