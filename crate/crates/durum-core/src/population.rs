//! Farm microdata ingestion, clustering into production-system types, and
//! synthesis of a national-scale heterogeneous farm population.
//!
//! Clustering is seeded k-means (k-means++ initialization) over the eight
//! z-standardized numeric survey variables. Each cluster then gets fitted
//! per-variable sampling distributions: log-normal for area, zero-truncated
//! normal for the input intensities. Synthesis apportions the target count
//! across clusters by largest remainder and samples every variable
//! independently from its cluster's fitted distribution.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Number of numeric clustering variables on a [`FarmRecord`].
pub const NUM_VARS: usize = 8;

/// Column names of the numeric clustering variables, in record order.
pub const VAR_NAMES: [&str; NUM_VARS] = [
    "area",
    "tractor_hours_per_ha",
    "fert_n",
    "fert_p",
    "fert_k",
    "herbicide",
    "insecticide",
    "fungicide",
];

/// One row of survey microdata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmRecord {
    pub id: String,
    /// Cultivated area, hectares. Strictly positive.
    pub area: f64,
    /// Hours of tractor work per hectare.
    pub tractor_hours_per_ha: f64,
    /// Fertilizer application, kg/ha.
    pub fert_n: f64,
    pub fert_p: f64,
    pub fert_k: f64,
    /// Pesticide usage, kg active ingredient per hectare.
    pub herbicide: f64,
    pub insecticide: f64,
    pub fungicide: f64,
    pub region: String,
}

impl FarmRecord {
    /// The numeric clustering variables in [`VAR_NAMES`] order.
    pub fn vars(&self) -> [f64; NUM_VARS] {
        [
            self.area,
            self.tractor_hours_per_ha,
            self.fert_n,
            self.fert_p,
            self.fert_k,
            self.herbicide,
            self.insecticide,
            self.fungicide,
        ]
    }

    fn validate(&self) -> std::result::Result<(), (String, String)> {
        for (name, v) in VAR_NAMES.iter().zip(self.vars()) {
            if !v.is_finite() {
                return Err((name.to_string(), format!("not finite: {v}")));
            }
            if v < 0.0 {
                return Err((name.to_string(), format!("negative: {v}")));
            }
        }
        if self.area <= 0.0 {
            return Err(("area".into(), format!("must be > 0, got {}", self.area)));
        }
        Ok(())
    }
}

/// Sampling distribution fitted to one variable of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VariableDist {
    /// ln X ~ Normal(mu_log, sigma_log). Used for strictly-positive area.
    LogNormal { mu_log: f64, sigma_log: f64 },
    /// Normal(loc, scale) truncated below at zero.
    TruncNormal { loc: f64, scale: f64 },
}

impl VariableDist {
    /// Theoretical mean of the fitted distribution (accounting for
    /// truncation), used by sampling-fidelity checks.
    pub fn mean(&self) -> f64 {
        match *self {
            VariableDist::LogNormal { mu_log, sigma_log } => {
                (mu_log + 0.5 * sigma_log * sigma_log).exp()
            }
            VariableDist::TruncNormal { loc, scale } => {
                if scale == 0.0 {
                    return loc.max(0.0);
                }
                let alpha = loc / scale;
                loc + scale * normal_pdf(alpha) / normal_cdf(alpha)
            }
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            VariableDist::LogNormal { sigma_log, .. } => sigma_log,
            VariableDist::TruncNormal { scale, .. } => scale,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            VariableDist::LogNormal { mu_log, sigma_log } => {
                if sigma_log == 0.0 {
                    return mu_log.exp();
                }
                let n = Normal::new(mu_log, sigma_log).expect("finite params");
                n.sample(rng).exp()
            }
            VariableDist::TruncNormal { loc, scale } => {
                if scale == 0.0 {
                    return loc.max(0.0);
                }
                let n = Normal::new(loc, scale).expect("finite params");
                // Rejection sampling; fitted loc >= 0, so acceptance >= 1/2.
                for _ in 0..10_000 {
                    let v = n.sample(rng);
                    if v >= 0.0 {
                        return v;
                    }
                }
                0.0
            }
        }
    }
}

fn normal_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf approximation
/// (|error| <= 1.5e-7, plenty for fidelity checks).
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

/// One production-system type found by clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub cluster_id: usize,
    /// Fraction of the sample assigned to this cluster, in [0, 1].
    pub weight: f64,
    /// Fitted sampling distribution per variable, in [`VAR_NAMES`] order.
    pub dists: Vec<VariableDist>,
    /// Cluster center in standardized space.
    pub centroid: Vec<f64>,
    /// Raw-space mean of each variable over members.
    pub raw_means: Vec<f64>,
    /// Most frequent region label among members (ties: lexicographic).
    pub modal_region: String,
    /// Member count in the clustered sample.
    pub member_count: usize,
}

impl ClusterSpec {
    pub fn validate(specs: &[ClusterSpec]) -> Result<()> {
        let total: f64 = specs.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Population(format!(
                "cluster weights sum to {total}, expected 1"
            )));
        }
        for s in specs {
            if s.dists.iter().any(|d| d.scale() < 0.0) {
                return Err(Error::Population(format!(
                    "cluster {} has a negative scale parameter",
                    s.cluster_id
                )));
            }
        }
        Ok(())
    }
}

/// A synthesized national population: cluster-annotated records.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    pub farms: Vec<AssignedRecord>,
    pub target_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignedRecord {
    pub record: FarmRecord,
    pub cluster_id: usize,
}

/// Load farm microdata from CSV. Any malformed row, or a row violating the
/// record invariants, fails the whole load with its line number and field.
pub fn load_farm_records(path: &Path) -> Result<Vec<FarmRecord>> {
    const COLUMNS: [&str; 10] = [
        "id",
        "area",
        "tractor_hours_per_ha",
        "fert_n",
        "fert_p",
        "fert_k",
        "herbicide",
        "insecticide",
        "fungicide",
        "region",
    ];
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::BadFile {
                path: path.into(),
                msg: format!("{other:?}"),
            },
        })?;

    let mut records = Vec::new();
    for row in reader.deserialize::<FarmRecord>() {
        let record = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            let field = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err
                    .field()
                    .and_then(|i| COLUMNS.get(i as usize))
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "<row>".into()),
                _ => "<row>".into(),
            };
            Error::MalformedRow {
                path: path.into(),
                line,
                field,
                msg: e.to_string(),
            }
        })?;
        if let Err((field, msg)) = record.validate() {
            return Err(Error::MalformedRow {
                path: path.into(),
                line: records.len() as u64 + 2, // header is line 1
                field,
                msg,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Write a synthetic population using the microdata schema plus a final
/// `cluster_id` column.
pub fn write_population(path: &Path, pop: &SyntheticPopulation) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let header = VAR_NAMES.join(",");
    writeln!(w, "id,{header},region,cluster_id").map_err(|e| Error::io(path, e))?;
    for farm in &pop.farms {
        let r = &farm.record;
        let vals: Vec<String> = r.vars().iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{},{},{}", r.id, vals.join(","), r.region, farm.cluster_id)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load a previously written population (microdata schema + `cluster_id`).
pub fn load_population(path: &Path) -> Result<SyntheticPopulation> {
    #[derive(Deserialize)]
    struct Row {
        #[serde(flatten)]
        record: FarmRecord,
        cluster_id: usize,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::BadFile {
            path: path.into(),
            msg: e.to_string(),
        })?;
    let mut farms = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::MalformedRow {
            path: path.into(),
            line: i as u64 + 2,
            field: "<row>".into(),
            msg: e.to_string(),
        })?;
        if let Err((field, msg)) = row.record.validate() {
            return Err(Error::MalformedRow {
                path: path.into(),
                line: i as u64 + 2,
                field,
                msg,
            });
        }
        farms.push(AssignedRecord {
            record: row.record,
            cluster_id: row.cluster_id,
        });
    }
    let target_size = farms.len();
    Ok(SyntheticPopulation { farms, target_size })
}

/// Per-variable mean and standard deviation of a record set, with
/// zero-variance divisors clamped to 1.
fn standardization(records: &[FarmRecord]) -> ([f64; NUM_VARS], [f64; NUM_VARS]) {
    let n = records.len() as f64;
    let mut means = [0.0; NUM_VARS];
    for r in records {
        for (m, v) in means.iter_mut().zip(r.vars()) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = [0.0; NUM_VARS];
    for r in records {
        for (s, (v, m)) in stds.iter_mut().zip(r.vars().iter().zip(&means)) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    (means, stds)
}

fn standardize(r: &FarmRecord, means: &[f64; NUM_VARS], stds: &[f64; NUM_VARS]) -> [f64; NUM_VARS] {
    let mut out = r.vars();
    for (v, (m, s)) in out.iter_mut().zip(means.iter().zip(stds)) {
        *v = (*v - m) / s;
    }
    out
}

/// Drop records whose standardized value exceeds the threshold in any
/// clustering variable. The drop rule is `|z| >= z_threshold` (population
/// standard deviation), so a lone extreme point among n records, which
/// standardizes to exactly sqrt(n-1), is removed.
pub fn remove_outliers(records: &[FarmRecord], z_threshold: f64) -> Result<Vec<FarmRecord>> {
    if records.is_empty() {
        return Err(Error::Population("no records to filter".into()));
    }
    if !(z_threshold > 0.0) {
        return Err(Error::Population(format!(
            "z_threshold must be > 0, got {z_threshold}"
        )));
    }
    let (means, stds) = standardization(records);
    let kept: Vec<FarmRecord> = records
        .iter()
        .filter(|r| {
            standardize(r, &means, &stds)
                .iter()
                .all(|z| z.abs() < z_threshold)
        })
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::Population(format!(
            "z_threshold {z_threshold} removed every record"
        )));
    }
    Ok(kept)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means over the standardized clustering variables.
///
/// k-means++ initialization, Lloyd iterations capped at 300, convergence
/// when the largest centroid shift drops below 1e-6 in standardized space.
/// An emptied cluster is re-seeded from the point farthest from its
/// assigned centroid.
pub fn cluster(records: &[FarmRecord], k: usize, seed: u64) -> Result<Vec<ClusterSpec>> {
    if k == 0 {
        return Err(Error::Population("k must be >= 1".into()));
    }
    if records.len() < k {
        return Err(Error::Population(format!(
            "k = {k} exceeds record count {}",
            records.len()
        )));
    }
    let (means, stds) = standardization(records);
    let points: Vec<[f64; NUM_VARS]> = records
        .iter()
        .map(|r| standardize(r, &means, &stds))
        .collect();

    let mut rng = stream_rng(seed, Stream::ClusterInit, 0, 0);
    let mut centroids = kmeans_pp_init(&points, k, &mut rng);

    let mut assignment = vec![0usize; points.len()];
    for _ in 0..300 {
        assign(&points, &centroids, &mut assignment);

        let mut counts = vec![0usize; k];
        let mut sums = vec![[0.0; NUM_VARS]; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        // Re-seed any emptied cluster from the point farthest from its
        // assigned centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = nearest(&points[a], &centroids).1;
                        let db = nearest(&points[b], &centroids).1;
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[c] = points[far];
                assign(&points, &centroids, &mut assignment);
                counts = vec![0; k];
                sums = vec![[0.0; NUM_VARS]; k];
                for (p, &cc) in points.iter().zip(&assignment) {
                    counts[cc] += 1;
                    for (s, v) in sums[cc].iter_mut().zip(p) {
                        *s += v;
                    }
                }
            }
        }

        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // Duplicated points can leave a cluster empty even after
                // re-seeding; keep its previous centroid.
                continue;
            }
            let mut new_c = sums[c];
            for v in &mut new_c {
                *v /= counts[c] as f64;
            }
            shift = shift.max(dist2(&centroids[c], &new_c).sqrt());
            centroids[c] = new_c;
        }
        if shift < 1e-6 {
            break;
        }
    }
    assign(&points, &centroids, &mut assignment);

    // Fit per-cluster specs. A cluster can stay empty despite re-seeding
    // when the data has fewer distinct points than k; such clusters are
    // dropped rather than returned with undefined fits.
    let mut specs = Vec::with_capacity(k);
    for (c, centroid) in centroids.iter().enumerate() {
        let members: Vec<&FarmRecord> = records
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == c)
            .map(|(r, _)| r)
            .collect();
        let m = members.len();
        if m == 0 {
            continue;
        }
        let mut dists = Vec::with_capacity(NUM_VARS);
        let mut raw_means = Vec::with_capacity(NUM_VARS);
        for (vi, name) in VAR_NAMES.iter().enumerate() {
            let vals: Vec<f64> = members.iter().map(|r| r.vars()[vi]).collect();
            let mean = vals.iter().sum::<f64>() / m as f64;
            raw_means.push(mean);
            // Bit-identical members fit an exactly degenerate distribution,
            // avoiding float dust in the variance.
            let degenerate = vals.iter().all(|v| *v == vals[0]);
            if *name == "area" {
                let logs: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
                let mu = logs.iter().sum::<f64>() / m as f64;
                let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / m as f64;
                dists.push(VariableDist::LogNormal {
                    mu_log: if degenerate { vals[0].ln() } else { mu },
                    sigma_log: if degenerate { 0.0 } else { var.sqrt() },
                });
            } else if degenerate {
                dists.push(VariableDist::TruncNormal {
                    loc: vals[0],
                    scale: 0.0,
                });
            } else {
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                dists.push(VariableDist::TruncNormal {
                    loc: mean,
                    scale: var.sqrt(),
                });
            }
        }
        let mut region_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &members {
            *region_counts.entry(r.region.as_str()).or_default() += 1;
        }
        let modal_region = region_counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(r, _)| r.to_string())
            .unwrap_or_default();

        specs.push(ClusterSpec {
            cluster_id: c,
            weight: m as f64 / records.len() as f64,
            dists,
            centroid: centroid.to_vec(),
            raw_means,
            modal_region,
            member_count: m,
        });
    }
    // Sequential ids after any drops.
    for (i, spec) in specs.iter_mut().enumerate() {
        spec.cluster_id = i;
    }
    ClusterSpec::validate(&specs)?;
    Ok(specs)
}

/// Index and squared distance of the centroid nearest to `p`.
/// Ties break toward the lower centroid index.
fn nearest(p: &[f64; NUM_VARS], centroids: &[[f64; NUM_VARS]]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

fn assign(points: &[[f64; NUM_VARS]], centroids: &[[f64; NUM_VARS]], out: &mut [usize]) {
    for (slot, p) in out.iter_mut().zip(points) {
        *slot = nearest(p, centroids).0;
    }
}

fn kmeans_pp_init(
    points: &[[f64; NUM_VARS]],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<[f64; NUM_VARS]> {
    let mut centroids = Vec::with_capacity(k);
    let first = rng.random_range(0..points.len());
    centroids.push(points[first]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a centroid; pick uniformly.
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        };
        centroids.push(points[next]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// Largest-remainder apportionment of `target` across `weights`.
/// Counts sum to `target` exactly; remainder ties break toward lower index.
pub fn apportion(weights: &[f64], target: usize) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * target as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..target.saturating_sub(assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Sample a synthetic population of exactly `target_size` farms from the
/// fitted cluster specs. Deterministic for a given seed.
pub fn synthesize_population(
    specs: &[ClusterSpec],
    target_size: usize,
    seed: u64,
) -> Result<SyntheticPopulation> {
    if specs.is_empty() {
        return Err(Error::Population("no cluster specs".into()));
    }
    if target_size == 0 {
        return Err(Error::Population("target_size must be >= 1".into()));
    }
    ClusterSpec::validate(specs)?;

    let weights: Vec<f64> = specs.iter().map(|s| s.weight).collect();
    let counts = apportion(&weights, target_size);

    let mut farms = Vec::with_capacity(target_size);
    let mut rng = stream_rng(seed, Stream::Synthesis, 0, 0);
    let mut seq = 0usize;
    for (spec, &count) in specs.iter().zip(&counts) {
        for _ in 0..count {
            seq += 1;
            let mut vals = [0.0; NUM_VARS];
            for (v, d) in vals.iter_mut().zip(&spec.dists) {
                *v = d.sample(&mut rng);
            }
            farms.push(AssignedRecord {
                record: FarmRecord {
                    id: format!("syn-{seq:06}"),
                    area: vals[0],
                    tractor_hours_per_ha: vals[1],
                    fert_n: vals[2],
                    fert_p: vals[3],
                    fert_k: vals[4],
                    herbicide: vals[5],
                    insecticide: vals[6],
                    fungicide: vals[7],
                    region: spec.modal_region.clone(),
                },
                cluster_id: spec.cluster_id,
            });
        }
    }
    debug_assert_eq!(farms.len(), target_size);
    Ok(SyntheticPopulation {
        farms,
        target_size,
    })
}
