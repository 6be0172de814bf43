//! Life-cycle impact pipeline: realized input use becomes a physical flow
//! inventory, then midpoint and endpoint indicator scores via linear
//! characterization, aggregated to national level in fixed farm order.
//!
//! Characterization factors are data, not code. The bundled matrices are
//! small illustrative values; user-supplied CSV matrices in the same format
//! are accepted anywhere a matrix is taken.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agronomy::{Decision, Farm, Outcome, StressKind};
use crate::error::{Error, Result};

/// Physical flows tracked per farm, in fixed order.
pub const FLOW_NAMES: [&str; 8] = [
    "diesel_l",
    "fert_n_kg",
    "fert_p_kg",
    "fert_k_kg",
    "herbicide_kg",
    "insecticide_kg",
    "fungicide_kg",
    "machinery_h",
];

pub const NUM_FLOWS: usize = FLOW_NAMES.len();

/// Endpoint indicator names, in fixed order.
pub const ENDPOINT_NAMES: [&str; 3] = ["daly", "species_yr", "cost"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalUnit {
    PerHectare,
    PerTonne,
}

/// Per-farm physical flow vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Inventory {
    pub farm_id: u64,
    pub unit: FunctionalUnit,
    /// Flow amounts aligned with [`FLOW_NAMES`].
    pub flows: [f64; NUM_FLOWS],
}

impl Inventory {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in FLOW_NAMES.iter().zip(&self.flows) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Lca(format!(
                    "farm {}: flow {name} is {v}",
                    self.farm_id
                )));
            }
        }
        Ok(())
    }
}

/// Linear map from flows to midpoint categories and on to endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterizationMatrix {
    /// Midpoint category names (columns of `midpoint`).
    pub categories: Vec<String>,
    /// `midpoint[f][c]`: category `c` units per unit of flow `f`.
    pub midpoint: Vec<Vec<f64>>,
    /// `endpoint[c][e]`: endpoint `e` units per unit of category `c`,
    /// endpoints ordered as [`ENDPOINT_NAMES`].
    pub endpoint: Vec<[f64; 3]>,
    /// Free-text metadata (e.g. the assessment perspective).
    pub perspective: Option<String>,
}

impl CharacterizationMatrix {
    /// The bundled illustrative matrix.
    pub fn builtin() -> CharacterizationMatrix {
        let midpoint_csv = include_str!("../fixtures/midpoint.csv");
        let endpoint_csv = include_str!("../fixtures/endpoint.csv");
        Self::parse(midpoint_csv, endpoint_csv).expect("bundled matrix parses")
    }

    /// Load the matrix pair from CSV files.
    pub fn load(midpoint_path: &Path, endpoint_path: &Path) -> Result<CharacterizationMatrix> {
        let mid = std::fs::read_to_string(midpoint_path)
            .map_err(|e| Error::io(midpoint_path, e))?;
        let end = std::fs::read_to_string(endpoint_path)
            .map_err(|e| Error::io(endpoint_path, e))?;
        Self::parse(&mid, &end)
    }

    /// Parse the matrix pair. `#` lines are comments; a
    /// `# perspective: ...` comment is kept as metadata.
    pub fn parse(midpoint_csv: &str, endpoint_csv: &str) -> Result<CharacterizationMatrix> {
        let mut perspective = None;
        let strip = |text: &str, perspective: &mut Option<String>| -> String {
            text.lines()
                .filter(|l| {
                    if let Some(rest) = l.strip_prefix('#') {
                        if let Some(p) = rest.trim().strip_prefix("perspective:") {
                            *perspective = Some(p.trim().to_string());
                        }
                        false
                    } else {
                        !l.trim().is_empty()
                    }
                })
                .collect::<Vec<_>>()
                .join("\n")
        };

        let mid_text = strip(midpoint_csv, &mut perspective);
        let mut mid_lines = mid_text.lines();
        let header = mid_lines
            .next()
            .ok_or_else(|| Error::Lca("midpoint matrix is empty".into()))?;
        let categories: Vec<String> = header
            .split(',')
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        if categories.is_empty() {
            return Err(Error::Lca("midpoint matrix has no categories".into()));
        }

        let mut midpoint = vec![vec![0.0; categories.len()]; NUM_FLOWS];
        let mut seen = [false; NUM_FLOWS];
        for line in mid_lines {
            let mut parts = line.split(',');
            let flow = parts.next().unwrap_or("").trim();
            let fi = FLOW_NAMES
                .iter()
                .position(|f| *f == flow)
                .ok_or_else(|| Error::Lca(format!("unknown flow name `{flow}`")))?;
            seen[fi] = true;
            let values: Vec<f64> = parts
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Lca(format!("flow {flow}: bad factor `{v}`: {e}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != categories.len() {
                return Err(Error::Lca(format!(
                    "flow {flow}: {} factors for {} categories",
                    values.len(),
                    categories.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Lca(format!("flow {flow}: non-finite factor")));
            }
            midpoint[fi] = values;
        }
        if let Some(missing) = FLOW_NAMES.iter().zip(&seen).find(|(_, s)| !**s) {
            return Err(Error::Lca(format!(
                "midpoint matrix missing flow `{}`",
                missing.0
            )));
        }

        let end_text = strip(endpoint_csv, &mut perspective);
        let mut end_lines = end_text.lines();
        end_lines
            .next()
            .ok_or_else(|| Error::Lca("endpoint matrix is empty".into()))?;
        let mut endpoint = vec![[0.0; 3]; categories.len()];
        let mut seen_cat = vec![false; categories.len()];
        for line in end_lines {
            let mut parts = line.split(',');
            let cat = parts.next().unwrap_or("").trim();
            let ci = categories
                .iter()
                .position(|c| c == cat)
                .ok_or_else(|| Error::Lca(format!("unknown midpoint category `{cat}`")))?;
            seen_cat[ci] = true;
            let values: Vec<f64> = parts
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Lca(format!("category {cat}: bad factor `{v}`: {e}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != 3 {
                return Err(Error::Lca(format!(
                    "category {cat}: expected 3 endpoint factors, got {}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Lca(format!("category {cat}: non-finite factor")));
            }
            endpoint[ci] = [values[0], values[1], values[2]];
        }
        if let Some(i) = seen_cat.iter().position(|s| !s) {
            return Err(Error::Lca(format!(
                "endpoint matrix missing category `{}`",
                categories[i]
            )));
        }

        Ok(CharacterizationMatrix {
            categories,
            midpoint,
            endpoint,
            perspective,
        })
    }
}

/// Midpoint and endpoint scores for one farm (or the nation).
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactResult {
    pub farm_id: u64,
    /// Scores aligned with the matrix's category list.
    pub midpoints: Vec<f64>,
    /// [DALY, species·yr, cost], aligned with [`ENDPOINT_NAMES`].
    pub endpoints: [f64; 3],
}

/// Map realized input use to the per-hectare physical flow vector.
/// Per-tonne inventories divide by actual yield and require it positive.
pub fn build_inventory(
    farm: &Farm,
    decision: &Decision,
    outcome: &Outcome,
    liters_per_hour: f64,
    unit: FunctionalUnit,
) -> Result<Inventory> {
    let mut per_kind = [0.0f64; 4];
    for (f, &x) in farm.stress_factors.iter().zip(&decision.inputs) {
        per_kind[f.kind.index()] += x;
    }
    let nutrition = per_kind[StressKind::Nutrition.index()];
    let mut flows = [
        farm.tractor_hours_per_ha * liters_per_hour,
        nutrition * farm.npk_shares[0],
        nutrition * farm.npk_shares[1],
        nutrition * farm.npk_shares[2],
        per_kind[StressKind::Weeds.index()],
        per_kind[StressKind::Pests.index()],
        per_kind[StressKind::Fungi.index()],
        farm.tractor_hours_per_ha,
    ];
    if unit == FunctionalUnit::PerTonne {
        if !(outcome.actual_yield > 0.0) {
            return Err(Error::Lca(format!(
                "farm {}: per-tonne inventory with zero yield",
                farm.id
            )));
        }
        for f in &mut flows {
            *f /= outcome.actual_yield;
        }
    }
    let inv = Inventory {
        farm_id: farm.id,
        unit,
        flows,
    };
    inv.validate()?;
    Ok(inv)
}

/// Characterize an inventory: midpoints = flows x midpoint matrix,
/// endpoints = midpoints x endpoint matrix. Pure matrix-vector products.
pub fn characterize(inv: &Inventory, matrix: &CharacterizationMatrix) -> Result<ImpactResult> {
    inv.validate()?;
    let ncat = matrix.categories.len();
    if matrix.midpoint.len() != NUM_FLOWS || matrix.endpoint.len() != ncat {
        return Err(Error::Lca(format!(
            "matrix dimensions {}x{} / {} inconsistent with {} flows",
            matrix.midpoint.len(),
            ncat,
            matrix.endpoint.len(),
            NUM_FLOWS
        )));
    }
    let mut midpoints = vec![0.0; ncat];
    for (row, flow) in matrix.midpoint.iter().zip(&inv.flows) {
        for (m, factor) in midpoints.iter_mut().zip(row) {
            *m += flow * factor;
        }
    }
    let mut endpoints = [0.0; 3];
    for (row, m) in matrix.endpoint.iter().zip(&midpoints) {
        for (e, factor) in endpoints.iter_mut().zip(row) {
            *e += m * factor;
        }
    }
    Ok(ImpactResult {
        farm_id: inv.farm_id,
        midpoints,
        endpoints,
    })
}

/// National aggregate: sum of per-hectare impacts times farm area, reduced
/// in ascending farm-id order so the result is independent of how farms
/// were partitioned across workers. Also reports per-tonne intensities when
/// national production is positive.
pub struct NationalImpact {
    pub totals: ImpactResult,
    /// Endpoint totals divided by national production (t), when positive.
    pub per_tonne: Option<[f64; 3]>,
}

pub fn aggregate_national(
    results: &[(u64, f64, ImpactResult)],
    national_production: f64,
) -> Result<NationalImpact> {
    if results.is_empty() {
        return Err(Error::Lca("no farm results to aggregate".into()));
    }
    let ncat = results[0].2.midpoints.len();
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by_key(|&i| results[i].0);

    let mut midpoints = vec![0.0; ncat];
    let mut endpoints = [0.0; 3];
    for &i in &order {
        let (_, area, result) = &results[i];
        if result.midpoints.len() != ncat {
            return Err(Error::Lca("inconsistent category counts".into()));
        }
        for (t, m) in midpoints.iter_mut().zip(&result.midpoints) {
            *t += m * area;
        }
        for (t, e) in endpoints.iter_mut().zip(&result.endpoints) {
            *t += e * area;
        }
    }
    let per_tonne = if national_production > 0.0 {
        Some([
            endpoints[0] / national_production,
            endpoints[1] / national_production,
            endpoints[2] / national_production,
        ])
    } else {
        None
    };
    Ok(NationalImpact {
        totals: ImpactResult {
            farm_id: 0,
            midpoints,
            endpoints,
        },
        per_tonne,
    })
}
