//! Season-aligned comparison of two scenario output directories.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};

struct SeasonsTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn load_seasons(dir: &Path) -> anyhow::Result<SeasonsTable> {
    let path = dir.join("seasons.csv");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("seasons.csv is empty")?;
    let columns: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let season_col = columns
        .iter()
        .position(|c| c == "season")
        .context("seasons.csv has no season column")?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(|s| s.to_string()).collect();
        if row.len() != columns.len() {
            bail!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 2,
                row.len(),
                columns.len()
            );
        }
        let season: usize = row[season_col]
            .parse()
            .with_context(|| format!("{}: bad season `{}`", path.display(), row[season_col]))?;
        if season != i {
            bail!(
                "{}: season column out of order: expected {} at row {}, found {}",
                path.display(),
                i,
                i + 2,
                season
            );
        }
        rows.push(row);
    }
    Ok(SeasonsTable { columns, rows })
}

pub fn diff(baseline: &Path, scenario: &Path, out_dir: &Path) -> anyhow::Result<()> {
    let base = load_seasons(baseline)?;
    let scen = load_seasons(scenario)?;
    if base.rows.len() != scen.rows.len() {
        bail!(
            "season counts differ: baseline has {}, scenario has {}",
            base.rows.len(),
            scen.rows.len()
        );
    }

    // Numeric columns present in both files.
    let is_numeric = |table: &SeasonsTable, idx: usize| {
        table
            .rows
            .iter()
            .all(|r| r[idx].is_empty() || r[idx].parse::<f64>().is_ok())
    };
    let mut compared: Vec<(String, usize, usize)> = Vec::new();
    for (bi, name) in base.columns.iter().enumerate() {
        if name == "season" {
            continue;
        }
        if let Some(si) = scen.columns.iter().position(|c| c == name) {
            if is_numeric(&base, bi) && is_numeric(&scen, si) {
                compared.push((name.clone(), bi, si));
            }
        }
    }
    if compared.is_empty() {
        bail!("no comparable numeric columns");
    }

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let diff_path = out_dir.join("diff.csv");
    let mut out = std::io::BufWriter::new(
        fs::File::create(&diff_path).with_context(|| format!("writing {}", diff_path.display()))?,
    );
    write!(out, "season")?;
    for (name, _, _) in &compared {
        write!(out, ",{name}_baseline,{name}_scenario,{name}_delta,{name}_pct")?;
    }
    writeln!(out)?;

    let headline = [
        "italy_price",
        "national_production_t",
        "end_daly",
        "end_species_yr",
        "end_cost",
    ];
    println!(
        "{:>6} {:>24} {:>14} {:>14} {:>10}",
        "season", "column", "baseline", "delta", "pct"
    );
    for (season, (brow, srow)) in base.rows.iter().zip(&scen.rows).enumerate() {
        write!(out, "{season}")?;
        for (name, bi, si) in &compared {
            let (b, s) = (&brow[*bi], &srow[*si]);
            if b.is_empty() || s.is_empty() {
                write!(out, ",{b},{s},,")?;
                continue;
            }
            let bv: f64 = b.parse().unwrap();
            let sv: f64 = s.parse().unwrap();
            let delta = sv - bv;
            let pct = if bv != 0.0 {
                format!("{}", 100.0 * delta / bv)
            } else {
                String::new()
            };
            write!(out, ",{bv},{sv},{delta},{pct}")?;
            if headline.contains(&name.as_str()) {
                println!(
                    "{:>6} {:>24} {:>14.4} {:>+14.4} {:>9.3}%",
                    season,
                    name,
                    bv,
                    delta,
                    if bv != 0.0 { 100.0 * delta / bv } else { f64::NAN }
                );
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    println!("wrote {}", diff_path.display());
    Ok(())
}
