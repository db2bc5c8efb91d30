//! Panel-data ingestion: long-format outcome and covariate CSVs plus a
//! proximity structure, assembled into a multi-wave estimation problem.
//!
//! Covariates are linearly interpolated over waves within each unit; cells
//! that are still missing afterwards (leading/trailing gaps, fully missing
//! units) are imputed with the overall column mean. Outcome gaps are an
//! error, never imputed.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use netdiff_core::error::{Error, Result};
use netdiff_core::net::{read_network, Network};

/// Source of the proximity matrix.
#[derive(Debug, Clone)]
pub enum ProximitySource {
    /// Edge-list file in the crate's network format.
    EdgeList,
    /// Dense square distance matrix (CSV, one row per unit in unit order);
    /// distances in (0, threshold] become ties.
    DistanceMatrix { threshold: f64 },
}

/// Rectangular panel ready for estimation.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    pub units: Vec<String>,
    pub waves: Vec<i64>,
    /// One binary vector per wave, unit order.
    pub outcomes: Vec<Vec<u8>>,
    /// One covariate matrix per wave, unit order; columns follow
    /// `covariate_names`.
    pub covariates: Vec<DMatrix<f64>>,
    pub covariate_names: Vec<String>,
    pub network: Network,
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rows.push(line.split(',').map(|t| t.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::validation(format!("{}: empty file", path.display())));
    }
    Ok(rows)
}

fn is_missing(token: &str) -> bool {
    token.is_empty() || token == "NA" || token == "na" || token == "NaN"
}

/// Ingest a panel from long-format CSVs.
///
/// `outcome_csv` columns: `unit,wave,outcome` (binary, required everywhere).
/// `covariates_csv` columns: `unit,wave,<name>,...` with missing cells empty
/// or `NA`. Unit order follows first appearance in the outcome file.
pub fn ingest_panel(
    outcome_csv: &Path,
    covariates_csv: &Path,
    proximity_file: &Path,
    source: &ProximitySource,
) -> Result<PanelDataset> {
    let out_rows = read_csv_rows(outcome_csv)?;
    if out_rows[0] != ["unit", "wave", "outcome"] {
        return Err(Error::validation(
            "outcome file must have header `unit,wave,outcome`",
        ));
    }

    let mut units: Vec<String> = Vec::new();
    let mut waves_set: BTreeSet<i64> = BTreeSet::new();
    let mut outcome_cells: Vec<(String, i64, u8)> = Vec::new();
    for row in &out_rows[1..] {
        if row.len() != 3 {
            return Err(Error::validation(format!(
                "outcome row `{}` must have 3 fields",
                row.join(",")
            )));
        }
        let unit = row[0].clone();
        let wave: i64 = row[1]
            .parse()
            .map_err(|_| Error::validation(format!("bad wave `{}`", row[1])))?;
        if is_missing(&row[2]) {
            return Err(Error::validation(format!(
                "missing outcome for unit `{unit}` wave {wave}; outcomes are never imputed"
            )));
        }
        let value: i64 = row[2]
            .parse()
            .map_err(|_| Error::validation(format!("bad outcome `{}`", row[2])))?;
        if value != 0 && value != 1 {
            return Err(Error::validation(format!(
                "outcome for unit `{unit}` wave {wave} must be 0 or 1, got {value}"
            )));
        }
        if !units.contains(&unit) {
            units.push(unit.clone());
        }
        waves_set.insert(wave);
        outcome_cells.push((unit, wave, value as u8));
    }
    let waves: Vec<i64> = waves_set.into_iter().collect();
    let n = units.len();
    let t = waves.len();
    let unit_index = |u: &str| units.iter().position(|x| x == u);
    let wave_index = |w: i64| waves.iter().position(|&x| x == w).unwrap();

    let mut outcomes: Vec<Vec<Option<u8>>> = vec![vec![None; n]; t];
    for (unit, wave, value) in outcome_cells {
        let i = unit_index(&unit).unwrap();
        outcomes[wave_index(wave)][i] = Some(value);
    }
    for (wt, wave) in waves.iter().enumerate() {
        for (i, cell) in outcomes[wt].iter().enumerate() {
            if cell.is_none() {
                return Err(Error::validation(format!(
                    "missing outcome for unit `{}` wave {wave}; outcomes are never imputed",
                    units[i]
                )));
            }
        }
    }
    let outcomes: Vec<Vec<u8>> = outcomes
        .into_iter()
        .map(|w| w.into_iter().map(|c| c.unwrap()).collect())
        .collect();

    // Covariates.
    let cov_rows = read_csv_rows(covariates_csv)?;
    let header = &cov_rows[0];
    if header.len() < 3 || header[0] != "unit" || header[1] != "wave" {
        return Err(Error::validation(
            "covariate file must have header `unit,wave,<name>,...`",
        ));
    }
    let covariate_names: Vec<String> = header[2..].to_vec();
    let k = covariate_names.len();
    let mut cells: Vec<Vec<Vec<Option<f64>>>> = vec![vec![vec![None; t]; n]; k];
    for row in &cov_rows[1..] {
        if row.len() != 2 + k {
            return Err(Error::validation(format!(
                "covariate row `{}` must have {} fields",
                row.join(","),
                2 + k
            )));
        }
        let i = unit_index(&row[0]).ok_or_else(|| {
            Error::validation(format!(
                "covariate unit `{}` does not appear in the outcome file",
                row[0]
            ))
        })?;
        let wave: i64 = row[1]
            .parse()
            .map_err(|_| Error::validation(format!("bad wave `{}`", row[1])))?;
        if !waves.contains(&wave) {
            return Err(Error::validation(format!(
                "covariate wave {wave} does not appear in the outcome file"
            )));
        }
        let wt = wave_index(wave);
        for (c, token) in row[2..].iter().enumerate() {
            if is_missing(token) {
                continue;
            }
            let v: f64 = token
                .parse()
                .map_err(|_| Error::validation(format!("bad covariate value `{token}`")))?;
            cells[c][i][wt] = Some(v);
        }
    }

    // Linear interpolation within unit, then overall-mean imputation.
    for series_by_unit in cells.iter_mut() {
        for series in series_by_unit.iter_mut() {
            interpolate_series(series);
        }
        let observed: Vec<f64> = series_by_unit
            .iter()
            .flatten()
            .filter_map(|c| *c)
            .collect();
        let overall = if observed.is_empty() {
            0.0
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        for series in series_by_unit.iter_mut() {
            for cell in series.iter_mut() {
                if cell.is_none() {
                    *cell = Some(overall);
                }
            }
        }
    }
    let covariates: Vec<DMatrix<f64>> = (0..t)
        .map(|wt| DMatrix::from_fn(n, k, |i, c| cells[c][i][wt].unwrap()))
        .collect();

    // Proximity.
    let network = match source {
        ProximitySource::EdgeList => {
            let net = read_network(proximity_file)?;
            if net.n() != n {
                return Err(Error::validation(format!(
                    "proximity network has {} nodes for {n} panel units",
                    net.n()
                )));
            }
            net
        }
        ProximitySource::DistanceMatrix { threshold } => {
            if *threshold <= 0.0 {
                return Err(Error::validation("distance threshold must be positive"));
            }
            let rows = read_csv_rows(proximity_file)?;
            if rows.len() != n {
                return Err(Error::validation(format!(
                    "distance matrix has {} rows for {n} panel units",
                    rows.len()
                )));
            }
            let mut dist: DMatrix<f64> = DMatrix::zeros(n, n);
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::validation(format!(
                        "distance matrix row {i} has {} columns for {n} units",
                        row.len()
                    )));
                }
                for (j, token) in row.iter().enumerate() {
                    dist[(i, j)] = token.parse().map_err(|_| {
                        Error::validation(format!("bad distance value `{token}`"))
                    })?;
                }
            }
            let mut adjacency = vec![0u8; n * n];
            for i in 0..n {
                for j in 0..n {
                    if i != j && dist[(i, j)] > 0.0 && dist[(i, j)] <= *threshold {
                        adjacency[i * n + j] = 1;
                    }
                }
            }
            // Thresholded distances must come out symmetric.
            for i in 0..n {
                for j in 0..i {
                    if adjacency[i * n + j] != adjacency[j * n + i] {
                        return Err(Error::validation(format!(
                            "asymmetric distances for units `{}` and `{}`",
                            units[i], units[j]
                        )));
                    }
                }
            }
            Network::from_adjacency(n, adjacency, None, None)?
        }
    };

    Ok(PanelDataset {
        units,
        waves,
        outcomes,
        covariates,
        covariate_names,
        network,
    })
}

/// Fill interior gaps by linear interpolation between the nearest observed
/// neighbours; leading and trailing gaps are left missing.
fn interpolate_series(series: &mut [Option<f64>]) {
    let t = series.len();
    let mut idx = 0;
    while idx < t {
        if series[idx].is_some() {
            idx += 1;
            continue;
        }
        let prev = (0..idx).rev().find(|&p| series[p].is_some());
        let next = (idx + 1..t).find(|&q| series[q].is_some());
        if let (Some(p), Some(q)) = (prev, next) {
            let vp = series[p].unwrap();
            let vq = series[q].unwrap();
            for m in (p + 1)..q {
                let frac = (m - p) as f64 / (q - p) as f64;
                series[m] = Some(vp + frac * (vq - vp));
            }
            idx = q;
        } else {
            idx += 1;
        }
    }
}
