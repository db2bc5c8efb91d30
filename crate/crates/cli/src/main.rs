//! Command-line surface of the network-diffusion toolkit.
//!
//! Every command reads one JSON config document (strict schema), resolves
//! seeds and worker counts, and writes artifacts under the output directory.
//! Each artifact starts with a comment line embedding the config hash and
//! master seed. Exit code 1 flags configuration faults, 2 runtime numeric
//! failures.

mod config;
mod panel;
mod svg;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use netdiff_core::bsar::{gibbs_fit, probit_fit, simulate_bsar, BsarParams, GibbsConfig};
use netdiff_core::error::Error;
use netdiff_core::mc;
use netdiff_core::net;
use netdiff_core::rng::child_seed;
use netdiff_core::saom_core::EffectSpec;
use netdiff_core::saom_fit::{
    build_cross_sectional_problem, build_panel_problem, convergence_filter, mom_estimate,
    wald_significance,
};

use config::{load_config, parse_error_dist, parse_weights, RunConfig};
use panel::{ingest_panel, ProximitySource};

#[derive(Parser)]
#[command(name = "netdiff", version, about = "Diffusion of binary outcomes on networks: simulation, estimation, Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (overrides config and NETDIFF_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed (overrides config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random geometric network.
    Generate,
    /// Simulate a BSAR dataset on an existing network.
    Simulate,
    /// Fit the Bayesian spatial-probit Gibbs sampler.
    FitGibbs,
    /// Fit the SAOM method-of-moments estimator.
    FitSaom,
    /// Run the Monte Carlo grid and write row plus summary CSVs.
    Montecarlo,
    /// Render summary CSVs into static SVG figures.
    Report,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let msg = e.to_string().lines().next().unwrap_or("bad usage").to_string();
            eprintln!("error: kind=config msg=\"{msg}\"");
            std::process::exit(1);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            let (kind, code) = match e {
                Error::NumericFailure(_)
                | Error::DegenerateData(_)
                | Error::DivergingCoefficients(_) => ("runtime", 2),
                _ => ("config", 1),
            };
            let msg = e.to_string().replace('"', "'").replace('\n', "; ");
            eprintln!("error: kind={kind} msg=\"{msg}\"");
            std::process::exit(code);
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
    seed: u64,
    workers: Option<usize>,
    out: PathBuf,
}

impl Ctx {
    fn meta(&self) -> String {
        format!("config_hash={} master_seed={}", self.hash, self.seed)
    }

    fn write(&self, name: &str, body: &str) -> Result<(), Error> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        std::fs::write(&path, format!("# {}\n{body}", self.meta()))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => return Err(Error::invalid("--config <path> is required")),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let workers = cli
        .workers
        .or(cfg.workers)
        .or_else(|| std::env::var("NETDIFF_WORKERS").ok().and_then(|v| v.parse().ok()));
    let hash = config::config_hash(&cfg);
    eprintln!(
        "effective config (hash {hash}, seed {seed}): {}",
        serde_json::to_string(&cfg).expect("config serializes")
    );
    let ctx = Ctx {
        cfg,
        hash,
        seed,
        workers,
        out: cli.out,
    };
    match cli.command {
        Command::Generate => cmd_generate(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::FitGibbs => cmd_fit_gibbs(&ctx),
        Command::FitSaom => cmd_fit_saom(&ctx),
        Command::Montecarlo => cmd_montecarlo(&ctx),
        Command::Report => cmd_report(&ctx),
    }
}

fn block<'a, T>(block: &'a Option<T>, name: &str) -> Result<&'a T, Error> {
    block
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("config is missing the `{name}` block")))
}

fn cmd_generate(ctx: &Ctx) -> Result<(), Error> {
    let b = block(&ctx.cfg.generate, "generate")?;
    let network = net::generate_random_geometric(b.n, b.target_avg_degree, ctx.seed)?;
    eprintln!(
        "generated n={} realized mean degree {:.3} radius {:.4} isolates {}",
        network.n(),
        network.mean_degree(),
        network.radius().unwrap_or(f64::NAN),
        network.isolate_count()
    );
    ctx.write("network.edges", &net::network_to_string(&network))
}

fn cmd_simulate(ctx: &Ctx) -> Result<(), Error> {
    let b = block(&ctx.cfg.simulate, "simulate")?;
    let network = net::read_network(Path::new(&b.network))?;
    let n = network.n();
    let k = b.beta.len();
    if k == 0 {
        return Err(Error::invalid("beta must have at least one coefficient"));
    }
    let x = mc::random_design(n, k, b.x_mean, b.x_sd, child_seed(ctx.seed, &[0x78]));
    let mut params = BsarParams::new(b.rho, b.beta.clone());
    params.error_dist = parse_error_dist(&b.error_dist)?;
    let draw = simulate_bsar(&network, &x, &params, child_seed(ctx.seed, &[0x65]))?;

    let mut body = String::from("node,y,y_star,epsilon");
    for j in 0..k {
        body.push_str(&format!(",x{j}"));
    }
    body.push('\n');
    for i in 0..n {
        body.push_str(&format!(
            "{i},{},{:.10},{:.10}",
            draw.y[i], draw.y_star[i], draw.epsilon[i]
        ));
        for j in 0..k {
            body.push_str(&format!(",{:.10}", x[(i, j)]));
        }
        body.push('\n');
    }
    ctx.write("dataset.csv", &body)
}

/// Read a dataset written by `simulate`: a `y` column plus `x0..` columns;
/// `node`, `y_star` and `epsilon` are ignored.
fn read_dataset(path: &Path) -> Result<(DMatrix<f64>, Vec<u8>), Error> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::validation("dataset file is empty"))?
        .split(',')
        .map(|t| t.trim().to_string())
        .collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::validation("dataset needs a `y` column"))?;
    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    for (idx, h) in header.iter().enumerate() {
        if let Some(stripped) = h.strip_prefix('x') {
            if let Ok(j) = stripped.parse::<usize>() {
                x_cols.push((j, idx));
            }
        }
    }
    x_cols.sort();
    if x_cols.is_empty() {
        return Err(Error::validation("dataset needs x0.. columns"));
    }
    let mut y = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != header.len() {
            return Err(Error::Parse {
                line: lineno + 2,
                msg: "field count does not match header".to_string(),
            });
        }
        let yv: u8 = toks[y_col].trim().parse().map_err(|_| Error::Parse {
            line: lineno + 2,
            msg: format!("bad y value `{}`", toks[y_col]),
        })?;
        y.push(yv);
        let row = x_cols
            .iter()
            .map(|&(_, idx)| {
                toks[idx].trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 2,
                    msg: format!("bad x value `{}`", toks[idx]),
                })
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        x_rows.push(row);
    }
    let n = y.len();
    let k = x_cols.len();
    let x = DMatrix::from_fn(n, k, |i, j| x_rows[i][j]);
    Ok((x, y))
}

fn cmd_fit_gibbs(ctx: &Ctx) -> Result<(), Error> {
    let b = block(&ctx.cfg.fit_gibbs, "fit_gibbs")?;
    let network = net::read_network(Path::new(&b.network))?;
    let (x, y) = read_dataset(Path::new(&b.dataset))?;
    if x.nrows() != network.n() {
        return Err(Error::validation(format!(
            "dataset has {} rows for a {}-node network",
            x.nrows(),
            network.n()
        )));
    }
    let cfg = GibbsConfig {
        n_iter: b.n_iter,
        burn_in: b.burn_in,
        rho_grid_size: b.rho_grid_size,
        prior_beta_variance: b.prior_beta_variance,
        weights: parse_weights(&b.weights)?,
        seed: child_seed(ctx.seed, &[0x6669_7467]),
    };
    let summary = gibbs_fit(&network, &x, &y, &cfg)?;
    if summary.boundary_warning {
        eprintln!("warning: rho draws piled on the admissible boundary");
    }
    // Plain probit baseline on the same data, for side-by-side reading.
    match probit_fit(&x, &y) {
        Ok(fit) => {
            let z: Vec<String> = (0..fit.coefficients.len())
                .map(|j| format!("beta{j}={:.4} (se {:.4})", fit.coefficients[j], fit.std_errors[j]))
                .collect();
            eprintln!("probit baseline: {}", z.join(", "));
        }
        Err(e) => eprintln!("probit baseline unavailable: {e}"),
    }
    ctx.write("gibbs_fit.csv", &summary.to_csv(b.significance_level))
}

fn cmd_fit_saom(ctx: &Ctx) -> Result<(), Error> {
    let b = block(&ctx.cfg.fit_saom, "fit_saom")?;
    let spatial = match b.effect.as_str() {
        "avsim" => EffectSpec::av_sim(),
        "avalt" => EffectSpec::av_alt(),
        other => {
            return Err(Error::invalid(format!(
                "effect must be `avsim` or `avalt`, got `{other}`"
            )))
        }
    };
    let fit_cfg = b.to_fit_config(child_seed(ctx.seed, &[0x6669_7473]));

    let (problem, labels) = match (&b.panel, &b.network, &b.dataset) {
        (Some(p), _, _) => {
            let source = match p.proximity_kind.as_str() {
                "edge_list" => ProximitySource::EdgeList,
                "distance_matrix" => ProximitySource::DistanceMatrix {
                    threshold: p.distance_threshold.ok_or_else(|| {
                        Error::invalid(
                            "distance_matrix proximity requires `distance_threshold`",
                        )
                    })?,
                },
                other => {
                    return Err(Error::invalid(format!(
                        "proximity_kind must be `edge_list` or `distance_matrix`, got `{other}`"
                    )))
                }
            };
            let panel = ingest_panel(
                Path::new(&p.outcomes),
                Path::new(&p.covariates),
                Path::new(&p.proximity),
                &source,
            )?;
            eprintln!(
                "panel: {} units, {} waves ({}..{})",
                panel.units.len(),
                panel.waves.len(),
                panel.waves.first().copied().unwrap_or(0),
                panel.waves.last().copied().unwrap_or(0)
            );
            let mut effects = vec![spatial];
            for j in 0..panel.covariate_names.len() {
                effects.push(EffectSpec::eff_from(j));
            }
            if p.linear_shape {
                effects.push(EffectSpec::linear_shape());
            }
            let mut labels = vec![b.effect.clone()];
            labels.extend(panel.covariate_names.iter().cloned());
            if p.linear_shape {
                labels.push("linear_shape".to_string());
            }
            (
                build_panel_problem(&panel.network, &panel.outcomes, &panel.covariates, &effects)?,
                labels,
            )
        }
        (None, Some(network), Some(dataset)) => {
            let network = net::read_network(Path::new(network))?;
            let (x, y) = read_dataset(Path::new(dataset))?;
            if x.nrows() != network.n() {
                return Err(Error::validation(format!(
                    "dataset has {} rows for a {}-node network",
                    x.nrows(),
                    network.n()
                )));
            }
            // Column 0 is the intercept; it carries no effFrom information
            // once centered, so covariate effects start at column 1.
            let mut effects = vec![spatial];
            let mut labels = vec![b.effect.clone()];
            for j in 1..x.ncols() {
                effects.push(EffectSpec::eff_from(j));
                labels.push(format!("x{j}"));
            }
            (build_cross_sectional_problem(&network, &y, &x, &effects)?, labels)
        }
        _ => {
            return Err(Error::invalid(
                "fit_saom needs either `panel` or both `network` and `dataset`",
            ))
        }
    };

    let fit = mom_estimate(&problem, &fit_cfg)?;
    let accepted = convergence_filter(&fit, 0);
    let sig = wald_significance(&fit, b.significance_level);
    eprintln!(
        "fit {}converged, t_conv_max {:.3}, accepted: {accepted}",
        if fit.converged { "" } else { "NOT " },
        fit.t_conv_max
    );
    for (i, label) in labels.iter().enumerate() {
        eprintln!(
            "  {label}: {:+.4} (se {:.4}){}",
            fit.theta_hat[i],
            fit.std_errors[i],
            if sig[i] { " *" } else { "" }
        );
    }
    let mut body = String::from(netdiff_core::saom_fit::FitResult::csv_header());
    body.push('\n');
    body.push_str(&fit.to_csv_row(Some(0)));
    body.push('\n');
    ctx.write("saom_fit.csv", &body)
}

fn cmd_montecarlo(ctx: &Ctx) -> Result<(), Error> {
    let b = block(&ctx.cfg.montecarlo, "montecarlo")?;
    let grid = b.to_grid(ctx.seed)?;
    let (rows, summaries) = mc::run_grid(&grid, ctx.workers)?;
    let total_secs: f64 = rows.iter().map(|r| r.seconds).sum();
    eprintln!(
        "ran {} replication rows ({:.1} estimator-seconds)",
        rows.len(),
        total_secs
    );
    ctx.write("results.csv", &mc::rows_to_csv(&rows, false))?;
    ctx.write("counts.csv", &mc::counts_table_csv(&summaries))?;
    ctx.write("spatial.csv", &mc::spatial_table_csv(&summaries))?;
    ctx.write("slope.csv", &mc::slope_table_csv(&summaries))?;
    ctx.write("significance.csv", &mc::significance_csv(&summaries))
}

fn parse_summary_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), Error> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::validation(format!("{}: empty", path.display())))?
        .split(',')
        .map(|t| t.trim().to_string())
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|t| t.trim().to_string()).collect())
        .collect();
    Ok((header, rows))
}

fn cmd_report(ctx: &Ctx) -> Result<(), Error> {
    let b = block(&ctx.cfg.report, "report")?;
    let dir = Path::new(&b.summaries);

    // Estimate-vs-rho figure from the wide spatial table.
    let (header, rows) = parse_summary_csv(&dir.join("spatial.csv"))?;
    let mut keys: Vec<String> = Vec::new();
    for h in &header {
        if let Some(k) = h.strip_prefix("mean_") {
            keys.push(k.to_string());
        }
    }
    let col_of = |name: &str| header.iter().position(|h| h == name);
    let mut estimate_series = Vec::new();
    for key in &keys {
        let mean_col = col_of(&format!("mean_{key}")).unwrap();
        let sd_col = col_of(&format!("sd_{key}"));
        let mut points = Vec::new();
        for row in &rows {
            let rho: f64 = match row[0].parse() {
                Ok(v) => v,
                Err(_) => continue,
            };
            if let Ok(mean) = row[mean_col].parse::<f64>() {
                let sd = sd_col.and_then(|c| row[c].parse::<f64>().ok());
                points.push((rho, mean, sd));
            }
        }
        if !points.is_empty() {
            estimate_series.push(svg::Series {
                label: key.clone(),
                points,
            });
        }
    }
    let estimates = svg::estimates_plot(
        "Spatial estimates by data-generation rho (mean, one sd)",
        &estimate_series,
        &ctx.meta(),
    );

    // Significance curves and convergence bars from the long table.
    let (header, rows) = parse_summary_csv(&dir.join("significance.csv"))?;
    let need = ["rho", "n", "estimator", "prop_sig_spatial", "convergence_rate"];
    let cols: Vec<usize> = need
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::validation(format!("significance.csv lacks `{name}`")))
        })
        .collect::<Result<_, Error>>()?;
    let mut sig_series: Vec<svg::Series> = Vec::new();
    let mut conv_series: Vec<svg::Series> = Vec::new();
    for row in &rows {
        let rho: f64 = row[cols[0]].parse().map_err(|_| {
            Error::validation(format!("bad rho `{}` in significance.csv", row[cols[0]]))
        })?;
        let key = format!("{}_{}", row[cols[2]], row[cols[1]]);
        if let Ok(p) = row[cols[3]].parse::<f64>() {
            push_point(&mut sig_series, &key, (rho, p, None));
        }
        if let Ok(rate) = row[cols[4]].parse::<f64>() {
            push_point(&mut conv_series, &key, (rho, rate, None));
        }
    }
    for s in sig_series.iter_mut().chain(conv_series.iter_mut()) {
        s.points
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite rho"));
    }
    let significance = svg::proportion_plot(
        "Proportion of significant spatial tests",
        "proportion significant",
        &sig_series,
        &ctx.meta(),
    );
    let convergence = svg::rate_bars(
        "Accepted-fit rate by cell",
        "acceptance rate",
        &conv_series,
        &ctx.meta(),
    );

    std::fs::create_dir_all(&ctx.out)?;
    for (name, body) in [
        ("spatial_estimates.svg", estimates),
        ("significance.svg", significance),
        ("convergence.svg", convergence),
    ] {
        let path = ctx.out.join(name);
        std::fs::write(&path, body)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn push_point(series: &mut Vec<svg::Series>, key: &str, point: (f64, f64, Option<f64>)) {
    if let Some(s) = series.iter_mut().find(|s| s.label == key) {
        s.points.push(point);
    } else {
        series.push(svg::Series {
            label: key.to_string(),
            points: vec![point],
        });
    }
}
