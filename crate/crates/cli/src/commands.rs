//! Subcommand implementations. Everything here is a thin, testable layer
//! over the core library: parse flags, move bytes, derive seeds.

use crate::args::*;
use crate::csvio;
use crate::manifest::RunManifest;
use crate::{CliError, CliResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ste_core::copula::FamilyKind;
use ste_core::dvine::Direction;
use ste_core::engine::{estimate_ste, run_matrix_pairs, significance_test, MatrixConfig, SteRequest, SteTestResult};
use ste_core::extremes::MarginChoice;
use ste_core::gc::{fit_var, wald_gc_test};
use ste_core::seed::derive;
use ste_core::signal::{filter_band, BandSpec, FilterSpec};
use ste_core::sim::{gen_channel_pair, CausalTopology, Channel, PairConfig};
use std::time::Instant;

fn write_json(path: &str, value: &impl Serialize) -> CliResult<()> {
    if let Some(dir) = std::path::Path::new(path).parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

// ---------------------------------------------------------------- simulate

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    let seed = resolve_seed(args.seed);
    let mut cfg: PairConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => PairConfig::default_with(CausalTopology::default_eight_links(), 30.0),
    };
    if let Some(secs) = args.n_seconds {
        cfg.n_seconds = secs;
    }
    let (x, y, truth) = gen_channel_pair(&cfg, seed)?;
    csvio::write_channels(&args.out, &[&x, &y])?;
    write_json(&format!("{}.truth.json", args.out), &truth)?;

    let mut manifest = RunManifest::new(serde_json::to_value(&cfg)?, seed);
    if let Some(path) = &args.config {
        manifest.hash_input(path)?;
    }
    manifest.finish(&args.out, started)
}

// --------------------------------------------------------------------- ste

fn parse_band(token: &str) -> CliResult<BandSpec> {
    if let Some(b) = BandSpec::preset(token) {
        return Ok(b);
    }
    if let Some((lo, hi)) = token.split_once('-') {
        if let (Ok(lo), Ok(hi)) = (lo.parse::<f64>(), hi.parse::<f64>()) {
            return BandSpec::new(format!("{lo}-{hi}Hz"), lo, hi).map_err(CliError::from);
        }
    }
    Err(CliError::Config(format!(
        "unknown band {token:?}; use a preset (delta/theta/alpha/beta/gamma) or lo-hi in Hz"
    )))
}

/// Parse `--bands`: "all", or a comma list of `band` / `x_band:y_band`
/// entries. Returns the distinct bands plus ordered pair indices.
pub fn parse_band_pairs(spec: &str) -> CliResult<(Vec<BandSpec>, Vec<(usize, usize)>)> {
    if spec.trim() == "all" {
        let bands = BandSpec::all_presets();
        let pairs = (0..bands.len())
            .flat_map(|a| (0..bands.len()).map(move |b| (a, b)))
            .collect();
        return Ok((bands, pairs));
    }
    let mut bands: Vec<BandSpec> = Vec::new();
    let index_of = |b: BandSpec, bands: &mut Vec<BandSpec>| -> usize {
        if let Some(i) = bands.iter().position(|x| x.name == b.name) {
            i
        } else {
            bands.push(b);
            bands.len() - 1
        }
    };
    let mut pairs = Vec::new();
    for token in spec.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let (a, b) = match token.split_once(':') {
            Some((a, b)) => (parse_band(a.trim())?, parse_band(b.trim())?),
            None => {
                let band = parse_band(token)?;
                (band.clone(), band)
            }
        };
        let ia = index_of(a, &mut bands);
        let ib = index_of(b, &mut bands);
        pairs.push((ia, ib));
    }
    if pairs.is_empty() {
        return Err(CliError::Config("no band pairs requested".into()));
    }
    Ok((bands, pairs))
}

pub fn parse_families(spec: &str) -> CliResult<Vec<FamilyKind>> {
    if spec.trim() == "all" {
        return Ok(FamilyKind::all());
    }
    let mut out = Vec::new();
    for token in spec.split(',') {
        if token.trim().is_empty() {
            continue;
        }
        out.push(FamilyKind::parse(token).map_err(CliError::from)?);
    }
    if out.is_empty() {
        return Err(CliError::Config("no copula families requested".into()));
    }
    Ok(out)
}

fn parse_margin(spec: &str) -> CliResult<MarginChoice> {
    match spec.trim().to_lowercase().as_str() {
        "ecdf" => Ok(MarginChoice::Ecdf),
        "gev" => Ok(MarginChoice::Gev),
        other => Err(CliError::Config(format!("unknown margin model {other:?}"))),
    }
}

/// Serializable report of one `ste` run.
#[derive(Debug, Serialize, Deserialize)]
pub struct SteReport {
    pub alpha: f64,
    pub n_tests: usize,
    pub n_rejected_adjusted: usize,
    pub results: Vec<SteTestResult>,
}

pub fn cmd_ste(args: &SteArgs) -> CliResult<()> {
    let started = Instant::now();
    let seed = resolve_seed(args.seed);
    let channels = csvio::read_channels(&args.input, args.fs)?;
    let (bands, pairs) = parse_band_pairs(&args.bands)?;
    for b in &bands {
        b.validate_for(args.fs)?;
    }
    let cfg = MatrixConfig {
        m: args.m,
        k: args.k,
        ell: args.l,
        margin: parse_margin(&args.margin)?,
        segment_seconds: args.segment_seconds,
        families: parse_families(&args.families)?,
        r: args.r,
        t_star: args.t_star,
        seed,
        smoothed_p: !args.raw_pvalue,
    };
    let pool = thread_pool(args.jobs)?;
    let results = pool.install(|| run_matrix_pairs(&channels, &bands, &pairs, &cfg))?;
    let report = SteReport {
        alpha: args.alpha,
        n_tests: results.len(),
        n_rejected_adjusted: results
            .iter()
            .filter(|r| r.error.is_none() && r.p_adjusted < args.alpha)
            .count(),
        results,
    };
    write_json(&args.out, &report)?;

    let mut manifest = RunManifest::new(serde_json::to_value(&cfg)?, seed);
    manifest.hash_input(&args.input)?;
    manifest.failures = report
        .results
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| {
                format!(
                    "{}-{} {}:{} {:?}: {e}",
                    r.pair.0, r.pair.1, r.band_pair.0, r.band_pair.1, r.direction
                )
            })
        })
        .collect();
    manifest.finish(&args.out, started)
}

// ---------------------------------------------------------------------- gc

#[derive(Debug, Serialize, Deserialize)]
pub struct GcReport {
    pub order: usize,
    pub band: Option<String>,
    pub stable: bool,
    pub tests: Vec<GcTest>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GcTest {
    pub direction: Direction,
    pub statistic: f64,
    pub p_value: f64,
}

pub fn cmd_gc(args: &GcArgs) -> CliResult<()> {
    let started = Instant::now();
    let channels = csvio::read_channels(&args.input, args.fs)?;
    if channels.len() != 2 {
        return Err(CliError::Data(format!(
            "gc needs exactly 2 channels, got {}",
            channels.len()
        )));
    }
    let (mut x, mut y) = (channels[0].clone(), channels[1].clone());
    if let Some(band) = &args.band {
        let spec = FilterSpec::new(parse_band(band)?);
        x = filter_band(&x, &spec)?;
        y = filter_band(&y, &spec)?;
    }
    let model = fit_var(&x, &y, args.order)?;
    let mut tests = Vec::new();
    for direction in [Direction::XToY, Direction::YToX] {
        let (statistic, p_value) = wald_gc_test(&model, direction)?;
        tests.push(GcTest { direction, statistic, p_value });
    }
    let report = GcReport {
        order: args.order,
        band: args.band.clone(),
        stable: model.stable,
        tests,
    };
    write_json(&args.out, &report)?;

    let mut manifest = RunManifest::new(serde_json::json!({"order": args.order, "band": args.band}), 0);
    manifest.hash_input(&args.input)?;
    manifest.finish(&args.out, started)
}

// ------------------------------------------------------------------- table

/// One aggregated cell of a rejection-proportion experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub experiment: String,
    pub band_pair: String,
    pub direction: Direction,
    pub method: String,
    pub m: usize,
    pub p: usize,
    pub n_seconds: f64,
    pub replicates: usize,
    pub rejections: usize,
    pub proportion: f64,
    pub mean_estimate: f64,
}

/// Simulated ground truth of the table experiments: a single theta-band
/// X -> Y link. `eta` is the modulator interval support.
fn table_config(n_seconds: f64, eta: (usize, usize)) -> PairConfig {
    let mut cfg = PairConfig::default_with(
        CausalTopology::single_link(Channel::X, Channel::Y, "theta"),
        n_seconds,
    );
    cfg.eta = eta;
    cfg
}

/// STE rejection proportions on the single-link simulator, both
/// directions. X -> Y measures power, Y -> X measures size.
#[allow(clippy::too_many_arguments)]
pub fn run_ste_table(
    experiment: &str,
    eta: (usize, usize),
    m: usize,
    p: usize,
    n_seconds: f64,
    replicates: usize,
    r: usize,
    t_star: usize,
    alpha: f64,
    seed: u64,
) -> CliResult<Vec<TableRow>> {
    let outcomes: Vec<CliResult<((bool, f64), (bool, f64))>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = derive(seed, &[ste_core::seed::label(experiment), m as u64, rep as u64]);
            let cfg = table_config(n_seconds, eta);
            let (x, y, _) = gen_channel_pair(&cfg, rep_seed)?;
            let theta = BandSpec::preset("theta").unwrap();
            let req = SteRequest {
                x,
                y,
                band_x: theta.clone(),
                band_y: theta,
                m,
                k: p,
                ell: p,
                margin: MarginChoice::Ecdf,
                segment_seconds: 15.0,
                families: FamilyKind::all(),
                r,
                t_star,
                seed: derive(rep_seed, &[1]),
                smoothed_p: true,
            };
            let pair = estimate_ste(&req)?;
            let mut dir_out = Vec::with_capacity(2);
            for (direction, est, tag) in [
                (Direction::XToY, &pair.xy, 2u64),
                (Direction::YToX, &pair.yx, 3u64),
            ] {
                let out = significance_test(
                    &pair.vine,
                    direction,
                    est,
                    pair.n_panel,
                    r,
                    &req.families,
                    t_star,
                    derive(rep_seed, &[tag]),
                    true,
                )?;
                dir_out.push((out.p_raw < alpha, est.value));
            }
            Ok((dir_out[0], dir_out[1]))
        })
        .collect();

    let mut rows = Vec::new();
    for (direction, pick) in [(Direction::XToY, 0usize), (Direction::YToX, 1usize)] {
        let mut rejections = 0;
        let mut sum_est = 0.0;
        let mut n_ok = 0;
        for o in &outcomes {
            match o {
                Ok(both) => {
                    let (rej, est) = if pick == 0 { both.0 } else { both.1 };
                    n_ok += 1;
                    if rej {
                        rejections += 1;
                    }
                    sum_est += est;
                }
                Err(e) => return Err(CliError::Numerical(format!("replicate failed: {e}"))),
            }
        }
        rows.push(TableRow {
            experiment: experiment.to_string(),
            band_pair: "theta:theta".into(),
            direction,
            method: "ste".into(),
            m,
            p,
            n_seconds,
            replicates: n_ok,
            rejections,
            proportion: rejections as f64 / n_ok as f64,
            mean_estimate: sum_est / n_ok as f64,
        });
    }
    Ok(rows)
}

/// Wald-Granger rejection proportions on theta-filtered signals from the
/// same single-link simulator; reproduces filtering-induced false
/// positives in the non-causal direction.
pub fn run_wgc_table(
    p: usize,
    n_seconds: f64,
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> CliResult<Vec<TableRow>> {
    let outcomes: Vec<CliResult<(bool, bool)>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = derive(seed, &[ste_core::seed::label("table2"), rep as u64]);
            let cfg = table_config(n_seconds, (31, 33));
            let (x, y, _) = gen_channel_pair(&cfg, rep_seed)?;
            let spec = FilterSpec::new(BandSpec::preset("theta").unwrap());
            let xf = filter_band(&x, &spec)?;
            let yf = filter_band(&y, &spec)?;
            let model = fit_var(&xf, &yf, p)?;
            let (_, p_xy) = wald_gc_test(&model, Direction::XToY)?;
            let (_, p_yx) = wald_gc_test(&model, Direction::YToX)?;
            Ok((p_xy < alpha, p_yx < alpha))
        })
        .collect();

    let mut rej = [0usize; 2];
    let mut n_ok = 0;
    for o in &outcomes {
        match o {
            Ok((xy, yx)) => {
                n_ok += 1;
                if *xy {
                    rej[0] += 1;
                }
                if *yx {
                    rej[1] += 1;
                }
            }
            Err(e) => return Err(CliError::Numerical(format!("replicate failed: {e}"))),
        }
    }
    Ok([(Direction::XToY, rej[0]), (Direction::YToX, rej[1])]
        .into_iter()
        .map(|(direction, rejections)| TableRow {
            experiment: "table2".into(),
            band_pair: "theta:theta".into(),
            direction,
            method: "wgc".into(),
            m: 0,
            p,
            n_seconds,
            replicates: n_ok,
            rejections,
            proportion: rejections as f64 / n_ok as f64,
            mean_estimate: f64::NAN,
        })
        .collect())
}

pub fn cmd_table(args: &TableArgs) -> CliResult<()> {
    let started = Instant::now();
    if args.replicates < 10 {
        return Err(CliError::Config("need at least 10 replicates".into()));
    }
    let seed = resolve_seed(args.seed);
    let pool = thread_pool(args.jobs)?;
    let eta = match args.experiment.as_str() {
        "table2" | "table3" => (31, 33),
        "table4" => (63, 65),
        other => {
            return Err(CliError::Config(format!(
                "unknown experiment {other:?}; expected table2, table3, or table4"
            )))
        }
    };
    let mut rows = Vec::new();
    pool.install(|| -> CliResult<()> {
        for &n_seconds in &args.n_seconds {
            if args.experiment == "table2" {
                rows.extend(run_wgc_table(args.p, n_seconds, args.replicates, args.alpha, seed)?);
            } else {
                for &m in &args.m {
                    rows.extend(run_ste_table(
                        &args.experiment,
                        eta,
                        m,
                        args.p,
                        n_seconds,
                        args.replicates,
                        args.r,
                        10_000,
                        args.alpha,
                        seed,
                    )?);
                }
            }
        }
        Ok(())
    })?;

    if let Some(dir) = std::path::Path::new(&args.out).parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record([
        "experiment",
        "band_pair",
        "direction",
        "method",
        "m",
        "p",
        "n_seconds",
        "replicates",
        "rejections",
        "proportion",
        "mean_estimate",
    ])?;
    for row in &rows {
        w.write_record([
            row.experiment.clone(),
            row.band_pair.clone(),
            row.direction.as_str().to_string(),
            row.method.clone(),
            row.m.to_string(),
            row.p.to_string(),
            row.n_seconds.to_string(),
            row.replicates.to_string(),
            row.rejections.to_string(),
            row.proportion.to_string(),
            row.mean_estimate.to_string(),
        ])?;
    }
    w.flush()?;

    let manifest = RunManifest::new(
        serde_json::json!({
            "experiment": args.experiment,
            "replicates": args.replicates,
            "R": args.r,
            "m": args.m,
            "p": args.p,
            "n_seconds": args.n_seconds,
            "alpha": args.alpha,
        }),
        seed,
    );
    manifest.finish(&args.out, started)
}

// ------------------------------------------------------------------ adjust

pub fn cmd_adjust(args: &AdjustArgs) -> CliResult<()> {
    let started = Instant::now();
    let (headers, rows, p_idx) = csvio::read_pvalue_table(&args.input)?;
    let mut pvals = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let v: f64 = row[p_idx]
            .trim()
            .parse()
            .map_err(|_| CliError::Data(format!("row {}: unparseable p-value {:?}", i + 2, row[p_idx])))?;
        if !(0.0 < v && v <= 1.0) {
            return Err(CliError::Data(format!("row {}: p-value {v} outside (0,1]", i + 2)));
        }
        pvals.push(v);
    }
    let adjusted = ste_core::engine::bh_adjust(&pvals);
    let mut w = csv::Writer::from_path(&args.out)?;
    let mut out_headers = headers.clone();
    out_headers.push("p_adjusted".into());
    w.write_record(&out_headers)?;
    for (row, adj) in rows.iter().zip(adjusted.iter()) {
        let mut out_row = row.clone();
        out_row.push(adj.to_string());
        w.write_record(&out_row)?;
    }
    w.flush()?;

    let mut manifest = RunManifest::new(serde_json::json!({"n": pvals.len()}), 0);
    manifest.hash_input(&args.input)?;
    manifest.finish(&args.out, started)
}
