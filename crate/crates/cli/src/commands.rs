use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::{json, Value};
use wtree::analysis::{
    compare as compare_runs, exact_enumeration, martingale_check, martingale_flatness,
    monte_carlo_counts, oracle_agreement, simulate_root_jumps, simulate_root_process,
    tau_laplace_check, MAX_ENUMERATION_NODES,
};
use wtree::growth::{grow_many, GrowthMode, SimConfig, SnapshotSchedule};
use wtree::theory::{exact_degree_fractions, solve as solve_theory, SeriesOptions, SolveOptions};
use wtree::weights::AlphaClass;
use wtree::{DegreeHistogram, TheorySolutionF64, WeightSpecF64};

use crate::config::ConfigFile;
use crate::{
    CompareArgs, Failure, ModeArg, OracleArgs, SimulateArgs, SolveArgs, XprocArgs, XprocCheck,
};

type CmdResult = Result<(), Failure>;

const SEED_ENV: &str = "WTREE_SEED";

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn io_fail(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Compute(e.into())
}

trait UsageContext<T> {
    fn usage_err(self) -> Result<T, Failure>;
}

impl<T> UsageContext<T> for anyhow::Result<T> {
    fn usage_err(self) -> Result<T, Failure> {
        self.map_err(Failure::Usage)
    }
}

/// Flag, then config, then `$WTREE_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: &ConfigFile) -> Result<u64, Failure> {
    if let Some(s) = config.pick_opt(flag, "seed").usage_err()? {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn resolve_weights(
    flag: Option<String>,
    config: &ConfigFile,
) -> Result<(String, WeightSpecF64), Failure> {
    let text: String = config
        .pick_opt(flag, "weights")
        .usage_err()?
        .ok_or_else(|| usage("missing weight function (e.g. linear:1,1)"))?;
    let spec = WeightSpecF64::parse(&text)?;
    Ok((text, spec))
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    config: Value,
    seeds: Vec<u64>,
    version: &'static str,
    wall_clock_seconds: f64,
    outputs: Vec<PathBuf>,
}

impl RunManifest {
    fn write(
        command: &str,
        config: Value,
        seeds: Vec<u64>,
        started: Instant,
        outputs: Vec<PathBuf>,
        path: &Path,
    ) -> CmdResult {
        let manifest = RunManifest {
            command: command.into(),
            argv: std::env::args().collect(),
            config,
            seeds,
            version: env!("CARGO_PKG_VERSION"),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            outputs,
        };
        write_json(path, &manifest)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut out = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(io_fail)?;
    writeln!(out).map_err(io_fail)?;
    out.flush().map_err(io_fail)
}

fn create(path: &Path) -> Result<File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Compute)?;
    }
    File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Compute)
}

/// `dir/stem.json` -> `dir/stem<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn solve(args: SolveArgs, config: &ConfigFile) -> CmdResult {
    let started = Instant::now();
    let (weights, spec) = resolve_weights(args.weights, config)?;
    let defaults = SolveOptions::<f64>::default();
    let opts = SolveOptions {
        series: SeriesOptions {
            tol: config
                .pick(args.tol, "tol", defaults.series.tol)
                .usage_err()?,
            k_max: config
                .pick(args.max_terms, "max_terms", defaults.series.k_max)
                .usage_err()?,
        },
        c_kmax: config
            .pick(args.kmax, "kmax", defaults.c_kmax)
            .usage_err()?,
    };
    if !(opts.series.tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let sol = solve_theory(&spec, &opts).map_err(|e| Failure::Compute(e.into()))?;

    println!("lambda_star={:.9}", sol.lambda_star);
    println!("b1={:.9}", sol.b1);
    println!("truncation_K={}", sol.truncation_k);
    match sol.alpha_class {
        AlphaClass::Linear => {
            let slope = spec.leading_slope().unwrap_or(1.0);
            println!("alpha_class=linear");
            println!("gamma={:.9}", 1.0 + sol.lambda_star / slope);
        }
        AlphaClass::Sublinear(alpha) => println!("alpha_class=sublinear({alpha})"),
        AlphaClass::Bounded => println!("alpha_class=bounded"),
    }
    for w in &sol.warnings {
        eprintln!("warning: {w}");
    }

    if let Some(out) = config.pick_opt(args.out, "out").usage_err()? {
        let csv_path = sibling(&out, ".csv");
        write_json(&out, &sol)?;
        write_c_csv(&csv_path, &sol)?;
        let echo = json!({
            "weights": weights,
            "tol": opts.series.tol,
            "max_terms": opts.series.k_max,
            "kmax": opts.c_kmax,
        });
        RunManifest::write(
            "solve",
            echo,
            vec![],
            started,
            vec![out.clone(), csv_path],
            &sibling(&out, ".manifest.json"),
        )?;
    }
    Ok(())
}

fn write_c_csv(path: &Path, sol: &TheorySolutionF64) -> CmdResult {
    let exact = exact_degree_fractions(&sol.c).map_err(|e| Failure::Compute(e.into()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(create(path)?));
    w.write_record(["k", "c_k", "p_k"]).map_err(io_fail)?;
    for (k, c) in sol.c.iter().enumerate() {
        let p = exact.get(k).map(f64::to_string).unwrap_or_default();
        w.write_record([k.to_string(), c.to_string(), p])
            .map_err(io_fail)?;
    }
    w.flush().map_err(io_fail)
}

fn parse_snapshots(text: &str) -> Result<SnapshotSchedule, Failure> {
    match text {
        "final" => Ok(SnapshotSchedule::Final),
        "pow2" => Ok(SnapshotSchedule::PowersOfTwo),
        list => list
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(SnapshotSchedule::Explicit)
            .map_err(|_| {
                usage(format!(
                    "--snapshots {list:?}: expected final, pow2 or a list of node counts"
                ))
            }),
    }
}

pub fn simulate(args: SimulateArgs, config: &ConfigFile) -> CmdResult {
    let started = Instant::now();
    let (weights, spec) = resolve_weights(args.weights, config)?;
    let nodes: usize = config
        .pick_opt(args.nodes, "nodes")
        .usage_err()?
        .ok_or_else(|| usage("missing --nodes"))?;
    let seed = resolve_seed(args.seed, config)?;
    let mode = config
        .pick(args.mode, "mode", ModeArg::Discrete)
        .usage_err()?;
    let snapshots_text: String = config
        .pick(args.snapshots, "snapshots", "final".into())
        .usage_err()?;
    let runs: usize = config.pick(args.runs, "runs", 1).usage_err()?;
    let out: PathBuf = config
        .pick_opt(args.out, "out")
        .usage_err()?
        .ok_or_else(|| usage("missing --out directory"))?;
    let no_edges = args.no_edges || config.get::<bool>("no_edges").usage_err()?.unwrap_or(false);
    if nodes == 0 {
        return Err(usage("--nodes must be at least 1"));
    }
    if runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let schedule = parse_snapshots(&snapshots_text)?;
    schedule.node_counts(nodes)?;

    let mut sim = SimConfig::new(spec, nodes, seed).with_snapshots(schedule.clone());
    if mode == ModeArg::Continuous {
        sim = sim.continuous(true);
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|i| seed.wrapping_add(i)).collect();
    let results = grow_many(&sim, &seeds)?;

    let mut outputs = Vec::new();
    for (run, &s) in results.iter().zip(&seeds) {
        let dir = if runs == 1 {
            out.clone()
        } else {
            out.join(format!("seed_{s}"))
        };
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Compute)?;
        if schedule != SnapshotSchedule::Final {
            for h in &run.snapshots {
                let path = dir.join(format!("histogram_n{}.csv", h.n_nodes));
                write_histogram(&path, h)?;
                outputs.push(path);
            }
        }
        let path = dir.join("histogram.csv");
        write_histogram(&path, &run.state.histogram())?;
        outputs.push(path);
        if !no_edges {
            let path = dir.join("edges.txt");
            let mut w = BufWriter::new(create(&path)?);
            for child in 1..run.state.node_count() {
                let parent = run
                    .state
                    .parent_of(child)
                    .expect("non-root node has a parent");
                writeln!(w, "{child},{parent}").map_err(io_fail)?;
            }
            w.flush().map_err(io_fail)?;
            outputs.push(path);
        }
        if let Some(times) = run.state.birth_times() {
            let path = dir.join("birth_times.csv");
            let mut w = csv::Writer::from_writer(BufWriter::new(create(&path)?));
            w.write_record(["node", "T_n"]).map_err(io_fail)?;
            for (node, t) in times.iter().enumerate() {
                w.write_record([node.to_string(), t.to_string()])
                    .map_err(io_fail)?;
            }
            w.flush().map_err(io_fail)?;
            outputs.push(path);
        }
        let d = run.state.diagnostics();
        if d.clamped_searches + d.empty_bucket_fallbacks > 0 {
            eprintln!(
                "seed {s}: {} clamped searches, {} empty-bucket fallbacks",
                d.clamped_searches, d.empty_bucket_fallbacks
            );
        }
    }
    let final_counts: Vec<_> = results.iter().map(|r| r.state.histogram()).collect();
    for (h, s) in final_counts.iter().zip(&seeds) {
        println!(
            "seed={s} n={} max_degree={} N_1/N_0={:.6}",
            h.n_nodes,
            h.max_degree(),
            h.ratio(1)
        );
    }

    let echo = json!({
        "weights": weights,
        "nodes": nodes,
        "seed": seed,
        "mode": match mode { ModeArg::Discrete => GrowthMode::Discrete, ModeArg::Continuous => GrowthMode::Continuous },
        "snapshots": snapshots_text,
        "runs": runs,
        "no_edges": no_edges,
    });
    RunManifest::write(
        "simulate",
        echo,
        seeds,
        started,
        outputs,
        &out.join("manifest.json"),
    )
}

fn write_histogram(path: &Path, h: &DegreeHistogram) -> CmdResult {
    h.write_csv(BufWriter::new(create(path)?))
        .map_err(|e| Failure::Compute(e.into()))
}

pub fn compare(args: CompareArgs, config: &ConfigFile) -> CmdResult {
    let started = Instant::now();
    let pattern: String = config
        .pick_opt(args.sim, "sim")
        .usage_err()?
        .ok_or_else(|| usage("missing --sim glob"))?;
    let theory_path: PathBuf = config
        .pick_opt(args.theory, "theory")
        .usage_err()?
        .ok_or_else(|| usage("missing --theory file"))?;
    let kmax = config.pick(args.kmax, "kmax", 10).usage_err()?;
    let tol = config.pick(args.tol, "tol", 1e-3).usage_err()?;
    let z_cap = config.pick(args.z_cap, "z_cap", 4.0).usage_err()?;
    let out: Option<PathBuf> = config.pick_opt(args.out, "out").usage_err()?;

    let mut files: Vec<PathBuf> = glob::glob(&pattern)
        .map_err(|e| usage(format!("bad glob {pattern:?}: {e}")))?
        .collect::<Result<_, _>>()
        .map_err(|e| usage(e.to_string()))?;
    files.sort();
    let histograms = files
        .iter()
        .map(|p| {
            let f = File::open(p)
                .with_context(|| format!("opening {}", p.display()))
                .usage_err()?;
            DegreeHistogram::read_csv(f)
                .with_context(|| format!("reading {}", p.display()))
                .usage_err()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let theory_text = fs::read_to_string(&theory_path)
        .with_context(|| format!("reading {}", theory_path.display()))
        .usage_err()?;
    let theory: TheorySolutionF64 = serde_json::from_str(&theory_text)
        .with_context(|| format!("parsing {}", theory_path.display()))
        .usage_err()?;

    let report = compare_runs(&histograms, &theory, kmax, tol, z_cap)?;
    print!("{report}");
    println!("max relative error = {:.4}", report.max_relative_error());
    match &out {
        Some(path) => {
            write_json(path, &report)?;
            let echo = json!({
                "sim": pattern,
                "theory": theory_path,
                "files": files,
                "kmax": kmax,
                "tol": tol,
                "z_cap": z_cap,
            });
            RunManifest::write(
                "compare",
                echo,
                vec![],
                started,
                vec![path.clone()],
                &sibling(path, ".manifest.json"),
            )?;
        }
        None => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(io_fail)?
        ),
    }
    if report.all_pass() {
        Ok(())
    } else {
        let failed: Vec<String> = report
            .rows
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.k.to_string())
            .collect();
        Err(Failure::CheckFailed(format!(
            "rows k = {} outside tolerance",
            failed.join(", ")
        )))
    }
}

pub fn oracle(args: OracleArgs, config: &ConfigFile) -> CmdResult {
    let started = Instant::now();
    let (weights, spec) = resolve_weights(args.weights, config)?;
    let nodes: usize = config
        .pick_opt(args.nodes, "nodes")
        .usage_err()?
        .ok_or_else(|| usage("missing --nodes"))?;
    if !(2..=MAX_ENUMERATION_NODES).contains(&nodes) {
        return Err(usage(format!(
            "--nodes must be in 2..={MAX_ENUMERATION_NODES}, got {nodes}"
        )));
    }
    let mc_runs: Option<usize> = config.pick_opt(args.mc_runs, "mc_runs").usage_err()?;
    let seed = resolve_seed(args.seed, config)?;
    let z_cap = config.pick(args.z_cap, "z_cap", 4.0).usage_err()?;
    let out: Option<PathBuf> = config.pick_opt(args.out, "out").usage_err()?;

    let exact = exact_enumeration(&spec, nodes)?;
    println!("n={nodes} histories={}", exact.history_count);
    let mut report = json!({ "exact": exact });
    let mut worst = 0.0f64;
    match mc_runs {
        None => {
            for (k, e) in exact.expected_counts.iter().enumerate() {
                println!("E[N_{k}]={e:.9}");
            }
        }
        Some(runs) => {
            let mc = monte_carlo_counts(&spec, nodes, runs, seed)?;
            let rows = oracle_agreement(&exact, &mc);
            println!(
                "{:>3} {:>14} {:>14} {:>12} {:>8}",
                "k", "E[N_k]", "MC mean", "stderr", "z"
            );
            for r in &rows {
                println!(
                    "{:>3} {:>14.9} {:>14.9} {:>12.3e} {:>8.2}",
                    r.k, r.exact, r.mc_mean, r.stderr, r.z_score
                );
                worst = worst.max(r.z_score.abs());
            }
            println!("max |z| = {worst:.3} (cap {z_cap})");
            report["monte_carlo"] =
                json!({ "runs": runs, "seed": seed, "z_cap": z_cap, "rows": rows });
        }
    }
    if let Some(path) = &out {
        write_json(path, &report)?;
        let echo = json!({ "weights": weights, "nodes": nodes, "mc_runs": mc_runs, "seed": seed, "z_cap": z_cap });
        let seeds = mc_runs.map(|_| vec![seed]).unwrap_or_default();
        RunManifest::write(
            "oracle",
            echo,
            seeds,
            started,
            vec![path.clone()],
            &sibling(path, ".manifest.json"),
        )?;
    }
    if worst > z_cap {
        return Err(Failure::CheckFailed(format!(
            "max |z| = {worst:.3} exceeds {z_cap}"
        )));
    }
    Ok(())
}

pub fn xproc(args: XprocArgs, config: &ConfigFile) -> CmdResult {
    let started = Instant::now();
    let (weights, spec) = resolve_weights(Some(args.weights), config)?;
    let paths: usize = config.pick(args.paths, "paths", 100_000).usage_err()?;
    let seed = resolve_seed(args.seed, config)?;
    let z_cap: f64 = config.pick(args.z_cap, "z_cap", 3.0).usage_err()?;
    let out: Option<PathBuf> = config.pick_opt(args.out, "out").usage_err()?;
    if paths < 2 {
        return Err(usage("--paths must be at least 2"));
    }

    let (report, echo, worst) = match args.check {
        XprocCheck::Martingale => {
            let r: f64 = config
                .pick_opt(args.r, "r")
                .usage_err()?
                .ok_or_else(|| usage("martingale check needs --r"))?;
            let tmax: f64 = config.pick(args.tmax, "tmax", 2.0).usage_err()?;
            let grid: usize = config.pick(args.grid, "grid", 4).usage_err()?;
            if !(r > 0.0) || !(tmax >= 0.0) || grid == 0 {
                return Err(usage("need --r > 0, --tmax >= 0 and --grid >= 1"));
            }
            let times: Vec<f64> = if tmax == 0.0 {
                vec![0.0]
            } else {
                (0..=grid).map(|i| tmax * i as f64 / grid as f64).collect()
            };
            let root = simulate_root_process(&spec, tmax, paths, seed)?;
            let points = martingale_check(&root, &spec, r, &times)?;
            println!(
                "{:>8} {:>14} {:>14} {:>12} {:>8} {:>10}",
                "t", "E f_r(X_t)", "e^{rt}", "stderr", "z", "normalized"
            );
            for p in &points {
                println!(
                    "{:>8.4} {:>14.6} {:>14.6} {:>12.3e} {:>8.2} {:>10.6}",
                    p.t, p.mc_mean_f_r, p.target, p.stderr, p.z, p.normalized
                );
            }
            let flatness = martingale_flatness(&points);
            println!("flatness z = {flatness:.3}");
            let worst = points.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
            (
                json!({ "check": "martingale", "points": points, "flatness_z": flatness }),
                json!({ "check": "martingale", "r": r, "tmax": tmax, "grid": grid }),
                worst,
            )
        }
        XprocCheck::Tau => {
            let ks: Vec<usize> = match config.pick_opt(args.k, "k").usage_err()? {
                Some(0) => return Err(usage("--k must be at least 1")),
                Some(k) => vec![k],
                None => (1..=5).collect(),
            };
            let lambda: f64 = match config.pick_opt(args.lambda, "lambda").usage_err()? {
                Some(l) => l,
                None => {
                    solve_theory(
                        &spec,
                        &SolveOptions {
                            c_kmax: 0,
                            ..Default::default()
                        },
                    )
                    .map_err(|e| Failure::Compute(e.into()))?
                    .lambda_star
                }
            };
            if !(lambda >= 0.0) {
                return Err(usage("--lambda must be >= 0"));
            }
            let k_top = *ks.last().expect("nonempty");
            let root = simulate_root_jumps(&spec, k_top, paths, seed)?;
            let rows = ks
                .iter()
                .map(|&k| tau_laplace_check(&root, &spec, lambda, k))
                .collect::<Result<Vec<_>, _>>()?;
            println!(
                "{:>3} {:>8} {:>14} {:>14} {:>12} {:>8}",
                "k", "lambda", "MC mean", "target", "stderr", "z"
            );
            for t in &rows {
                println!(
                    "{:>3} {:>8.4} {:>14.9} {:>14.9} {:>12.3e} {:>8.2}",
                    t.k, t.lambda, t.mc_mean, t.target, t.stderr, t.z
                );
            }
            let worst = rows.iter().map(|t| t.z.abs()).fold(0.0, f64::max);
            (
                json!({ "check": "tau", "rows": rows }),
                json!({ "check": "tau", "k": ks, "lambda": lambda }),
                worst,
            )
        }
    };
    println!("max |z| = {worst:.3} (cap {z_cap})");

    if let Some(path) = &out {
        write_json(path, &report)?;
        let mut echo = echo;
        echo["weights"] = json!(weights);
        echo["paths"] = json!(paths);
        echo["seed"] = json!(seed);
        echo["z_cap"] = json!(z_cap);
        RunManifest::write(
            "xproc",
            echo,
            vec![seed],
            started,
            vec![path.clone()],
            &sibling(path, ".manifest.json"),
        )?;
    }
    if worst > z_cap {
        return Err(Failure::CheckFailed(format!(
            "max |z| = {worst:.3} exceeds {z_cap}"
        )));
    }
    Ok(())
}
