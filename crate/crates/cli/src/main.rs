//! `twr-ee` command-line front end.
//!
//! Exit status: 0 success, 1 configuration or I/O error, 2 infeasible
//! instance, 3 solver failure or non-convergence. Errors print one line of
//! the form `twr-ee: <kind>: <message>` on stderr.

mod grid;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twr_ee::experiments::{run_plan, Baseline, ExperimentPlan, PlanKind, PlanOutput};
use twr_ee::matprops::run_property_suites;
use twr_ee::solver::{alternate, default_init};
use twr_ee::{generate_channels, ChannelMode, Error, Settings};

use grid::GridSpec;
use plot::{LineChart, Series};

#[derive(Parser)]
#[command(name = "twr-ee", version, about = "Energy-efficient SWIPT two-way relay precoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel realization and print the solution.
    Solve(Common),
    /// Mean EE of every scheme over a power or rate-floor grid.
    Sweep(PlanArgs),
    /// Fraction of realizations with a feasible point over a grid.
    Feasibility(PlanArgs),
    /// EE traces of several starts on one channel.
    Convergence(PlanArgs),
    /// Single start against best-of-k starts over an SNR grid.
    Multistart(MultistartArgs),
    /// Randomized checks of the matrix trace and determinant bounds.
    PropsCheck(PropsArgs),
}

#[derive(Args)]
struct Common {
    /// TOML settings file, or `defaults`.
    #[arg(long, default_value = "defaults")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Channel seed for `solve`, master seed for plans.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one setting, e.g. `rt_min=2` or `solver.dinkelbach_tol=1e-8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Channel model: shared or iid.
    #[arg(long, default_value = "shared")]
    mode: String,
    /// Also write SVG line charts.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    /// Grid as `[pmax|rt_min=]start:stop:step`.
    #[arg(long)]
    grid: Option<String>,
    /// Realizations per grid value (starts, for convergence).
    #[arg(long)]
    realizations: Option<usize>,
}

#[derive(Args)]
struct MultistartArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Starts per realization.
    #[arg(long, default_value_t = 100)]
    starts: usize,
}

#[derive(Args)]
struct PropsArgs {
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Command failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Config(_) | Error::Dimension(_) => (1, "config"),
            Error::Io { .. } | Error::Csv(_) => (1, "io"),
            Error::Infeasible(_) => (2, "infeasible"),
            Error::NotConverged { .. } => (3, "not-converged"),
            Error::LineSearch | Error::NotPositiveSemidefinite { .. } | Error::Singular { .. } => (3, "numerical"),
        };
        let message = match e {
            Error::Config(m) | Error::Dimension(m) | Error::Infeasible(m) => m,
            other => other.to_string(),
        };
        Self { code, kind, message }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

fn settings(common: &Common) -> Result<Settings, Error> {
    let mut s = Settings::load(&common.config)?;
    for o in &common.overrides {
        s.apply_assignment(o)?;
    }
    s.validate()?;
    Ok(s)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn solve(common: &Common) -> Result<(), Failure> {
    let s = settings(common)?;
    let mode: ChannelMode = common.mode.parse()?;
    let seed = common.seed.unwrap_or(0);
    let ch = generate_channels(&s.network, seed, mode)?;
    let init = default_init(&ch.gains(), &s.network);
    let sol = alternate(&ch, &s.network, &s.solver, &init)?;

    create_out(&common.out)?;
    let trace_path = common.out.join("trace.csv");
    sol.trace.write_csv_file(&trace_path)?;
    if common.plot {
        let mut points = vec![(0.0, sol.trace.initial_ee)];
        points.extend(sol.trace.records.iter().map(|r| (r.iteration as f64, r.ee)));
        let chart = LineChart {
            title: format!("EE per outer iteration (seed {seed})"),
            x_label: "outer iteration".into(),
            y_label: "EE [bits/Hz/J]".into(),
            series: vec![Series {
                label: "proposed".into(),
                points,
            }],
        };
        write_file(&common.out.join("trace.svg"), &chart.render())?;
    }

    let r = &sol.report;
    println!("seed            {seed} ({mode})");
    println!("ee              {:.9} bits/Hz/J", sol.ee);
    println!("alpha           {:.9}", sol.point.alpha);
    println!("rate1           {:.9} bits/s/Hz", sol.rates.0);
    println!("rate2           {:.9} bits/s/Hz", sol.rates.1);
    println!("lambda_q1       {:?}", sol.point.lambda_q1);
    println!("lambda_q2       {:?}", sol.point.lambda_q2);
    println!("lambda_qr       {:?}", sol.point.lambda_qr);
    for (name, u) in [
        ("slack_p1", &r.power_tr1),
        ("slack_p2", &r.power_tr2),
        ("slack_pr", &r.power_relay),
        ("slack_rate1", &r.rate_tr1),
        ("slack_rate2", &r.rate_tr2),
        ("slack_eh", &r.energy_harvesting),
    ] {
        println!("{name:<15} {:.3e}", u.slack);
    }
    println!("outer_iters     {}", sol.outer_iterations());
    println!("dinkelbach      {}", sol.trace.dinkelbach_total());
    println!("exact_precoders {}", sol.precoders.exact);
    println!("trace           {}", trace_path.display());
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.outer_iterations(),
        }
        .into());
    }
    Ok(())
}

fn plan_from(args: &PlanArgs, kind: PlanKind, grid: Vec<f64>) -> Result<ExperimentPlan, Error> {
    let mut plan = ExperimentPlan::new(kind, grid);
    if let Some(n) = args.realizations {
        plan.n_realizations = n;
    }
    plan.master_seed = args.common.seed.unwrap_or(0);
    plan.channel_mode = args.common.mode.parse()?;
    plan.validate()?;
    Ok(plan)
}

fn run_and_write(args: &PlanArgs, plan: &ExperimentPlan) -> Result<(Settings, PlanOutput), Failure> {
    let s = settings(&args.common)?;
    let out = run_plan(plan, &s.network, &s.solver)?;
    for path in out.write_dir(&args.common.out)? {
        println!("wrote {}", path.display());
    }
    Ok((s, out))
}

fn ee_chart(out: &PlanOutput, x_label: &str) -> LineChart {
    let series = out
        .plan
        .baselines
        .iter()
        .map(|&b| Series {
            label: b.name().into(),
            points: out
                .aggregates
                .iter()
                .filter(|a| a.baseline == b)
                .filter_map(|a| Some((a.sweep_value, a.mean_ee?)))
                .collect(),
        })
        .collect();
    LineChart {
        title: "mean EE over feasible realizations".into(),
        x_label: x_label.into(),
        y_label: "EE [bits/Hz/J]".into(),
        series,
    }
}

fn print_aggregates(out: &PlanOutput) {
    println!("{:>10} {:>20} {:>9} {:>12} {:>10} {:>8}", "value", "baseline", "feasible", "mean_ee", "ci95", "iters");
    for a in &out.aggregates {
        let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
        println!(
            "{:>10} {:>20} {:>9} {:>12} {:>10} {:>8}",
            a.sweep_value,
            a.baseline.name(),
            format!("{}/{}", a.n_feasible, a.n_total),
            f(a.mean_ee, 6),
            f(a.ci95_ee, 6),
            f(a.mean_outer_iters, 2),
        );
    }
}

fn sweep(args: &PlanArgs) -> Result<(), Failure> {
    let g = GridSpec::parse(args.grid.as_deref().unwrap_or("pmax=2:8:2"))?;
    let kind = g.kind(false)?;
    let plan = plan_from(args, kind, g.values)?;
    let (_, out) = run_and_write(args, &plan)?;
    print_aggregates(&out);
    if args.common.plot {
        write_file(&args.common.out.join("ee.svg"), &ee_chart(&out, kind.sweep_param()).render())?;
    }
    Ok(())
}

fn feasibility(args: &PlanArgs) -> Result<(), Failure> {
    let g = GridSpec::parse(args.grid.as_deref().unwrap_or("rt_min=1:12:1"))?;
    let kind = g.kind(true)?;
    let plan = plan_from(args, kind, g.values)?;
    let (_, out) = run_and_write(args, &plan)?;
    println!("{:>10} {:>9} {:>9} {:>18} {:>10}", "value", "feasible", "fraction", "wilson95", "ergodic");
    for r in &out.feasibility {
        println!(
            "{:>10} {:>9} {:>9.3} {:>18} {:>10}",
            r.sweep_value,
            format!("{}/{}", r.n_feasible, r.n_total),
            r.fraction,
            format!("[{:.3}, {:.3}]", r.wilson_low, r.wilson_high),
            if r.ergodically_infeasible { "infeasible" } else { "ok" },
        );
    }
    if args.common.plot {
        let chart = LineChart {
            title: "feasibility probability".into(),
            x_label: kind.sweep_param().into(),
            y_label: "fraction feasible".into(),
            series: vec![Series {
                label: "proposed".into(),
                points: out.feasibility.iter().map(|r| (r.sweep_value, r.fraction)).collect(),
            }],
        };
        write_file(&args.common.out.join("feasibility.svg"), &chart.render())?;
    }
    Ok(())
}

fn convergence(args: &PlanArgs) -> Result<(), Failure> {
    let s = settings(&args.common)?;
    let grid = match &args.grid {
        Some(spec) => {
            let g = GridSpec::parse(spec)?;
            if !matches!(g.param.as_deref(), None | Some("pmax" | "p_max")) {
                return Err(Error::Config("convergence grid must be over pmax".into()).into());
            }
            g.values
        }
        None => vec![s.network.p1_max],
    };
    let plan = plan_from(args, PlanKind::Convergence, grid)?;
    let (_, out) = run_and_write(args, &plan)?;
    for t in &out.traces {
        println!(
            "p_max {} start {:>3}: {} iterations, final EE {:.9}, monotone {}",
            t.sweep_value,
            t.start,
            t.ee.len() - 1,
            t.final_ee().unwrap_or(f64::NAN),
            t.is_monotone(1e-9)
        );
    }
    for &v in &plan.grid {
        let finals: Vec<f64> = out.traces.iter().filter(|t| t.sweep_value == v).filter_map(|t| t.final_ee()).collect();
        if let (Some(hi), Some(lo)) = (
            finals.iter().copied().reduce(f64::max),
            finals.iter().copied().reduce(f64::min),
        ) {
            println!("p_max {v}: relative spread of final EE {:.3e}", (hi - lo) / hi);
        }
    }
    if args.common.plot {
        let chart = LineChart {
            title: "EE per outer iteration".into(),
            x_label: "outer iteration".into(),
            y_label: "EE [bits/Hz/J]".into(),
            series: out
                .traces
                .iter()
                .map(|t| Series {
                    label: format!("start {}", t.start),
                    points: t.ee.iter().enumerate().map(|(k, &e)| (k as f64, e)).collect(),
                })
                .collect(),
        };
        write_file(&args.common.out.join("convergence.svg"), &chart.render())?;
    }
    Ok(())
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn multistart(args: &MultistartArgs) -> Result<(), Failure> {
    let g = GridSpec::parse(args.plan.grid.as_deref().unwrap_or("snr=10:40:30"))?;
    if !matches!(g.param.as_deref(), None | Some("snr")) {
        return Err(Error::Config("multistart grid must be over snr".into()).into());
    }
    let mut plan = plan_from(&args.plan, PlanKind::MultistartCompare, g.values)?;
    plan.multistart_k = args.starts;
    plan.validate()?;
    let (_, out) = run_and_write(&args.plan, &plan)?;
    print_aggregates(&out);
    for &v in &plan.grid {
        let at = |b: Baseline| out.records.iter().filter(move |r| r.sweep_value == v && r.baseline == b);
        let gaps: Vec<f64> = at(Baseline::Proposed)
            .zip(at(Baseline::Multistart))
            .filter_map(|(s, m)| Some((m.ee? - s.ee?) / m.ee?))
            .collect();
        if let Some(m) = median(gaps) {
            println!("snr {v}: median relative gap single vs best-of-{} {m:.3e}", plan.multistart_k);
        }
    }
    if args.plan.common.plot {
        write_file(&args.plan.common.out.join("ee.svg"), &ee_chart(&out, "snr").render())?;
    }
    Ok(())
}

fn props_check(args: &PropsArgs) -> Result<(), Failure> {
    let reports = run_property_suites(args.instances, args.dim, args.seed)?;
    let mut failed = 0;
    for r in &reports {
        println!(
            "{:<28} {} passed {} failed (worst excess {:.3e})",
            r.name,
            r.instances - r.violations,
            r.violations,
            r.worst_excess
        );
        failed += r.violations;
    }
    if failed > 0 {
        return Err(Failure {
            code: 1,
            kind: "property",
            message: format!("{failed} bound violations"),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for infeasibility
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("twr-ee: usage: {line}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Solve(c) => solve(c),
        Command::Sweep(a) => sweep(a),
        Command::Feasibility(a) => feasibility(a),
        Command::Convergence(a) => convergence(a),
        Command::Multistart(a) => multistart(a),
        Command::PropsCheck(a) => props_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("twr-ee: {}: {}", f.kind, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
