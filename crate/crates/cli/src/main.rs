use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num_traits::{Signed, Zero};

use encctl::canon::{rcf_transform, verify_rcf};
use encctl::linalg::{format_rational, RatMatrix, RatPoly};
use encctl::rlwe::{keygen, EncParams};
use encctl::simbench::{
    bounded_without_growth, export_csv, run_closed_loop, selfcheck, timing_report, CaseId,
    Manifest, Mode, RunConfig, RunRecord, RunTable, TimingRow, TimingStats,
};
use encctl::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_OVERFLOW: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "encctl",
    version,
    about = "Encrypted linear controllers over Ring-LWE"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a secret key container.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Rational canonical form of a matrix file (`rows cols` then entries; `-` reads stdin).
    Rcf {
        #[arg(default_value = "-")]
        input: String,
    },
    /// Simulate one closed loop and write its trajectory as CSV.
    Run {
        #[arg(long, value_parser = parse_case, required_unless_present = "replay")]
        case: Option<CaseId>,
        #[arg(long, value_parser = parse_mode, default_value = "proposed")]
        mode: Mode,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Decrypt around every step and check the one-step perturbation bounds.
        #[arg(long)]
        track: bool,
        /// Rerun from the manifest of an earlier CSV or manifest file.
        #[arg(long, conflicts_with_all = ["case", "steps"])]
        replay: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Per-step timing of both methods on both cases.
    Bench {
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Run the reduced invariant suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone, Copy)]
struct ParamArgs {
    /// Ring degree N (power of two).
    #[arg(long, default_value_t = 1 << 13)]
    ring_degree: usize,
    /// Bit size of the ciphertext modulus q.
    #[arg(long, default_value_t = 56)]
    log_q: u32,
    /// Bit size of the special modulus P.
    #[arg(long, default_value_t = 51)]
    log_p: u32,
}

impl ParamArgs {
    fn build(self) -> encctl::Result<Arc<EncParams>> {
        EncParams::with_bits(self.ring_degree, self.log_q, self.log_p)
    }
}

fn parse_case(s: &str) -> Result<CaseId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s.parse::<Mode>() {
        Ok(m) => Ok(m),
        Err(e) => Err(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e @ Error::Overflow { .. }) => {
            eprintln!("encctl: {e}");
            ExitCode::from(EXIT_OVERFLOW)
        }
        Err(e) => {
            eprintln!("encctl: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn dispatch(cmd: Command) -> encctl::Result<ExitCode> {
    match cmd {
        Command::Keygen { out, seed, params } => {
            let params = params.build()?;
            let sk = keygen(&params, seed);
            fs::write(&out, sk.to_container())?;
            println!(
                "secret key for N = {}, q = {}, P = {} written to {}",
                params.degree(),
                params.q(),
                params.p(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Rcf { input } => rcf(&input),
        Command::Run {
            case,
            mode,
            steps,
            seed,
            out,
            track,
            replay,
            params,
        } => {
            let cfg = match replay {
                Some(path) => {
                    RunConfig::from_manifest(&read_manifest(&fs::read_to_string(path)?)?)?
                }
                None => {
                    let case = case.expect("clap requires --case without --replay");
                    let mut cfg = RunConfig::new(case, mode);
                    cfg.steps = steps.unwrap_or(encctl::simbench::DEFAULT_HORIZON);
                    cfg.seed = seed;
                    cfg.params = params.build()?;
                    cfg.track = track;
                    cfg
                }
            };
            run(&cfg, out)
        }
        Command::Bench {
            steps,
            repeats,
            warmup,
            seed,
            params,
        } => bench(steps, repeats, warmup, seed, params),
        Command::Verify { seed } => {
            let results = selfcheck(seed);
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            Ok(if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INVARIANT)
            })
        }
    }
}

/// The `# key=value` preamble of an exported CSV, or a plain manifest file.
fn read_manifest(text: &str) -> encctl::Result<Manifest> {
    if text.starts_with('#') {
        let preamble: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
        Manifest::from_text(&preamble.join("\n"))
    } else {
        Manifest::from_text(text)
    }
}

fn format_poly(p: &RatPoly) -> String {
    let mut terms = Vec::new();
    for (k, c) in p.coeffs().iter().enumerate().rev() {
        if c.is_zero() {
            continue;
        }
        let mag = format_rational(&c.abs());
        let sign = if c.is_negative() { "-" } else { "+" };
        let body = match (k, mag.as_str()) {
            (0, _) => mag.clone(),
            (1, "1") => "s".to_string(),
            (1, _) => format!("{mag}s"),
            (_, "1") => format!("s^{k}"),
            _ => format!("{mag}s^{k}"),
        };
        terms.push((sign, body));
    }
    if terms.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, (sign, body)) in terms.iter().enumerate() {
        match (i, *sign) {
            (0, "-") => out.push('-'),
            (0, _) => {}
            (_, s) => out.push_str(&format!(" {s} ")),
        }
        out.push_str(body);
    }
    out
}

fn rcf(input: &str) -> encctl::Result<ExitCode> {
    let text = if input == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(input)?
    };
    let f = RatMatrix::parse_text(&text)?;
    let rcf = rcf_transform(&f)?;
    println!("kappa {}", rcf.kappa);
    println!(
        "r {}",
        rcf.r
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    );
    for (i, b) in rcf.blocks.iter().enumerate() {
        println!("block {i}: {}", format_poly(b));
    }
    for (i, c) in rcf.f_prime_cols.iter().enumerate() {
        println!(
            "column {i}: {}",
            c.iter().map(format_rational).collect::<Vec<_>>().join(" ")
        );
    }
    print!("F_bar\n{}", rcf.f_bar.to_text());
    print!("T\n{}", rcf.t.to_text());
    let report = verify_rcf(&f, &rcf);
    if report.all_pass() {
        println!("checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in &report.failures {
            println!("check failed: {failure}");
        }
        Ok(ExitCode::from(EXIT_INVARIANT))
    }
}

fn summarize(run: &RunRecord) {
    let errs = run.errors();
    let max_err = errs.iter().copied().fold(0.0, f64::max);
    let stats = TimingStats::from_run(run, 0).ok();
    println!(
        "case {} mode {}: {} steps, max |u - u_nom| {:.3e}, max margin {:.4} (step {})",
        run.config.case,
        run.config.mode,
        run.steps.len(),
        max_err,
        run.margin.max_margin,
        run.margin.worst_step
    );
    if let Some(s) = stats {
        println!(
            "time per step: mean {:.3} ms, max {:.3} ms, std {:.3} ms; external products per step: {}",
            s.mean,
            s.max,
            s.std,
            s.max_ext_prod()
        );
    }
    if let Some((g, k)) = run.storage {
        println!("stored: {g} gadget ciphertexts, {k} automorphism keys");
    }
    if let Some(t) = &run.tracking {
        println!(
            "one-step residuals: state {:.3e} (bound {:.3e}, {} over), output {:.3e} (bound {:.3e}, {} over)",
            t.max_state_residual, t.bounds.delta_z, t.state_violations, t.max_output_residual, t.bounds.delta_u, t.output_violations
        );
    }
    if run.steps.len() >= 400 {
        println!(
            "error series bounded without growth: {}",
            bounded_without_growth(&errs, 200)
        );
    }
    let max_u = run
        .steps
        .iter()
        .flat_map(|s| s.u.iter())
        .fold(0.0f64, |a, b| a.max(b.abs()));
    println!("max |u| {max_u:.4}");
}

fn run(cfg: &RunConfig, out: Option<PathBuf>) -> encctl::Result<ExitCode> {
    let case = cfg.case.build()?;
    let record = run_closed_loop(&case, cfg)?;
    if let Some(path) = &out {
        export_csv(&record, path)?;
        println!("wrote {}", path.display());
    }
    summarize(&record);
    Ok(match &record.tracking {
        Some(t) if !t.ok() => ExitCode::from(EXIT_INVARIANT),
        _ => ExitCode::SUCCESS,
    })
}

fn bench(
    steps: usize,
    repeats: usize,
    warmup: usize,
    seed: u64,
    params: ParamArgs,
) -> encctl::Result<ExitCode> {
    if steps <= warmup || repeats == 0 {
        return Err(Error::InvalidArgument(format!(
            "need steps > warmup and at least one repeat (steps {steps}, warmup {warmup}, repeats {repeats})"
        )));
    }
    let params = params.build()?;
    let mut table = RunTable::default();
    for case in [CaseId::One, CaseId::Two] {
        let sim = case.build()?;
        for mode in [Mode::Baseline, Mode::Proposed] {
            let mut times = Vec::new();
            let mut counts = Vec::new();
            for r in 0..repeats {
                let mut cfg = RunConfig::new(case, mode);
                cfg.steps = steps;
                cfg.seed = seed + r as u64;
                cfg.params = params.clone();
                let run = run_closed_loop(&sim, &cfg)?;
                let report = timing_report(std::slice::from_ref(&run), warmup)?;
                let stats = &report.rows[0].stats;
                times.extend(run.steps[warmup..].iter().map(|s| s.elapsed_ms));
                counts.extend(stats.ext_prod_counts.iter().copied());
            }
            let mut stats = TimingStats::from_samples(&times)?;
            stats.ext_prod_counts = counts;
            table.rows.push(TimingRow {
                case: case.to_string(),
                method: mode.to_string(),
                stats,
            });
        }
    }
    print!("{table}");
    for case in ["1", "2"] {
        if let (Some(b), Some(p)) = (table.find(case, "baseline"), table.find(case, "proposed")) {
            println!(
                "case {case}: proposed/baseline mean ratio {:.3}",
                p.mean / b.mean
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
