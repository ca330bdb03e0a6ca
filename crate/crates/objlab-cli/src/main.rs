//! Command-line runner for the objlab verification suites and experiments.
//!
//! Exit codes: 0 when every hard assertion passes, 1 when one fails, 2 on
//! usage or configuration errors. Report files are byte-identical across
//! runs with the same configuration; floats are serialized at a fixed 17
//! significant digits and wall-clock timing goes to the console only.

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use objlab::mixture::{Fig1Config, QuadratureGrid};
use objlab::objectives::DesireDistribution;
use objlab::suite::{run_verification_suite, SuiteConfig, SuiteOutcome};
use objlab::testbeds::{
    bernoulli_bandit_policies, divergence_policy_by_grid, matching_bandit_policies,
    twostep_plan_scores, MatchingBandit, MatchingReport, Plan, PlanScore, TwoStepEnv,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "objlab", version, about = "Exact workbench for evidence and divergence control objectives")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Seed for the counter-based per-trial random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of random models per relation.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Residual threshold for identity checks.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Output directory (falls back to config file, then $OBJLAB_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every identity and bound check on seeded random models.
    Verify,
    /// Reproduce the two-panel Gaussian-mixture experiment.
    Fig1 {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Probability-matching bandit scenario.
    Bandit {
        /// Per-arm reward probabilities, comma separated.
        #[arg(long, value_delimiter = ',')]
        phi: Option<Vec<f64>>,
        /// Simplex grid points per unit for the search oracle.
        #[arg(long)]
        resolution: Option<usize>,
        /// Solve the Bernoulli-reward formulation instead of the
        /// deterministic-observation one.
        #[arg(long)]
        bernoulli: bool,
        /// Desire probability floor for the Bernoulli formulation.
        #[arg(long)]
        desire_floor: Option<f64>,
    },
    /// Two-step directed-exploration scenario.
    Explore {
        /// Accuracy of the step-one context signal, in [0.5, 1].
        #[arg(long)]
        alpha: Option<f64>,
        /// Desired probability of the rewarding outcome.
        #[arg(long)]
        desire_reward: Option<f64>,
    },
    /// Sequence-divergence decomposition sweep.
    Empower {
        /// Sample general past observations instead of point masses.
        #[arg(long)]
        general: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

/// Values read from `--config`; every field optional, flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    trials: Option<u64>,
    tolerance: Option<f64>,
    card_min: Option<usize>,
    card_max: Option<usize>,
    out_dir: Option<PathBuf>,
    format: Option<Format>,
    bandit: BanditFileConfig,
    explore: ExploreFileConfig,
    empower: EmpowerFileConfig,
    fig1: Fig1FileConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BanditFileConfig {
    phi: Option<Vec<f64>>,
    resolution: Option<usize>,
    desire_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExploreFileConfig {
    alpha: Option<f64>,
    desire_reward: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EmpowerFileConfig {
    trials: Option<u64>,
    delta_past: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Fig1FileConfig {
    steps: Option<usize>,
    learning_rate: Option<f64>,
    grid_lo: Option<f64>,
    grid_hi: Option<f64>,
    grid_points: Option<usize>,
}

/// Fully resolved run configuration (defaults < config file < flags).
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    seed: u64,
    trials: u64,
    tolerance: f64,
    card_min: usize,
    card_max: usize,
    out_dir: PathBuf,
    format: Format,
}

impl RunConfig {
    fn resolve(common: &CommonArgs, file: &FileConfig) -> Result<Self> {
        let out_dir = common
            .out
            .clone()
            .or_else(|| file.out_dir.clone())
            .or_else(|| std::env::var_os("OBJLAB_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        let cfg = Self {
            seed: common.seed.or(file.seed).unwrap_or(0),
            trials: common.trials.or(file.trials).unwrap_or(1000),
            tolerance: common.tolerance.or(file.tolerance).unwrap_or(1e-9),
            card_min: file.card_min.unwrap_or(2),
            card_max: file.card_max.unwrap_or(5),
            out_dir,
            format: common.format.or(file.format).unwrap_or(Format::Json),
        };
        if cfg.trials < 1 {
            anyhow::bail!("trials must be at least 1");
        }
        if !cfg.tolerance.is_finite() || cfg.tolerance <= 0.0 {
            anyhow::bail!("tolerance must be positive");
        }
        if cfg.card_min < 1 || cfg.card_max < cfg.card_min {
            anyhow::bail!("invalid cardinality range {}..={}", cfg.card_min, cfg.card_max);
        }
        Ok(cfg)
    }
}

/// serde_json formatter that prints every float with 17 significant digits,
/// so equal values always serialize to identical bytes.
struct Precision17;

impl serde_json::ser::Formatter for Precision17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.write_f64(writer, value as f64)
    }
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precision17);
    value.serialize(&mut ser).context("serializing report")?;
    buf.push(b'\n');
    Ok(buf)
}

fn write_report<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, to_json_bytes(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    version: &'a str,
    config: &'a RunConfig,
    reports: &'a [objlab::suite::SuiteEntry],
    aggregates: &'a objlab::suite::SuiteAggregates,
}

fn write_verify_csv(dir: &Path, outcome: &SuiteOutcome) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("suite_report.csv");
    let mut body = String::from("relation_id,trial,lhs,signed_sum,residual,pass\n");
    for e in &outcome.entries {
        body.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{}\n",
            e.report.relation_id, e.trial, e.report.lhs, e.report.signed_sum, e.report.residual,
            e.report.pass
        ));
    }
    std::fs::write(&path, body)?;
    Ok(path)
}

fn cmd_verify(cfg: &RunConfig) -> Result<bool> {
    let started = Instant::now();
    let suite_cfg = SuiteConfig {
        seed: cfg.seed,
        trials: cfg.trials,
        tolerance: cfg.tolerance,
        card_min: cfg.card_min,
        card_max: cfg.card_max,
    };
    let outcome = run_verification_suite(&suite_cfg)?;
    let path = match cfg.format {
        Format::Json => write_report(
            &cfg.out_dir,
            "suite_report.json",
            &VerifyReport {
                version: VERSION,
                config: cfg,
                reports: &outcome.entries,
                aggregates: &outcome.aggregates,
            },
        )?,
        Format::Csv => write_verify_csv(&cfg.out_dir, &outcome)?,
    };
    println!(
        "verify: {}/{} checks passed, {} probe violations, {:.2}s -> {}",
        outcome.aggregates.passed,
        outcome.aggregates.total,
        outcome.aggregates.report_only_violations,
        started.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(outcome.all_passed())
}

#[derive(Serialize)]
struct Fig1Report<'a> {
    version: &'a str,
    config: &'a Fig1Config,
    summary: &'a objlab::mixture::Fig1Summary,
    pass: bool,
}

fn cmd_fig1(cfg: &RunConfig, file: &Fig1FileConfig, steps: Option<usize>, lr: Option<f64>) -> Result<bool> {
    let started = Instant::now();
    let grid = QuadratureGrid::new(
        file.grid_lo.unwrap_or(-6.0),
        file.grid_hi.unwrap_or(11.0),
        file.grid_points.unwrap_or(4000),
    )?;
    let fig_cfg = Fig1Config {
        steps: steps.or(file.steps).unwrap_or(5000),
        learning_rate: lr.or(file.learning_rate).unwrap_or(0.05),
        grid,
        seed: cfg.seed,
        eval_points: 1_000_000,
    };
    let summary = objlab::mixture::fig1_experiment(&cfg.out_dir, &fig_cfg)?;
    let divergence_converged = summary.divergence.final_kl <= 0.01;
    let evidence_collapsed =
        summary.evidence.mass_near_mode >= 0.99 && summary.evidence.final_kl >= 1.0;
    let pass = divergence_converged && evidence_collapsed;
    write_report(
        &cfg.out_dir,
        "fig1_summary.json",
        &Fig1Report { version: VERSION, config: &fig_cfg, summary: &summary, pass },
    )?;
    println!(
        "fig1: divergence KL {:.4} (target <= 0.01), evidence mass near mode {:.4} (target >= 0.99), evidence KL {:.2} (target >= 1), {:.2}s",
        summary.divergence.final_kl,
        summary.evidence.mass_near_mode,
        summary.evidence.final_kl,
        started.elapsed().as_secs_f64(),
    );
    if !divergence_converged {
        eprintln!("fig1: divergence fit not converged (KL {:.4})", summary.divergence.final_kl);
    }
    if !evidence_collapsed {
        eprintln!("fig1: evidence fit did not collapse onto the desire mode");
    }
    Ok(pass)
}

#[derive(Serialize)]
struct BanditReport<'a> {
    version: &'a str,
    config: BanditEcho,
    report: &'a MatchingReport,
    /// Grid-search oracle policy for the divergence objective and its total
    /// variation distance to the reported policy.
    grid_policy: Option<Vec<f64>>,
    grid_total_variation: Option<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct BanditEcho {
    seed: u64,
    phi: Vec<f64>,
    resolution: usize,
    bernoulli: bool,
    desire_floor: f64,
}

fn cmd_bandit(
    cfg: &RunConfig,
    file: &BanditFileConfig,
    phi: Option<Vec<f64>>,
    resolution: Option<usize>,
    bernoulli: bool,
    desire_floor: Option<f64>,
) -> Result<bool> {
    let phi = phi.or_else(|| file.phi.clone()).unwrap_or_else(|| vec![0.9, 0.1]);
    let resolution = resolution.or(file.resolution).unwrap_or(1000);
    let desire_floor = desire_floor.or(file.desire_floor).unwrap_or(0.01);
    let echo = BanditEcho {
        seed: cfg.seed,
        phi: phi.clone(),
        resolution,
        bernoulli,
        desire_floor,
    };

    let (report, grid_policy, grid_tv, pass) = if bernoulli {
        // Desire over (arm, reward): reward bit split 1 - floor / floor,
        // uniform over arms given the reward.
        let k = phi.len();
        let mut desire = Vec::with_capacity(2 * k);
        for _ in 0..k {
            desire.push(desire_floor / k as f64);
            desire.push((1.0 - desire_floor) / k as f64);
        }
        let desire = DesireDistribution::from_probs(desire)?;
        let report = bernoulli_bandit_policies(&phi, &desire, resolution)?;
        let interior = report.policy_divergence.iter().all(|&w| w > 0.0);
        let vertex = report.policy_evidence.iter().any(|&w| w >= 1.0 - 1e-9);
        (report, None, None, interior && vertex)
    } else {
        let bandit = MatchingBandit::new(phi.clone())?;
        let report = matching_bandit_policies(&bandit)?;
        let grid = divergence_policy_by_grid(&bandit, resolution)?;
        let tv: f64 = 0.5
            * grid
                .iter()
                .zip(&report.policy_divergence)
                .map(|(&a, &b)| (a - b).abs())
                .sum::<f64>();
        let matched = report.matching_index_divergence >= 1.0 - 2e-3
            && tv <= 2.0 / resolution as f64
            && report.policy_evidence.iter().any(|&w| w >= 0.999);
        (report, Some(grid), Some(tv), matched)
    };

    write_report(
        &cfg.out_dir,
        "bandit_report.json",
        &BanditReport {
            version: VERSION,
            config: echo,
            report: &report,
            grid_policy,
            grid_total_variation: grid_tv,
            pass,
        },
    )?;
    println!(
        "bandit: divergence policy {:?} (matching index {:.4}), evidence policy {:?}",
        report.policy_divergence, report.matching_index_divergence, report.policy_evidence
    );
    Ok(pass)
}

#[derive(Serialize)]
struct ExploreReport<'a> {
    version: &'a str,
    config: ExploreEcho,
    scores: &'a [PlanScore],
    selected_plan: Plan,
    pass: bool,
}

#[derive(Serialize)]
struct ExploreEcho {
    alpha: f64,
    desire_reward: f64,
    tolerance: f64,
}

fn cmd_explore(
    cfg: &RunConfig,
    file: &ExploreFileConfig,
    alpha: Option<f64>,
    desire_reward: Option<f64>,
) -> Result<bool> {
    let alpha = alpha.or(file.alpha).unwrap_or(1.0);
    let desire_reward = desire_reward.or(file.desire_reward).unwrap_or(0.99);
    let env = TwoStepEnv::new(alpha)?;
    let desire = DesireDistribution::from_probs(vec![1.0 - desire_reward, desire_reward])?;
    let scores = twostep_plan_scores(&env, &desire)?;

    let selected = scores
        .iter()
        .min_by(|a, b| a.divergence.partial_cmp(&b.divergence).expect("finite scores"))
        .expect("four plans")
        .plan;
    let residuals_ok = scores.iter().all(|s| s.split_residual < cfg.tolerance);
    let check = scores
        .iter()
        .find(|s| s.plan == Plan::CheckThenMatch)
        .expect("plan enumerated");
    let best_blind = scores
        .iter()
        .filter(|s| !s.plan.checks())
        .map(|s| s.divergence)
        .fold(f64::INFINITY, f64::min);
    let spread = scores
        .iter()
        .map(|s| s.divergence)
        .fold(f64::NEG_INFINITY, f64::max)
        - scores.iter().map(|s| s.divergence).fold(f64::INFINITY, f64::min);
    let check_strictly_best = check.divergence < best_blind - 1e-12;
    let all_tied = spread < 1e-9;
    let pass = residuals_ok && (check_strictly_best || all_tied);

    write_report(
        &cfg.out_dir,
        "explore_report.json",
        &ExploreReport {
            version: VERSION,
            config: ExploreEcho { alpha, desire_reward, tolerance: cfg.tolerance },
            scores: &scores,
            selected_plan: selected,
            pass,
        },
    )?;
    println!(
        "explore: selected {:?} (divergence {:.4}, info gain {:.4})",
        selected, check.divergence, check.info_gain
    );
    Ok(pass)
}

#[derive(Serialize)]
struct EmpowerReport<'a> {
    version: &'a str,
    config: EmpowerEcho,
    reports: &'a [objlab::suite::SuiteEntry],
    aggregates: objlab::suite::SuiteAggregates,
    pass: bool,
}

#[derive(Serialize)]
struct EmpowerEcho {
    seed: u64,
    trials: u64,
    tolerance: f64,
    delta_past: bool,
}

fn cmd_empower(cfg: &RunConfig, file: &EmpowerFileConfig, general: bool) -> Result<bool> {
    let delta_past = if general { false } else { file.delta_past.unwrap_or(true) };
    let trials = file.trials.unwrap_or(cfg.trials);
    let mut entries = Vec::new();
    for trial in 0..trials {
        let mut rng = objlab::sampling::trial_rng(cfg.seed, trial);
        let (seq, desire) = objlab::sampling::random_sequence_model(&mut rng, 2, 3, delta_past);
        let mut report = objlab::empowerment::sequence_divergence_decomposition(&seq, &desire)?;
        report.pass = report.residual < cfg.tolerance
            && report.condition_flags.get("never_undercounts").copied().unwrap_or(false);
        entries.push(objlab::suite::SuiteEntry { trial, report });
    }
    let mut outcome = SuiteOutcome { entries, aggregates: Default::default() };
    outcome.aggregates = outcome.recount();
    write_report(
        &cfg.out_dir,
        "empower_report.json",
        &EmpowerReport {
            version: VERSION,
            config: EmpowerEcho {
                seed: cfg.seed,
                trials,
                tolerance: cfg.tolerance,
                delta_past,
            },
            reports: &outcome.entries,
            aggregates: outcome.aggregates.clone(),
            pass: outcome.all_passed(),
        },
    )?;
    println!(
        "empower: {}/{} decompositions within tolerance (delta past: {})",
        outcome.aggregates.passed, outcome.aggregates.total, delta_past
    );
    Ok(outcome.all_passed())
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let file = load_file_config(cli.common.config.as_deref())?;
    let cfg = RunConfig::resolve(&cli.common, &file)?;
    match &cli.command {
        Command::Verify => cmd_verify(&cfg),
        Command::Fig1 { steps, learning_rate } => cmd_fig1(&cfg, &file.fig1, *steps, *learning_rate),
        Command::Bandit { phi, resolution, bernoulli, desire_floor } => cmd_bandit(
            &cfg,
            &file.bandit,
            phi.clone(),
            *resolution,
            *bernoulli,
            *desire_floor,
        ),
        Command::Explore { alpha, desire_reward } => {
            cmd_explore(&cfg, &file.explore, *alpha, *desire_reward)
        }
        Command::Empower { general } => cmd_empower(&cfg, &file.empower, *general),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
