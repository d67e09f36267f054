//! Command-line surface: fan validation, dual families, orbit posets,
//! transition reports, filtration compatibility, and the averaging demo.
//!
//! Exit codes: 0 pass, 1 domain failure (invalid fan, incompatible data,
//! failed pipeline), 2 input error (unreadable or malformed files, bad
//! configuration). A JSON config file named by `TTM_CONFIG` supplies
//! defaults; command-line flags win.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ttm_core::equivariance::pipeline::{self, PipelineConfig};
use ttm_core::fan::{Cone, Fan, ValidateOptions};
use ttm_core::io;
use ttm_core::klyachko::{check_all, ConeOutcome, GradingCertificate, KlyachkoData, LedgerWitness};
use ttm_core::manifold::{orbit_poset, transition, ChartPoint};
use ttm_core::rring::{ge_s, RScalar};
use ttm_core::scalar::{ExactField, GaussRational};
use ttm_core::BigRational;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "ttm", version, about = "Topological toric manifold toolkit")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// RNG seed for sampling checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Quadrature nodes per circle (power of two, ≥ 8).
    #[arg(long, global = true)]
    quadrature_n: Option<usize>,
    /// Cocycle residual tolerance.
    #[arg(long, global = true)]
    tol_cocycle: Option<f64>,
    /// Averaging equivariance tolerance.
    #[arg(long, global = true)]
    tol_equivariance: Option<f64>,
    /// Character regression tolerance.
    #[arg(long, global = true)]
    tol_regression: Option<f64>,
    /// Require completeness for fan acceptance.
    #[arg(long, global = true)]
    strict_complete: bool,
    /// Check every cone, not only the maximal ones.
    #[arg(long, global = true)]
    all_cones: bool,
    /// Exact field for filtration data.
    #[arg(long, global = true, value_enum)]
    field: Option<FieldChoice>,
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Default, serde::Deserialize)]
enum FieldChoice {
    #[default]
    #[value(name = "Q")]
    #[serde(rename = "Q")]
    Q,
    #[value(name = "Q(i)")]
    #[serde(rename = "Q(i)")]
    Qi,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a fan file against the fan axioms.
    Validate { fan: PathBuf },
    /// Dual family of a maximal cone.
    Dual {
        fan: PathBuf,
        /// Comma-separated ray ids, e.g. 1,2.
        #[arg(long)]
        cone: String,
    },
    /// Orbit poset of the fan.
    Orbits { fan: PathBuf },
    /// Transition exponent matrices and a cocycle residual report.
    Transitions { fan: PathBuf },
    /// Decide filtration-data compatibility.
    CheckKlyachko { data: PathBuf },
    /// Run the averaging pipeline on a setup file.
    AverageDemo { setup: PathBuf },
}

/// Defaults that `TTM_CONFIG` may override before flags apply.
#[derive(serde::Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    quadrature_n: Option<usize>,
    tol_cocycle: Option<f64>,
    tol_equivariance: Option<f64>,
    tol_regression: Option<f64>,
    strict_complete: Option<bool>,
    all_cones: Option<bool>,
    field: Option<FieldChoice>,
}

struct Config {
    seed: u64,
    quadrature_n: Option<usize>,
    tol_cocycle: f64,
    tol_equivariance: f64,
    tol_regression: f64,
    strict_complete: bool,
    all_cones: bool,
    field: FieldChoice,
    json: bool,
}

impl Config {
    fn resolve(overrides: &Overrides) -> Result<Self> {
        let file = match std::env::var_os("TTM_CONFIG") {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading TTM_CONFIG file {path:?}"))?;
                serde_json::from_str::<FileConfig>(&text).context("parsing TTM_CONFIG")?
            }
            None => FileConfig::default(),
        };
        let cfg = Self {
            seed: overrides.seed.or(file.seed).unwrap_or(1),
            quadrature_n: overrides.quadrature_n.or(file.quadrature_n),
            tol_cocycle: overrides.tol_cocycle.or(file.tol_cocycle).unwrap_or(1e-9),
            tol_equivariance: overrides
                .tol_equivariance
                .or(file.tol_equivariance)
                .unwrap_or(1e-9),
            tol_regression: overrides
                .tol_regression
                .or(file.tol_regression)
                .unwrap_or(1e-6),
            strict_complete: overrides.strict_complete || file.strict_complete.unwrap_or(false),
            all_cones: overrides.all_cones || file.all_cones.unwrap_or(false),
            field: overrides.field.or(file.field).unwrap_or_default(),
            json: overrides.json,
        };
        for (name, tol) in [
            ("tol-cocycle", cfg.tol_cocycle),
            ("tol-equivariance", cfg.tol_equivariance),
            ("tol-regression", cfg.tol_regression),
        ] {
            if tol.is_nan() || tol <= 0.0 {
                return Err(anyhow!("{name} must be positive, got {tol}"));
            }
        }
        if let Some(n) = cfg.quadrature_n {
            if n < 8 || !n.is_power_of_two() {
                return Err(anyhow!("quadrature-n must be a power of two ≥ 8, got {n}"));
            }
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match Config::resolve(&cli.overrides) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli.command, &cfg) {
        Ok(pass) => ExitCode::from(if pass { 0 } else { 1 }),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: &Command, cfg: &Config) -> Result<bool> {
    match command {
        Command::Validate { fan } => cmd_validate(fan, cfg),
        Command::Dual { fan, cone } => cmd_dual(fan, cone, cfg),
        Command::Orbits { fan } => cmd_orbits(fan, cfg),
        Command::Transitions { fan } => cmd_transitions(fan, cfg),
        Command::CheckKlyachko { data } => match cfg.field {
            FieldChoice::Q => cmd_check_klyachko::<BigRational>(data, cfg),
            FieldChoice::Qi => cmd_check_klyachko::<GaussRational>(data, cfg),
        },
        Command::AverageDemo { setup } => cmd_average_demo(setup, cfg),
    }
}

fn load_fan(path: &PathBuf) -> Result<Fan> {
    io::load_fan(path).with_context(|| format!("loading fan {}", path.display()))
}

fn cmd_validate(path: &PathBuf, cfg: &Config) -> Result<bool> {
    let fan = load_fan(path)?;
    let report = fan.validate(&ValidateOptions {
        seed: cfg.seed,
        completeness_samples: 64,
    });
    let accepted = report.accepted(cfg.strict_complete);
    if cfg.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "accepted": accepted,
                "strict_complete": cfg.strict_complete,
                "failing": report.failing_categories(),
                "report": report,
            }))?
        );
    } else {
        print!("{}", report.render_text());
        println!("accepted: {accepted}");
    }
    Ok(accepted)
}

fn parse_cone(text: &str) -> Result<Cone> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("bad ray id {part:?}"))
        })
        .collect()
}

fn cmd_dual(path: &PathBuf, cone_text: &str, cfg: &Config) -> Result<bool> {
    let fan = load_fan(path)?;
    let cone = parse_cone(cone_text)?;
    let dual = fan.dual_family(&cone).context("computing dual family")?;
    if cfg.json {
        let alphas: BTreeMap<String, _> = dual
            .alphas
            .iter()
            .map(|(i, alpha)| (i.to_string(), alpha.clone()))
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "cone": cone.iter().collect::<Vec<_>>(),
                "alphas": alphas,
            }))?
        );
    } else {
        for (i, alpha) in &dual.alphas {
            let parts: Vec<String> = alpha.entries().iter().map(RScalar::to_string).collect();
            println!("alpha_{i} = ({})", parts.join(", "));
        }
    }
    Ok(true)
}

fn cmd_orbits(path: &PathBuf, cfg: &Config) -> Result<bool> {
    let fan = load_fan(path)?;
    let poset = orbit_poset(&fan);
    if cfg.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "orbit_count": poset.nodes.len(),
                "poset": poset,
            }))?
        );
    } else {
        println!("{:<16} {:>4}  closure", "cone", "dim");
        for node in &poset.nodes {
            let cone = if node.cone.is_empty() {
                "{}".to_string()
            } else {
                format!("{:?}", node.cone)
            };
            println!(
                "{:<16} {:>4}  {} orbits",
                cone,
                node.dim,
                node.closure.len()
            );
        }
    }
    Ok(true)
}

fn cmd_transitions(path: &PathBuf, cfg: &Config) -> Result<bool> {
    let fan = load_fan(path)?;
    let tops = fan.maximal_cones();
    let mut pairs = Vec::new();
    let mut identity_exact = true;
    for source in &tops {
        for target in &tops {
            let map = transition(&fan, source, target).context("building transition")?;
            if source == target {
                // Self-transitions feed the identity check; only the genuine
                // chart changes are listed.
                for (r, &j) in target.iter().enumerate() {
                    for (c, &i) in source.iter().enumerate() {
                        let expect = if i == j {
                            RScalar::one()
                        } else {
                            RScalar::zero()
                        };
                        identity_exact &= map.exponents[r][c] == expect;
                    }
                }
                continue;
            }
            pairs.push(json!({
                "source": source.iter().collect::<Vec<_>>(),
                "target": target.iter().collect::<Vec<_>>(),
                "exponents": map.exponents,
            }));
        }
    }
    // Cocycle residual over random points of each triple overlap.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut residual: f64 = 0.0;
    for a in &tops {
        for b in &tops {
            for c in &tops {
                let ab = transition(&fan, a, b)?;
                let bc = transition(&fan, b, c)?;
                let ac = transition(&fan, a, c)?;
                for _ in 0..100 {
                    let p = random_chart_point(a, &mut rng);
                    let via = bc.eval(&ab.eval(&p)?)?;
                    let direct = ac.eval(&p)?;
                    for (x, y) in via.coords.iter().zip(&direct.coords) {
                        residual = residual.max((x - y).norm() / x.norm().max(1.0));
                    }
                }
            }
        }
    }
    let pass = identity_exact && residual < cfg.tol_cocycle;
    if cfg.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "pairs": pairs,
                "identity_exact": identity_exact,
                "cocycle": {
                    "residual": residual,
                    "tolerance": cfg.tol_cocycle,
                    "pass": residual < cfg.tol_cocycle,
                },
            }))?
        );
    } else {
        println!("{} transition pairs computed", pairs.len());
        println!("identity exponents exact: {identity_exact}");
        println!(
            "cocycle residual: {residual:.3e} (tolerance {:.1e})",
            cfg.tol_cocycle
        );
    }
    Ok(pass)
}

fn random_chart_point(chart: &Cone, rng: &mut ChaCha8Rng) -> ChartPoint {
    use rand::Rng;
    ChartPoint::new(
        chart.clone(),
        chart
            .iter()
            .map(|_| {
                num_complex::Complex64::from_polar(
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect(),
    )
}

fn subspace_json<F: ExactField>(s: &ttm_core::klyachko::Subspace<F>) -> serde_json::Value {
    json!(s
        .basis_rows()
        .iter()
        .map(|row| row.iter().map(F::render).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn certificate_json<F: ExactField>(cert: &GradingCertificate<F>) -> serde_json::Value {
    json!({
        "cone": cert.cone.iter().collect::<Vec<_>>(),
        "pieces": cert.pieces.iter().map(|p| json!({
            "tuple": p.tuple.iter()
                .map(|(i, mu)| (i.to_string(), mu.clone()))
                .collect::<BTreeMap<String, RScalar>>(),
            "basis": subspace_json(&p.space),
            "character": p.character,
        })).collect::<Vec<_>>(),
    })
}

fn witness_json(witness: &LedgerWitness) -> serde_json::Value {
    serde_json::to_value(witness).expect("ledger witness serializes")
}

fn cmd_check_klyachko<F: ExactField>(path: &PathBuf, cfg: &Config) -> Result<bool> {
    let data: KlyachkoData<F> =
        io::load_klyachko(path).with_context(|| format!("loading data {}", path.display()))?;
    let report = check_all(&data, ge_s, cfg.all_cones).context("running compatibility check")?;
    let compatible = report.compatible();
    if cfg.json {
        let cones: Vec<serde_json::Value> = report
            .outcomes
            .iter()
            .map(|(cone, outcome)| match outcome {
                ConeOutcome::Compatible(cert) => json!({
                    "cone": cone.iter().collect::<Vec<_>>(),
                    "compatible": true,
                    "certificate": certificate_json(cert),
                }),
                ConeOutcome::Incompatible(witness) => json!({
                    "cone": cone.iter().collect::<Vec<_>>(),
                    "compatible": false,
                    "witness": witness_json(witness),
                }),
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "rank": data.rank,
                "exhaustive": cfg.all_cones,
                "compatible": compatible,
                "cones": cones,
            }))?
        );
    } else {
        for (cone, outcome) in &report.outcomes {
            match outcome {
                ConeOutcome::Compatible(cert) => {
                    println!("cone {:?}: compatible ({} pieces)", cone, cert.pieces.len())
                }
                ConeOutcome::Incompatible(w) => println!(
                    "cone {:?}: INCOMPATIBLE (ledger total {} over rank {})",
                    cone, w.total, w.rank
                ),
            }
        }
        println!("compatible: {compatible}");
    }
    Ok(compatible)
}

fn cmd_average_demo(path: &PathBuf, cfg: &Config) -> Result<bool> {
    let mut setup =
        io::load_setup(path).with_context(|| format!("loading setup {}", path.display()))?;
    if let Some(n) = cfg.quadrature_n {
        setup.quadrature_nodes = n;
    }
    let resonant = setup.resonant_terms();
    if !resonant.is_empty() {
        eprintln!(
            "warning: gauge terms {resonant:?} resonate with a winding difference; \
             radial transport will depend on the base point and the run will fail"
        );
    }
    let bundle = ttm_core::equivariance::ScrambledBundle::new(setup.clone())
        .map_err(|e| anyhow!("setup rejected: {e}"))?;
    let mut pipeline_cfg = PipelineConfig::for_setup(&setup);
    pipeline_cfg.tolerances.equivariance = cfg.tol_equivariance;
    pipeline_cfg.tolerances.character = cfg.tol_regression;
    let report = pipeline::run(&bundle, pipeline_cfg).map_err(|e| anyhow!("pipeline: {e}"))?;
    let matched = pipeline::match_characters(&report.characters, &setup.characters);
    let match_pass = matched
        .map(|(b, c)| b < cfg.tol_regression && c < cfg.tol_regression)
        .unwrap_or(false);
    let pass = report.pass() && match_pass;
    if cfg.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "schema_version": SCHEMA_VERSION,
                "stages": report.stages,
                "characters": report.characters,
                "conditioning": report.conditioning,
                "ground_truth_match": matched.map(|(b, c)| json!({
                    "b_error": b,
                    "c_error": c,
                    "tolerance": cfg.tol_regression,
                })),
                "pass": pass,
            }))?
        );
    } else {
        for stage in &report.stages {
            println!(
                "{:<28} {:>12.3e}  (tol {:>8.1e})  {}",
                stage.stage,
                stage.residual,
                stage.tolerance,
                if stage.pass { "pass" } else { "FAIL" }
            );
        }
        for (i, chr) in report.characters.iter().enumerate() {
            let parts: Vec<String> = chr.exact.entries().iter().map(RScalar::to_string).collect();
            println!("character {}: ({})", i + 1, parts.join(", "));
        }
        match matched {
            Some((b, c)) => println!("ground truth match: b err {b:.2e}, c err {c:.2e}"),
            None => println!("ground truth match: FAILED (windings disagree)"),
        }
        println!("pass: {pass}");
    }
    Ok(pass)
}
