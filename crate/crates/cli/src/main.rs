//! `geocard`: validate method cards, run evaluations and Eurocode 7 designs,
//! and serve the catalog over MCP.

mod report;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use geocard_core::card::{load_card, validate_dimensions};
use geocard_core::catalog::{Catalog, Severity};
use geocard_core::ec7::{
    check_footing_uls_ec7, design_all_approaches, design_footing_width_ec7, DesignApproach, DesignOptions,
    FootingScenario,
};
use geocard_core::engine::{EvaluationRequest, InputValue};
use geocard_mcp::Server;

#[derive(Parser)]
#[command(name = "geocard", version, about = "Declarative geotechnical method cards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and dimension-check cards (the bundled catalog when no path is given).
    Validate {
        /// Card files or directories of cards.
        paths: Vec<PathBuf>,
    },
    /// List the cards in the catalog.
    List {
        #[arg(long)]
        category: Option<String>,
    },
    /// Print a complete card as JSON.
    Show { id: String },
    /// Evaluate one card variant.
    Eval {
        card: String,
        variant: String,
        /// Input as key=value, e.g. phi_prime="30 deg" or B=2 (card units).
        #[arg(long = "in", value_name = "KEY=VALUE")]
        inputs: Vec<String>,
        /// Replacement value for a param variable, as key=value.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value_t = EvalFormat::Report)]
        format: EvalFormat,
    },
    /// Eurocode 7 ULS bearing check or width design of a spread footing.
    Ec7 {
        #[command(subcommand)]
        action: Ec7Action,
    },
    /// Run the MCP server on standard input and output.
    Serve,
}

#[derive(Subcommand)]
enum Ec7Action {
    /// Check one width under one Design Approach.
    Check {
        /// Scenario file, or `jrc_a3` for the bundled scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        da: String,
        /// Footing width, unit-tagged or in m; defaults to the scenario width.
        #[arg(long)]
        width: Option<String>,
        #[arg(long, value_enum, default_value_t = Ec7Format::Text)]
        format: Ec7Format,
    },
    /// Find the width at which utilization reaches 1.
    Design {
        #[arg(long)]
        scenario: String,
        /// A Design Approach label, or `all` for a comparison table.
        #[arg(long)]
        da: String,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, value_enum, default_value_t = Ec7Format::Text)]
        format: Ec7Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalFormat {
    Json,
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ec7Format {
    Json,
    Text,
}

/// Command-line misuse, reported with exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Validate { paths } => validate(&paths),
        Command::List { category } => {
            let catalog = load_catalog()?;
            for m in catalog.list_methods(category.as_deref()) {
                println!("{}\t{}\t[{}]\t{}", m.id, m.category, m.variants.join(", "), m.title);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Show { id } => {
            let catalog = load_catalog()?;
            println!("{}", catalog.get_method(&id)?.to_json_pretty());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            card,
            variant,
            inputs,
            overrides,
            format,
        } => eval(&card, &variant, &inputs, &overrides, format),
        Command::Ec7 { action } => ec7(action),
        Command::Serve => {
            Server::from_env().serve(io::stdin().lock(), io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_catalog() -> anyhow::Result<Catalog> {
    let catalog = Catalog::from_env();
    for d in catalog.diagnostics() {
        eprintln!("{:?}: {}: {}", d.severity, d.source, d.message);
    }
    Ok(catalog)
}

fn validate(paths: &[PathBuf]) -> anyhow::Result<ExitCode> {
    if let Some(missing) = paths.iter().find(|p| !p.exists()) {
        return Err(usage(format!("no such file or directory: {}", missing.display())));
    }
    let mut errors = 0;
    let mut cards = 0;
    let mut report = |severity: Severity, source: &str, message: &str| {
        if severity == Severity::Error {
            errors += 1;
        }
        let label = match severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        eprintln!("{label}: {source}: {message}");
    };
    if paths.is_empty() {
        let catalog = Catalog::bundled();
        for d in catalog.diagnostics() {
            report(d.severity, &d.source, &d.message);
        }
        cards += catalog.len();
    }
    for path in paths {
        if path.is_dir() {
            let catalog = Catalog::load(std::slice::from_ref(path), false);
            for d in catalog.diagnostics() {
                report(d.severity, &d.source, &d.message);
            }
            cards += catalog.len();
        } else {
            let source = path.display().to_string();
            let text = fs::read_to_string(path).with_context(|| format!("reading {source}"))?;
            match load_card(&text) {
                Ok(card) => {
                    let findings = validate_dimensions(&card);
                    for f in &findings {
                        let message = format!("{}/{}: {} at `{}`", f.variant, f.target, f.message, f.location);
                        report(Severity::Error, &source, &message);
                    }
                    if findings.is_empty() {
                        cards += 1;
                    }
                }
                Err(e) => report(Severity::Error, &source, &e.to_string()),
            }
        }
    }
    if errors == 0 {
        println!("{cards} card(s) valid");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{cards} card(s) valid, {errors} error(s)");
        Ok(ExitCode::from(1))
    }
}

fn key_value(arg: &str) -> anyhow::Result<(String, InputValue)> {
    let (key, value) = arg
        .split_once('=')
        .ok_or_else(|| usage(format!("expected KEY=VALUE, got `{arg}`")))?;
    let value = value.trim();
    let parsed = match value.parse::<f64>() {
        Ok(v) => InputValue::Number(v),
        Err(_) => InputValue::Text(value.to_owned()),
    };
    Ok((key.trim().to_owned(), parsed))
}

fn eval(card: &str, variant: &str, inputs: &[String], overrides: &[String], format: EvalFormat) -> anyhow::Result<ExitCode> {
    let catalog = load_catalog()?;
    let mut req = EvaluationRequest::new(card, variant);
    for arg in inputs {
        let (k, v) = key_value(arg)?;
        req = req.input(k, v);
    }
    for arg in overrides {
        let (k, v) = key_value(arg)?;
        req = req.override_param(k, v);
    }
    let trace = catalog.evaluate(&req)?;
    match format {
        EvalFormat::Json => println!("{}", trace.to_canonical_json()),
        EvalFormat::Report => print!("{}", report::evaluation_report(catalog.get_method(card)?, &trace)),
    }
    Ok(ExitCode::SUCCESS)
}

fn load_scenario(arg: &str) -> anyhow::Result<FootingScenario> {
    let path = Path::new(arg);
    if !path.exists() {
        if arg == "jrc_a3" {
            return Ok(FootingScenario::jrc_a3());
        }
        return Err(usage(format!("no such scenario file: {arg}")));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
    FootingScenario::from_json(&text).with_context(|| format!("scenario {arg}"))
}

fn parse_width(text: &str) -> anyhow::Result<f64> {
    if let Ok(v) = text.trim().parse::<f64>() {
        return Ok(v);
    }
    let q = geocard_core::units::parse_quantity(text)?;
    let metre = geocard_core::units::UnitRegistry::bundled().resolve("m")?;
    Ok(geocard_core::units::convert(&q, metre)?.magnitude)
}

fn ec7(action: Ec7Action) -> anyhow::Result<ExitCode> {
    let catalog = load_catalog()?;
    match action {
        Ec7Action::Check {
            scenario,
            da,
            width,
            format,
        } => {
            let scenario = load_scenario(&scenario)?;
            let da: DesignApproach = da.parse().map_err(|e| usage(format!("{e}")))?;
            let b = match width {
                Some(w) => parse_width(&w).map_err(|e| usage(format!("--width: {e}")))?,
                None => scenario
                    .b
                    .ok_or_else(|| anyhow!("the scenario has no width; pass --width"))?,
            };
            let result = check_footing_uls_ec7(&catalog, &scenario, da, b)?;
            match format {
                Ec7Format::Json => println!("{}", serde_json::to_string_pretty(&result)?),
                Ec7Format::Text => print!("{}", report::check_text(&result)),
            }
        }
        Ec7Action::Design {
            scenario,
            da,
            tolerance,
            format,
        } => {
            let scenario = load_scenario(&scenario)?;
            let mut opts = DesignOptions::default();
            if let Some(t) = tolerance {
                if t.is_nan() || t <= 0.0 {
                    return Err(usage("--tolerance must be positive"));
                }
                opts.tolerance = t;
            }
            if da.eq_ignore_ascii_case("all") {
                let comparison = design_all_approaches(&catalog, &scenario, &opts)?;
                match format {
                    Ec7Format::Json => println!("{}", serde_json::to_string_pretty(&comparison)?),
                    Ec7Format::Text => print!("{}", report::comparison_table(&comparison)),
                }
            } else {
                let da: DesignApproach = da.parse().map_err(|e| usage(format!("{e}")))?;
                let result = design_footing_width_ec7(&catalog, &scenario, da, &opts)?;
                match format {
                    Ec7Format::Json => println!("{}", serde_json::to_string_pretty(&result)?),
                    Ec7Format::Text => print!("{}", report::design_text(&result)),
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
