//! `nomad`: generate models, compute distances, run the recovery, sweep
//! trials and score results from the command line.
//!
//! Every flag can also come from a JSON config file (`--config`) whose keys
//! are the flag names with underscores; flags on the command line win.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nomad_ggm::experiments::{
    generate_graph, run_sweep_outcomes, score_graph, trials_csv_string, ExperimentConfig, GraphSource, SampleSize,
};
use nomad_ggm::ggm::{empirical_distances, sample, synthesize_model, SynthesisOptions, WeightRange};
use nomad_ggm::graph::ast_representative_graph;
use nomad_ggm::identifiability::demo_report;
use nomad_ggm::io::{data_csv, parse_adjacency, parse_ast, parse_data_csv, parse_distances, parse_graph, read_text, to_json};
use nomad_ggm::{run_nomad, same_equivalence_class, DistanceMatrix, NomadError, Result, Tolerances, UndirectedGraph};
use serde::Deserialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "nomad", version, about = "Noise-robust structure recovery for Gaussian graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a graph, or a synthesized model when --noise-max is given, or
    /// sampled data when --samples is also given.
    Generate(Common),
    /// Print the observed information distances of a synthesized model.
    Distances(Common),
    /// Recover the articulated set tree from distances, data or a
    /// synthesized model.
    Nomad(NomadArgs),
    /// Run independent trials and write the trials CSV.
    Sweep(Common),
    /// Run the five-vertex confounding decomposition.
    IdentifiabilityDemo(Common),
    /// Score a recovered structure against a true graph.
    Score(ScoreArgs),
}

/// Flags shared by the subcommands.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Common {
    /// Generator id (`gsyn_standin`, `chain:8`, `random_block(10,2)`, …) or a
    /// graph JSON / adjacency-matrix JSON file.
    #[arg(long)]
    graph: Option<String>,
    /// Noise entries are uniform on [0, noise_max].
    #[arg(long)]
    noise_max: Option<f64>,
    /// Number of samples (finite-sample mode).
    #[arg(long, conflicts_with = "population")]
    samples: Option<usize>,
    /// Use population distances (the default).
    #[arg(long)]
    #[serde(skip)]
    population: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// TIA threshold; other widths follow from it unless given.
    #[arg(long)]
    xi: Option<f64>,
    /// Mode and partition width.
    #[arg(long)]
    eps_d: Option<f64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// JSON file with default values for these flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Record wall-clock runtimes in the trials CSV.
    #[arg(long)]
    timing: bool,
    /// Also check the recovered structure against the true graph.
    #[arg(long, hide = true)]
    verify: bool,
}

#[derive(Args, Debug)]
struct NomadArgs {
    #[command(flatten)]
    common: Common,
    /// Distances JSON (`{"labels": .., "values": ..}`).
    #[arg(long, conflicts_with = "data")]
    distances: Option<PathBuf>,
    /// Data CSV with header `1,2,..,p`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    /// Recovered structure: AST JSON, graph JSON or adjacency-matrix JSON.
    #[arg(long)]
    recovered: PathBuf,
}

impl Common {
    /// Command-line values over config-file values.
    fn resolve(self) -> Result<Common> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let base: Common = serde_json::from_str(&read_text(&path)?)?;
        Ok(Common {
            graph: self.graph.or(base.graph),
            noise_max: self.noise_max.or(base.noise_max),
            samples: if self.population { None } else { self.samples.or(base.samples) },
            population: self.population,
            trials: self.trials.or(base.trials),
            seed: self.seed.or(base.seed),
            xi: self.xi.or(base.xi),
            eps_d: self.eps_d.or(base.eps_d),
            out: self.out,
            config: self.config,
            timing: self.timing || base.timing,
            verify: self.verify || base.verify,
        })
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn graph_id(&self) -> Result<&str> {
        self.graph
            .as_deref()
            .ok_or_else(|| NomadError::InvalidParameter("--graph is required".into()))
    }

    fn graph(&self) -> Result<UndirectedGraph> {
        load_graph(self.graph_id()?, self.seed())
    }

    fn graph_source(&self) -> Result<GraphSource> {
        let id = self.graph_id()?;
        Ok(if Path::new(id).is_file() {
            GraphSource::Fixed(load_graph(id, 0)?)
        } else {
            GraphSource::Named(id.to_string())
        })
    }

    fn sample_size(&self) -> SampleSize {
        self.samples.map_or(SampleSize::Population, SampleSize::Finite)
    }

    /// Explicit tolerances, if any flag sets them.
    fn tolerances(&self) -> Result<Option<Tolerances>> {
        let tol = match (self.xi, self.eps_d) {
            (None, None) => return Ok(None),
            (Some(xi), None) => Tolerances::from_xi(xi, None),
            (xi, Some(eps_d)) => Tolerances {
                xi: xi.unwrap_or(14.0 * eps_d),
                eps_d,
                sep_tol: eps_d / 6.0,
            },
        };
        tol.validate()?;
        Ok(Some(tol))
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                let written = stdout
                    .write_all(text.as_bytes())
                    .and_then(|()| if text.ends_with('\n') { Ok(()) } else { stdout.write_all(b"\n") });
                // A closed pipe (`nomad … | head`) is not an error.
                match written {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// A generator id, or a file holding graph JSON or an adjacency matrix.
fn load_graph(id: &str, seed: u64) -> Result<UndirectedGraph> {
    if Path::new(id).is_file() {
        let text = read_text(id)?;
        if text.trim_start().starts_with('[') {
            parse_adjacency(&text)
        } else {
            parse_graph(&text)
        }
    } else {
        generate_graph(id, seed)
    }
}

fn generate(c: Common) -> Result<()> {
    let g = c.graph()?;
    let Some(noise_max) = c.noise_max else {
        return c.emit(&to_json(&g)?);
    };
    let (model, margins) = synthesize_model(&g, WeightRange::default(), noise_max, c.seed(), &SynthesisOptions::default())?;
    match c.samples {
        Some(n) => c.emit(&data_csv(&sample(&model.observed_covariance(), n, c.seed())?)?),
        None => c.emit(&to_json(&json!({ "model": model, "margins": margins }))?),
    }
}

/// Distances of a synthesized model (population or from `--samples` rows),
/// with the true graph and the tolerances appropriate for them.
fn model_distances(c: &Common) -> Result<(UndirectedGraph, DistanceMatrix, Tolerances)> {
    let g = c.graph()?;
    let noise_max = c.noise_max.unwrap_or(0.0);
    let (model, margins) = synthesize_model(&g, WeightRange::default(), noise_max, c.seed(), &SynthesisOptions::default())?;
    let (dist, default_tol) = match c.samples {
        None => (model.observed_distances(), Tolerances::population()),
        Some(n) => (
            empirical_distances(&sample(&model.observed_covariance(), n, c.seed())?)?,
            Tolerances::from_margins(&margins),
        ),
    };
    Ok((g, dist, c.tolerances()?.unwrap_or(default_tol)))
}

fn distances(c: Common) -> Result<()> {
    let (_, dist, _) = model_distances(&c)?;
    c.emit(&to_json(&dist)?)
}

fn nomad(args: NomadArgs) -> Result<()> {
    let c = args.common.resolve()?;
    let (truth, dist, tol) = if let Some(path) = &args.distances {
        let tol = c.tolerances()?.unwrap_or(Tolerances::population());
        (None, parse_distances(&read_text(path)?)?, tol)
    } else if let Some(path) = &args.data {
        let tol = c
            .tolerances()?
            .ok_or_else(|| NomadError::InvalidParameter("--data needs --xi or --eps-d".into()))?;
        (None, empirical_distances(&parse_data_csv(&read_text(path)?)?)?, tol)
    } else {
        let (g, dist, tol) = model_distances(&c)?;
        (Some(g), dist, tol)
    };
    let out = run_nomad(&dist, &tol)?;
    let mut report = json!({
        "ast": out.ast,
        "graph": out.graph,
        "tolerances": tol,
        "observed_ancestors": out.catalog.a_obs,
        "hidden_ancestors": out.catalog.a_hid.len(),
        "warnings": out.diagnostics.warnings,
    });
    if c.verify {
        let g = match truth {
            Some(g) => g,
            None => c.graph()?,
        };
        report["same_class"] = json!(same_equivalence_class(&g, &out.ast)?);
    }
    c.emit(&to_json(&report)?)
}

fn sweep(c: Common) -> Result<()> {
    let mut cfg = ExperimentConfig::new(
        c.graph_source()?,
        c.noise_max.unwrap_or(0.0),
        c.sample_size(),
        c.trials.unwrap_or(10),
        c.seed(),
    );
    cfg.tolerances = c.tolerances()?;
    cfg.timing = c.timing;
    let outcomes = run_sweep_outcomes(&cfg)?;
    for o in &outcomes {
        if let Some(e) = &o.error {
            eprintln!("trial {}: {e}", o.record.trial_seed);
        }
    }
    let records: Vec<_> = outcomes.into_iter().map(|o| o.record).collect();
    c.emit(&trials_csv_string(&records)?)
}

fn identifiability_demo(c: Common) -> Result<()> {
    let r = demo_report(c.seed())?;
    c.emit(&to_json(&json!({
        "decomposition_error": r.decomposition_error,
        "outside_block_deviation": r.outside_block_deviation,
        "h": r.h,
        "h_in_class": r.h_in_class,
        "h_differs": r.h_differs,
    }))?)
}

fn score(args: ScoreArgs) -> Result<()> {
    let c = args.common.resolve()?;
    let truth = c.graph()?;
    let text = read_text(&args.recovered)?;
    let recovered = if text.trim_start().starts_with('[') {
        parse_adjacency(&text)?
    } else if text.contains("\"parts\"") {
        ast_representative_graph(&parse_ast(&text)?)?
    } else {
        parse_graph(&text)?
    };
    let (pass, families, noncut, k) = score_graph(&truth, &recovered)?;
    c.emit(&to_json(&json!({
        "equivalence_pass": pass,
        "families_recovered": families,
        "noncut_recovered": noncut,
        "k_recovered": k,
    }))?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => generate(c.resolve()?),
        Command::Distances(c) => distances(c.resolve()?),
        Command::Nomad(a) => nomad(a),
        Command::Sweep(c) => sweep(c.resolve()?),
        Command::IdentifiabilityDemo(c) => identifiability_demo(c.resolve()?),
        Command::Score(a) => score(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
