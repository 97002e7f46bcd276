//! Command-line front end: suite generation, method evaluation, the wire
//! server, single-episode runs, and report rendering.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use actattr::control::ControllerConfig;
use actattr::eval::{
    collect, gen_distance_suite, gen_location_suite, gen_size_suite, gen_weight_suite,
    render_csv, render_json, render_markdown, run_method, validate_against_schema, Method,
    MethodResult, RunOutput, Suite, RESULT_SCHEMA,
};
use actattr::kb::KnowledgeBase;
use actattr::lang::{
    api_documentation, interpret, plan_external, plan_template, InterpConfig,
    PlannerClientConfig, Query, QueryFamily,
};
use actattr::rig::Rig;
use actattr::scene::{NoiseProfile, SceneFile};
use actattr::{serve, RigFactory, ServerConfig};

#[derive(Parser)]
#[command(
    name = "actattr",
    version,
    about = "Perception-action query programs over a simulated tabletop robot"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded episode suite
    Gen(GenArgs),
    /// Run one method (or all four) over a suite and write a result document
    Run(RunArgs),
    /// Serve the perception-action primitives over TCP
    Serve(ServeArgs),
    /// Plan and execute one query against a scene; prints program, trace, answer
    Episode(EpisodeArgs),
    /// Merge result documents and render them as markdown, csv, or json
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// weight | location | size | distance
    #[arg(long)]
    family: String,
    /// Episode count
    #[arg(long)]
    n: usize,
    #[arg(long, env = "ACTATTR_SEED", default_value_t = 7)]
    seed: u64,
    /// Where to write the suite JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Suite JSON produced by `gen`
    #[arg(long)]
    suite: PathBuf,
    /// ovd_only | vqa_only | attribute_api | perception_action | all
    #[arg(long)]
    method: String,
    /// zero | calibrated | path to a noise profile JSON
    #[arg(long, default_value = "calibrated")]
    noise: String,
    /// Controller configuration JSON; built-in defaults when omitted
    #[arg(long, env = "ACTATTR_CONFIG")]
    config: Option<PathBuf>,
    /// Where to write the result document
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:0")]
    bind: String,
    /// Scene served to every session; each episode gets a fresh world
    #[arg(long)]
    scene: PathBuf,
    /// zero | calibrated | path to a noise profile JSON
    #[arg(long, default_value = "zero")]
    noise: String,
    #[arg(long, env = "ACTATTR_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EpisodeArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Task text, e.g. "Out of the mug, book, which one is the heaviest?"
    #[arg(long)]
    query: String,
    /// Remote planner endpoint; the built-in template planner when omitted
    #[arg(long)]
    planner_endpoint: Option<String>,
    /// zero | calibrated | path to a noise profile JSON
    #[arg(long, default_value = "zero")]
    noise: String,
    #[arg(long, env = "ACTATTR_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result documents produced by `run`; rows are merged
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// markdown | csv | json
    #[arg(long, default_value = "markdown")]
    format: String,
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Serve(a) => cmd_serve(a),
        Cmd::Episode(a) => cmd_episode(a),
        Cmd::Report(a) => cmd_report(a),
    }
}

fn load_noise(spec: &str) -> Result<NoiseProfile> {
    let profile = match spec {
        "zero" => NoiseProfile::zero(),
        "calibrated" => NoiseProfile::calibrated(),
        path => serde_json::from_str(
            &fs::read_to_string(path).with_context(|| format!("reading noise profile {path}"))?,
        )
        .with_context(|| format!("parsing noise profile {path}"))?,
    };
    profile.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(profile)
}

fn load_config(path: &Option<PathBuf>) -> Result<ControllerConfig> {
    let cfg = match path {
        None => ControllerConfig::default(),
        Some(p) => serde_json::from_str(
            &fs::read_to_string(p)
                .with_context(|| format!("reading controller config {}", p.display()))?,
        )
        .with_context(|| format!("parsing controller config {}", p.display()))?,
    };
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(cfg)
}

fn load_scene(path: &Path) -> Result<SceneFile> {
    serde_json::from_str(
        &fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?,
    )
    .with_context(|| format!("parsing scene {}", path.display()))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let family = QueryFamily::parse(&a.family)
        .with_context(|| format!("unknown family {:?}; use weight|location|size|distance", a.family))?;
    let suite = match family {
        QueryFamily::WeightExtreme => gen_weight_suite(a.n, &KnowledgeBase::bundled(), a.seed)?,
        QueryFamily::LocationOrdinal => gen_location_suite(a.n, a.seed),
        QueryFamily::SizeSuperlative => gen_size_suite(a.n, a.seed),
        QueryFamily::DistanceExtreme => gen_distance_suite(a.n, a.seed),
    };
    fs::write(&a.out, suite.to_json_string())
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} ({} episodes, content {})",
        a.out.display(),
        suite.episodes.len(),
        suite.content_hash()
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let suite = Suite::from_json_str(
        &fs::read_to_string(&a.suite)
            .with_context(|| format!("reading suite {}", a.suite.display()))?,
    )?;
    let noise = load_noise(&a.noise)?;
    let cfg = load_config(&a.config)?;
    let kb = KnowledgeBase::bundled();
    let methods: Vec<Method> = if a.method == "all" {
        Method::ALL.to_vec()
    } else {
        vec![Method::parse(&a.method)?]
    };
    let mut results: Vec<MethodResult> = Vec::new();
    for m in methods {
        let r = run_method(m, &suite, &noise, &cfg, &kb)?;
        println!(
            "{} on {}: {}/{} correct ({:.3})",
            r.method, r.suite, r.correct, r.episodes, r.accuracy
        );
        results.push(r);
    }
    let out = collect(&results, &noise, &cfg);
    let rendered = render_json(&out);
    let schema: serde_json::Value = serde_json::from_str(RESULT_SCHEMA).expect("schema parses");
    let doc: serde_json::Value = serde_json::from_str(&rendered).expect("own output parses");
    validate_against_schema(&schema, &doc).map_err(|e| anyhow::anyhow!("result invalid: {e}"))?;
    fs::write(&a.out, rendered).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let noise = load_noise(&a.noise)?;
    let cfg = load_config(&a.config)?;
    let kb = KnowledgeBase::bundled();
    let factory: RigFactory =
        Arc::new(move || Rig::new(&scene, cfg.clone(), noise, kb.clone()));
    let server = serve(
        ServerConfig {
            bind: a.bind,
            ..ServerConfig::from_env()
        },
        factory,
    )
    .context("starting server")?;
    println!("listening on {}", server.addr());
    loop {
        std::thread::park();
    }
}

fn cmd_episode(a: EpisodeArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let noise = load_noise(&a.noise)?;
    let cfg = load_config(&a.config)?;
    let query = infer_query(&a.query)?;
    let program = match &a.planner_endpoint {
        None => plan_template(&query).map_err(|e| anyhow::anyhow!("{e}"))?,
        Some(endpoint) => plan_external(
            &query,
            endpoint,
            &api_documentation(),
            &PlannerClientConfig::default(),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?,
    };
    let text = actattr::lang::print_program(&program);
    println!("program:");
    print!("{text}");
    let mut rig = Rig::new(&scene, cfg, noise, KnowledgeBase::bundled())
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    match interpret(&program, &mut rig, &InterpConfig::default()) {
        Ok(out) => {
            println!("trace:");
            for entry in &out.trace.entries {
                println!("  {}", serde_json::to_string(entry).expect("entry serializes"));
            }
            match &out.answer_object {
                Some(id) => println!("answer: {} (object {id})", out.answer),
                None => println!("answer: {}", out.answer),
            }
            Ok(())
        }
        Err(e) => {
            println!("trace:");
            for entry in &e.trace.entries {
                println!("  {}", serde_json::to_string(entry).expect("entry serializes"));
            }
            bail!("episode failed: {e}");
        }
    }
}

/// The CLI takes bare task text, so recover the family by asking each
/// template in turn; ground truth stays empty because nothing grades here.
fn infer_query(text: &str) -> Result<Query> {
    for family in [
        QueryFamily::LocationOrdinal,
        QueryFamily::SizeSuperlative,
        QueryFamily::WeightExtreme,
        QueryFamily::DistanceExtreme,
    ] {
        let q = Query {
            text: text.to_string(),
            family,
            ground_truth: String::new(),
        };
        if plan_template(&q).is_ok() {
            return Ok(q);
        }
    }
    bail!("query does not match any task template: {text:?}")
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let schema: serde_json::Value = serde_json::from_str(RESULT_SCHEMA).expect("schema parses");
    let mut merged: Option<RunOutput> = None;
    for path in &a.inputs {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("reading result {}", path.display()))?;
        let doc: serde_json::Value =
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        validate_against_schema(&schema, &doc)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let out: RunOutput = serde_json::from_value(doc).expect("validated document deserializes");
        merged = Some(match merged {
            None => out,
            Some(mut acc) => {
                if acc.config_hash != out.config_hash {
                    bail!(
                        "{} was produced under a different noise/config (hash {} vs {}); \
                         refusing to merge into one table",
                        path.display(),
                        out.config_hash,
                        acc.config_hash
                    );
                }
                acc.rows.extend(out.rows);
                for note in out.notes {
                    if !acc.notes.contains(&note) {
                        acc.notes.push(note);
                    }
                }
                acc
            }
        });
    }
    let mut out = merged.expect("clap enforces at least one input");
    out.rows
        .sort_by(|x, y| (&x.task, &x.method, x.seed).cmp(&(&y.task, &y.method, y.seed)));
    match a.format.as_str() {
        "markdown" | "md" => print!("{}", render_markdown(&out)),
        "csv" => print!("{}", render_csv(&out)),
        "json" => print!("{}", render_json(&out)),
        other => bail!("unknown format {other:?}; use markdown|csv|json"),
    }
    Ok(())
}
