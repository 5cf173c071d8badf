//! `ctok` — pool generation, tokenizer training, evaluation, gradient
//! checking and template export as reproducible runs.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3
//! numeric/acceptance failure.

mod config;

use clap::{Parser, Subcommand, ValueEnum};
use config::{load_file, parse_domains, resolve, Resolved};
use ctok_core::agents::{pool_read, pool_write, AgentBackend, ConceptPair, Domain, Vocabulary};
use ctok_core::container::TensorContainer;
use ctok_core::encoders::{Encoder, SyntheticEncoder};
use ctok_core::pipeline::generate_pool;
use ctok_core::tokenizer::{compose_creative, forward};
use ctok_core::training::{
    evaluate_model, gradcheck::run_suite, init_checkpoint, load_checkpoint, train, TrainError,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Duration;

const ENDPOINT_ENV: &str = "CTOK_AGENT_ENDPOINT";

#[derive(Parser)]
#[command(name = "ctok", version, about = "Creative prefix tokenizer runner")]
struct Cli {
    /// TOML config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every derived generator.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Primary output path (pool file, run directory, metrics file or
    /// template file depending on the command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the resolved configuration and exit without side effects.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Augmentor backend.
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::Mock)]
    backend: BackendArg,

    /// Remote augmentor endpoint (or set CTOK_AGENT_ENDPOINT).
    #[arg(long, global = true)]
    endpoint: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Mock,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the concept pool: matrices, augmentation, validation, split.
    GenPool {
        /// Comma-separated domains (architecture,furniture,nature).
        #[arg(long)]
        domains: Option<String>,
        /// 2x2 matrices per domain.
        #[arg(long)]
        matrices: Option<usize>,
        /// Remote request timeout.
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
        #[arg(long, default_value_t = 3)]
        max_retries: u32,
    },
    /// Train the tokenizer on a pool file.
    Train {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        /// Template length N.
        #[arg(long)]
        tokens: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        log_every: Option<usize>,
        /// Write an untrained (epoch 0) checkpoint and stop.
        #[arg(long)]
        init_only: bool,
    },
    /// Held-out metrics for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pool: PathBuf,
    },
    /// Finite-difference gradient verification; nonzero exit on failure.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
    },
    /// Run the tokenizer for one pair and write its template.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        /// "Concept,Style"
        #[arg(long)]
        pair: String,
        /// Domain of the pair; inferred from the vocabularies when unique.
        #[arg(long)]
        domain: Option<String>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

fn usage<S: Into<String>>(msg: S) -> Failure {
    Failure { code: 1, message: msg.into() }
}

fn data<S: Into<String>>(msg: S) -> Failure {
    Failure { code: 2, message: msg.into() }
}

fn numeric<S: Into<String>>(msg: S) -> Failure {
    Failure { code: 3, message: msg.into() }
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::Config(_) => usage(e.to_string()),
        TrainError::NonFinite { .. } => numeric(e.to_string()),
        other => data(other.to_string()),
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    resolved_config: serde_json::Value,
    seed: u64,
    artifact_paths: Vec<String>,
    tool_version: String,
}

fn write_manifest(
    path: &Path,
    command: &str,
    resolved: serde_json::Value,
    seed: u64,
    artifacts: &[&Path],
) -> Result<(), Failure> {
    let manifest = RunManifest {
        command: command.to_string(),
        resolved_config: resolved,
        seed,
        artifact_paths: artifacts.iter().map(|p| p.display().to_string()).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| data(e.to_string()))?;
        }
    }
    std::fs::write(path, serde_json::to_string_pretty(&manifest).unwrap() + "\n")
        .map_err(|e| data(format!("writing manifest {}: {e}", path.display())))
}

fn manifest_sibling(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful exits.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = load_file(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    let resolved = resolve(&file, cli.seed).map_err(|e| usage(format!("{e:#}")))?;

    match &cli.command {
        Command::GenPool { domains, matrices, timeout_secs, max_retries } => {
            cmd_gen_pool(&cli, resolved, domains.as_deref(), *matrices, *timeout_secs, *max_retries)
        }
        Command::Train {
            pool,
            epochs,
            lr,
            batch,
            tokens,
            alpha,
            beta,
            margin,
            log_every,
            init_only,
        } => {
            let mut r = resolved;
            if let Some(v) = epochs {
                r.train.epochs = *v;
            }
            if let Some(v) = lr {
                r.train.lr = *v;
            }
            if let Some(v) = batch {
                r.train.batch = *v;
            }
            if let Some(v) = tokens {
                r.train.tokenizer.n_tokens = *v;
            }
            if let Some(v) = alpha {
                r.train.weights.alpha = *v;
            }
            if let Some(v) = beta {
                r.train.weights.beta = *v;
            }
            if let Some(v) = margin {
                r.train.weights.margin = *v;
            }
            if let Some(v) = log_every {
                r.train.log_every = *v;
            }
            if let Some(out) = &cli.out {
                r.train.checkpoint_dir = out.clone();
            }
            cmd_train(&cli, r, pool, *init_only)
        }
        Command::Eval { checkpoint, pool } => cmd_eval(&cli, checkpoint, pool),
        Command::Gradcheck { tol, h } => cmd_gradcheck(&cli, resolved, *tol, *h),
        Command::Export { checkpoint, pair, domain } => {
            cmd_export(&cli, checkpoint, pair, domain.as_deref())
        }
    }
}

fn backend_from(cli: &Cli, timeout_secs: u64, max_retries: u32) -> Result<AgentBackend, Failure> {
    match cli.backend {
        BackendArg::Mock => Ok(AgentBackend::mock()),
        BackendArg::Remote => {
            let endpoint = cli
                .endpoint
                .clone()
                .or_else(|| std::env::var(ENDPOINT_ENV).ok())
                .ok_or_else(|| {
                    usage(format!("remote backend needs --endpoint or ${ENDPOINT_ENV}"))
                })?;
            let mut b = AgentBackend::remote(&endpoint);
            b.timeout = Duration::from_secs(timeout_secs);
            b.max_retries = max_retries;
            Ok(b)
        }
    }
}

fn cmd_gen_pool(
    cli: &Cli,
    resolved: Resolved,
    domains_flag: Option<&str>,
    matrices_flag: Option<usize>,
    timeout_secs: u64,
    max_retries: u32,
) -> Result<(), Failure> {
    let domains = match domains_flag {
        Some(csv) => parse_domains(csv).map_err(|e| usage(format!("{e:#}")))?,
        None => resolved.domains.clone(),
    };
    let matrices = matrices_flag.unwrap_or(resolved.matrices);
    if matrices == 0 {
        return Err(usage("--matrices must be at least 1"));
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("pool.jsonl"));
    let backend = backend_from(cli, timeout_secs, max_retries)?;

    let resolved_json = serde_json::json!({
        "domains": domains,
        "matrices": matrices,
        "seed": resolved.seed,
        "backend": match backend.kind {
            ctok_core::agents::BackendKind::Mock => "mock",
            ctok_core::agents::BackendKind::Remote => "remote",
        },
        "endpoint": backend.endpoint,
        "out": out,
    });
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&resolved_json).unwrap());
        return Ok(());
    }
    write_manifest(
        &manifest_sibling(&out),
        "gen-pool",
        resolved_json,
        resolved.seed,
        &[&out],
    )?;

    let (entries, summary) = generate_pool(&domains, matrices, resolved.seed, &backend)
        .map_err(|e| data(e.to_string()))?;
    pool_write(&entries, &out).map_err(|e| data(e.to_string()))?;

    for (domain, c) in &summary.per_domain {
        println!(
            "{domain}: {} pairs ({} valid, {} train, {} test)",
            c.pairs, c.valid, c.train, c.test
        );
    }
    println!("wrote {} entries to {}", entries.len(), out.display());
    Ok(())
}

fn cmd_train(cli: &Cli, resolved: Resolved, pool_path: &Path, init_only: bool) -> Result<(), Failure> {
    let cfg = resolved.train.clone();
    let resolved_json = serde_json::json!({
        "train": cfg,
        "pool": pool_path,
        "init_only": init_only,
    });
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&resolved_json).unwrap());
        return Ok(());
    }
    let pool = pool_read(pool_path).map_err(|e| data(e.to_string()))?;
    let ckpt_path = cfg.checkpoint_dir.join("checkpoint.ckpt");
    write_manifest(
        &cfg.checkpoint_dir.join("run_manifest.json"),
        "train",
        resolved_json,
        cfg.seed,
        &[&ckpt_path, &cfg.checkpoint_dir.join("metrics.jsonl"), &cfg.checkpoint_dir.join("metrics.csv")],
    )?;

    if init_only {
        let ckpt = init_checkpoint(&cfg, &pool).map_err(train_failure)?;
        println!(
            "wrote untrained checkpoint to {} (initial l_total {:.6})",
            ckpt_path.display(),
            ckpt.metrics_tail.breakdown.l_total
        );
        return Ok(());
    }

    let report = train(&cfg, &pool).map_err(train_failure)?;
    let tail = &report.checkpoint.metrics_tail;
    println!(
        "trained {} epochs: l_total {:.6} (epoch 1: {:.6})",
        cfg.epochs,
        tail.breakdown.l_total,
        report.epoch_totals.first().copied().unwrap_or(f64::NAN)
    );
    if let (Some(edge), Some(anchor)) = (tail.holdout_edge_cosine, tail.holdout_anchor_cosine) {
        println!("holdout: edge cosine {edge:.4}, anchor cosine {anchor:.4}");
    }
    if report.touched_test_pairs > 0 {
        return Err(numeric(format!(
            "leakage guard tripped: {} held-out pairs reached gradients",
            report.touched_test_pairs
        )));
    }
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

fn cmd_eval(cli: &Cli, checkpoint: &Path, pool_path: &Path) -> Result<(), Failure> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("eval_metrics.json"));
    let resolved_json = serde_json::json!({
        "checkpoint": checkpoint,
        "pool": pool_path,
        "out": out,
    });
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&resolved_json).unwrap());
        return Ok(());
    }
    let ckpt = load_checkpoint(checkpoint).map_err(|e| data(e.to_string()))?;
    write_manifest(&manifest_sibling(&out), "eval", resolved_json, ckpt.config.seed, &[&out])?;
    let pool = pool_read(pool_path).map_err(|e| data(e.to_string()))?;
    let row = evaluate_model(&ckpt, &pool).map_err(train_failure)?;
    let json = serde_json::to_string_pretty(&row).unwrap();
    std::fs::write(&out, json.clone() + "\n").map_err(|e| data(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, resolved: Resolved, tol: f64, h: f64) -> Result<(), Failure> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("gradcheck_report.json"));
    let resolved_json = serde_json::json!({
        "tol": tol,
        "h": h,
        "seed": resolved.seed,
        "out": out,
    });
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&resolved_json).unwrap());
        return Ok(());
    }
    write_manifest(&manifest_sibling(&out), "gradcheck", resolved_json, resolved.seed, &[&out])?;
    let suite = run_suite(tol, h, resolved.seed).map_err(train_failure)?;
    for (name, report) in &suite.per_term {
        println!(
            "{name:<14} {} max rel err {:.3e} (tol {:.1e})",
            if report.pass { "PASS" } else { "FAIL" },
            report.max_rel_err,
            report.tolerance
        );
    }
    println!("elapsed: {:.2}s", suite.elapsed.as_secs_f64());
    let report_json = serde_json::json!({
        "pass": suite.pass,
        "elapsed_secs": suite.elapsed.as_secs_f64(),
        "per_term": suite.per_term.iter().map(|(n, r)| (n.clone(), r)).collect::<Vec<_>>(),
    });
    std::fs::write(&out, serde_json::to_string_pretty(&report_json).unwrap() + "\n")
        .map_err(|e| data(e.to_string()))?;
    if suite.pass {
        Ok(())
    } else {
        Err(numeric("gradient check failed"))
    }
}

fn parse_pair(raw: &str) -> Result<(String, String), Failure> {
    let parts: Vec<&str> = raw.splitn(2, ',').map(str::trim).collect();
    if parts.len() != 2 || parts[0].is_empty() || parts[1].is_empty() {
        return Err(usage("--pair expects \"Concept,Style\""));
    }
    Ok((parts[0].to_string(), parts[1].to_string()))
}

fn find_pair(concept: &str, style: &str, domain: Option<&str>) -> Result<ConceptPair, Failure> {
    if let Some(name) = domain {
        let d: Domain = name.parse().map_err(|e: ctok_core::agents::AgentError| usage(e.to_string()))?;
        return Vocabulary::bundled(d).pair(concept, style).map_err(|e| data(e.to_string()));
    }
    let matches: Vec<ConceptPair> = Domain::ALL
        .iter()
        .filter_map(|&d| Vocabulary::bundled(d).pair(concept, style).ok())
        .collect();
    match matches.len() {
        0 => Err(data(format!(
            "pair ({concept}, {style}) is not in any bundled vocabulary"
        ))),
        1 => Ok(matches.into_iter().next().unwrap()),
        _ => Err(usage(format!(
            "pair ({concept}, {style}) exists in several domains; pass --domain"
        ))),
    }
}

fn cmd_export(cli: &Cli, checkpoint: &Path, pair_raw: &str, domain: Option<&str>) -> Result<(), Failure> {
    let (concept, style) = parse_pair(pair_raw)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("template.tensors"));
    let resolved_json = serde_json::json!({
        "checkpoint": checkpoint,
        "concept": concept,
        "style": style,
        "domain": domain,
        "out": out,
    });
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&resolved_json).unwrap());
        return Ok(());
    }
    let ckpt = load_checkpoint(checkpoint).map_err(|e| data(e.to_string()))?;
    write_manifest(&manifest_sibling(&out), "export", resolved_json, ckpt.config.seed, &[&out])?;
    let pair = find_pair(&concept, &style, domain)?;
    let enc = SyntheticEncoder::new(ckpt.config.encoder).map_err(|e| data(e.to_string()))?;
    let fuzzy = Encoder::<f32>::encode_fuzzy(&enc, &pair).map_err(|e| data(e.to_string()))?;
    let template = forward(&fuzzy, &ckpt.params).map_err(|e| data(e.to_string()))?;
    let creative = compose_creative(&template, &fuzzy).map_err(|e| data(e.to_string()))?;

    let mut container = TensorContainer::new(serde_json::json!({
        "kind": "token_template",
        "pair_key": pair.key(),
        "domain": pair.domain,
        "concept": pair.concept,
        "style": pair.style,
        "n_tokens": template.tokens.nrows(),
        "d_model": template.tokens.ncols(),
    }));
    container.push("tokens", template.tokens.clone());
    if let Some(g) = &template.global_vector {
        let row = ctok_core::numerics::Tensor2D::from_shape_vec((1, g.len()), g.to_vec())
            .expect("row vector");
        container.push("global", row);
    }
    container.write(&out).map_err(|e| data(e.to_string()))?;
    println!(
        "exported template for ({}, {}): {} x {} tokens (creative length {}) -> {}",
        pair.concept,
        pair.style,
        template.tokens.nrows(),
        template.tokens.ncols(),
        creative.tokens.nrows(),
        out.display()
    );
    Ok(())
}
