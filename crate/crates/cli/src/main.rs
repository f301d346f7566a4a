//! `latentgraph` command-line harness.
//!
//! Every subcommand writes its outputs plus a `manifest.json` (or
//! `<out>.manifest.json` for single-file outputs) recording the resolved
//! configuration, seeds, paths, tool version and wall-clock time.
//! Usage errors exit with status 2, domain errors with status 1 and a single
//! `error: ...` line on stderr.

mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{CommandFactory, Parser};
use latentgraph::canonical::to_padded;
use latentgraph::experiments::{
    encode_dataset, encode_sweep, randomization_sweep, sample_vs_population_stats, traverse, traverse_grid,
    write_traversal, TraversalSpec,
};
use latentgraph::graphgen::{gen_dataset, Dataset, Graph, ParamRanges};
use latentgraph::metrics::graph_stats;
use latentgraph::model::ModelConfig;
use latentgraph::recipes::{check_flags, load_recipes, Runner};
use latentgraph::rng::derive_seed;
use latentgraph::sampler::{load_edge_list, rw_sample, WalkConfig};
use latentgraph::training::{load_model, mean_kl_per_dimension, save_checkpoint, train_with, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use args::{Cli, Command, Range};

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config: Value,
    seeds: Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    tool_version: &'static str,
    started_unix: u64,
    duration_secs: f64,
}

struct Run {
    command: &'static str,
    config: Value,
    started: Instant,
    started_unix: u64,
}

impl Run {
    fn new(command: &'static str, config: &impl Serialize) -> Self {
        Run {
            command,
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    fn finish(self, manifest_path: &Path, seeds: Value, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
        let m = RunManifest {
            command: self.command.to_string(),
            config: self.config,
            seeds,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            started_unix: self.started_unix,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        write_atomic(manifest_path, serde_json::to_string_pretty(&m)?.as_bytes())
    }
}

/// Writes through a sibling temporary file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn side_path(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn file_manifest(out: &Path) -> PathBuf {
    side_path(out, ".manifest.json")
}

fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("checkpoint")
    } else {
        p.to_path_buf()
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Ok(Dataset::read_jsonl(path)?)
}

fn cmd_gen(a: &args::GenArgs) -> Result<()> {
    let run = Run::new("gen", a);
    let given: [(&str, Option<Range>); 6] = [
        ("n", a.n),
        ("p", a.p),
        ("m", a.m),
        ("k", a.k),
        ("p_rewire", a.p_rewire),
        ("depth", a.depth),
    ];
    let names = a.family.param_names();
    let mut ranges = ParamRanges::family_default(a.family);
    for (name, r) in given {
        match (names.contains(&name), r) {
            (true, Some(r)) => ranges = ranges.with(name, r.lo, r.hi),
            (false, Some(_)) => bail!("--{} does not apply to family {}", name.replace('_', "-"), a.family),
            _ => {}
        }
    }
    let d = gen_dataset(a.family, &ranges, a.count, a.attributes, a.seed)?;
    let mut text = String::new();
    for r in &d.records {
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    write_atomic(&a.out, text.as_bytes())?;
    println!("wrote {} {} graphs to {}", d.len(), a.family, a.out.display());
    run.finish(
        &file_manifest(&a.out),
        json!({ "seed": a.seed, "ranges": ranges }),
        &[],
        &[&a.out],
    )
}

fn cmd_train(a: &args::TrainArgs) -> Result<()> {
    let run = Run::new("train", a);
    let data = read_dataset(&a.data)?;
    let family = data
        .family()
        .ok_or_else(|| anyhow!("{}: dataset is empty or mixes families", a.data.display()))?;
    let has_attrs = data.records.iter().all(|r| r.graph.attrs().is_some());
    let cfg = TrainConfig {
        beta: a.beta,
        lambda_param: a.lambda_param,
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        seed: a.seed,
        n_max: a.n_max,
        model: ModelConfig {
            j_latent: a.latent,
            n_max: a.n_max,
            gcn_layers: a.gcn_layers.clone(),
            encoder_dense_layers: a.encoder_layers.clone(),
            dense_decoder_layers: a.decoder_layers.clone(),
            param_dim: family.params().len(),
            use_attributes: has_attrs && !a.no_attributes,
        },
        ..TrainConfig::default()
    };
    let trained = train_with(&data, &cfg, |r, _| {
        log::info!("epoch {} total {:.4} recon {:.4} kl {:.4}", r.epoch, r.total, r.recon, r.kl);
    })?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ckpt = a.out.join("checkpoint");
    let hist = a.out.join("history.csv");
    save_checkpoint(&trained.model.weights, &trained.config, &ckpt)?;
    write_atomic(&hist, trained.history.to_csv(a.latent).as_bytes())?;
    if let Some(last) = trained.history.epochs.last() {
        println!(
            "trained {} epochs: total {:.4} recon {:.4} kl {:.4} param {:.5}",
            trained.history.epochs.len(),
            last.total,
            last.recon,
            last.kl,
            last.param_loss
        );
    }
    run.finish(
        &a.out.join("manifest.json"),
        json!({ "seed": a.seed }),
        &[&a.data],
        &[&ckpt, &hist],
    )
}

fn cmd_traverse(a: &args::TraverseArgs) -> Result<()> {
    let run = Run::new("traverse", a);
    let ckpt = checkpoint_path(&a.ckpt);
    let (model, _) = load_model(&ckpt)?;
    let j = model.config.j_latent;
    let base = a.base.clone().unwrap_or_else(|| vec![0.0; j]);
    let spec = |axis, r: Range, steps| TraversalSpec {
        axis,
        lo: r.lo,
        hi: r.hi,
        steps,
        base_z: base.clone(),
        threshold: a.threshold,
    };
    let rows = spec(a.axis, a.range, a.steps);
    let grid = match a.axis2 {
        Some(axis2) => traverse_grid(&model, &rows, &spec(axis2, a.range2, a.steps2))?,
        None => traverse(&model, &rows)?.into_iter().map(|p| vec![p]).collect(),
    };
    write_traversal(&a.out, &grid)?;
    let cells: usize = grid.iter().map(Vec::len).sum();
    println!("decoded {cells} points into {}", a.out.display());
    run.finish(&a.out.join("manifest.json"), Value::Null, &[&ckpt], &[&a.out])
}

fn factor_names(data: &Dataset) -> Vec<String> {
    data.family()
        .map(|f| f.param_names().into_iter().map(String::from).collect())
        .unwrap_or_default()
}

fn cmd_encode(a: &args::EncodeArgs) -> Result<()> {
    let run = Run::new("encode", a);
    let ckpt = checkpoint_path(&a.ckpt);
    let (model, _) = load_model(&ckpt)?;
    let data = read_dataset(&a.data)?;
    let z = encode_dataset(&model, &data)?;
    let mut head: Vec<String> = (0..model.config.j_latent).map(|k| format!("z{k}")).collect();
    head.extend(factor_names(&data));
    let mut csv = head.join(",") + "\n";
    for (zr, r) in z.iter().zip(&data.records) {
        let row: Vec<String> = zr.iter().chain(&r.params.values()).map(|x| x.to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write_atomic(&a.out, csv.as_bytes())?;
    println!("encoded {} graphs into {}", z.len(), a.out.display());
    run.finish(&file_manifest(&a.out), Value::Null, &[&ckpt, &a.data], &[&a.out])
}

fn cmd_mig(a: &args::MigArgs) -> Result<()> {
    let run = Run::new("mig", a);
    let ckpt = checkpoint_path(&a.ckpt);
    let (model, _) = load_model(&ckpt)?;
    let data = read_dataset(&a.data)?;
    let sweep = encode_sweep(&model, &data, a.bins)?;
    let padded = data
        .records
        .iter()
        .map(|r| to_padded(&r.graph, model.config.n_max))
        .collect::<latentgraph::Result<Vec<_>>>()?;
    let kl = mean_kl_per_dimension(&model, &padded)?;
    let names = factor_names(&data);
    let rep = &sweep.mig;
    let report = json!({
        "score": rep.score,
        "per_factor_gap": rep.per_factor_gap,
        "j_max": rep.j_max,
        "factors": names,
        "mi": rep.mi,
        "entropy": rep.entropy,
        "excluded": rep.excluded,
        "kl_per_dim": kl,
        "samples": data.len(),
        "bins": a.bins,
    });
    let csv_path = a.out.with_extension("csv");
    write_atomic(&a.out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_atomic(&csv_path, rep.mi_csv(&names).as_bytes())?;
    println!("MIG {:.4} (top latents {:?})", rep.score, rep.j_max);
    run.finish(&file_manifest(&a.out), Value::Null, &[&ckpt, &a.data], &[&a.out, &csv_path])
}

fn cmd_randomize(a: &args::RandomizeArgs) -> Result<()> {
    let run = Run::new("randomize", a);
    let ckpt = checkpoint_path(&a.ckpt);
    let (model, _) = load_model(&ckpt)?;
    let data = read_dataset(&a.data)?;
    let res = randomization_sweep(&model, &data, &a.levels, a.repeats, a.seed, a.bins)?;
    // largest latent shift among unrandomized rows; exactly zero by construction
    let zero_shift = res
        .delta_omega
        .iter()
        .zip(&res.delta_z_abs)
        .filter(|(w, _)| **w == 0.0)
        .flat_map(|(_, dz)| dz.iter().copied())
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let report = json!({
        "max_shift_at_zero": zero_shift,
        "score": res.score,
        "j_max": res.j_max,
        "mi": res.mi,
        "levels": a.levels,
        "repeats": a.repeats,
        "rows": res.delta_omega.len(),
    });
    let csv_path = a.out.with_extension("csv");
    write_atomic(&a.out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_atomic(&csv_path, res.to_csv().as_bytes())?;
    println!("attribute MIG {:.4} (latent {})", res.score, res.j_max);
    run.finish(
        &file_manifest(&a.out),
        json!({ "seed": a.seed }),
        &[&ckpt, &a.data],
        &[&a.out, &csv_path],
    )
}

fn graph_line(g: &Graph) -> String {
    let edges: Vec<[usize; 2]> = g.edges().map(|(i, j)| [i, j]).collect();
    json!({ "n": g.n(), "edges": edges }).to_string()
}

fn read_graph_lines(path: &Path) -> Result<Vec<Graph>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: Value = serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1))?;
            let n = v["n"]
                .as_u64()
                .ok_or_else(|| anyhow!("{}:{}: missing n", path.display(), i + 1))?;
            let edges: Vec<(usize, usize)> = serde_json::from_value(v["edges"].clone())
                .with_context(|| format!("{}:{}: bad edges", path.display(), i + 1))?;
            Ok(Graph::from_edges(n as usize, edges)?)
        })
        .collect()
}

fn cmd_sample(a: &args::SampleArgs) -> Result<()> {
    let run = Run::new("sample", a);
    let loaded = load_edge_list(&a.graph)?;
    let cfg = WalkConfig {
        walk_length: a.walk_length,
        p_return: a.p_return,
        q_inout: a.q_inout,
        max_nodes: a.max_nodes,
    };
    let samples = (0..a.count)
        .into_par_iter()
        .map(|i| rw_sample(&loaded.graph, &cfg, derive_seed(a.seed, i as u64)))
        .collect::<latentgraph::Result<Vec<_>>>()?;
    let mut text = String::new();
    for g in &samples {
        text.push_str(&graph_line(g));
        text.push('\n');
    }
    write_atomic(&a.out, text.as_bytes())?;
    println!(
        "sampled {} subgraphs from a {}-node graph ({} self-loops dropped)",
        samples.len(),
        loaded.graph.n(),
        loaded.dropped_self_loops
    );
    run.finish(&file_manifest(&a.out), json!({ "seed": a.seed }), &[&a.graph], &[&a.out])
}

fn cmd_stats(a: &args::StatsArgs) -> Result<()> {
    let run = Run::new("stats", a);
    let full = load_edge_list(&a.graph)?.graph;
    let mut inputs: Vec<&Path> = vec![&a.graph];
    let report = match &a.samples {
        Some(path) => {
            inputs.push(path);
            let samples = read_graph_lines(path)?;
            serde_json::to_value(sample_vs_population_stats(&full, &samples)?)?
        }
        None => serde_json::to_value(graph_stats(&full)?)?,
    };
    write_atomic(&a.out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    println!("wrote statistics to {}", a.out.display());
    run.finish(&file_manifest(&a.out), Value::Null, &inputs, &[&a.out])
}

/// Long flags accepted by a subcommand, including global ones.
fn flags_of(sub: &str) -> Option<Vec<String>> {
    let root = Cli::command();
    let cmd = root.find_subcommand(sub)?;
    let mut flags: Vec<String> = cmd
        .get_arguments()
        .chain(root.get_arguments())
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    flags.extend(["help".to_string(), "version".to_string()]);
    Some(flags)
}

fn cmd_verify(a: &args::VerifyArgs) -> Result<()> {
    let mut file = load_recipes(&a.recipes)?;
    let problems = check_flags(&file, flags_of);
    for p in &problems {
        eprintln!("{p}");
    }
    if !problems.is_empty() {
        bail!("{} recipe command problem(s) in {}", problems.len(), a.recipes.display());
    }
    if a.static_only {
        println!("{} recipes parse and use existing flags", file.recipes.len());
        return Ok(());
    }
    if let Some(only) = &a.only {
        file.recipes.retain(|r| only.contains(&r.name));
    }
    let runner = Runner {
        program: std::env::current_exe().context("locating the latentgraph binary")?,
        work_dir: a.work.clone(),
    };
    let report = runner.verify(&file)?;
    for o in &report.outcomes {
        println!("{} {}", if o.passed { "PASS" } else { "FAIL" }, o.name);
        for f in &o.failures {
            println!("    {f}");
        }
    }
    let failed: Vec<&str> = report.failures().map(|o| o.name.as_str()).collect();
    if !failed.is_empty() {
        bail!("failed recipes: {}", failed.join(", "));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the thread pool")?;
    log::debug!("running {}", cli.command.name());
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Traverse(a) => cmd_traverse(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Mig(a) => cmd_mig(a),
        Command::Randomize(a) => cmd_randomize(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Stats(a) => cmd_stats(a),
        Command::VerifyRecipes(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
