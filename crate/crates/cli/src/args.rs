use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use latentgraph::Family;
use serde::Serialize;

/// Closed interval written `lo:hi`; a single number means `lo = hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("{t:?} is not a number"))
        };
        let (lo, hi) = match s.split_once(':') {
            Some((a, b)) => (num(a)?, num(b)?),
            None => {
                let v = num(s)?;
                (v, v)
            }
        };
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(format!("expected lo:hi with lo <= hi, got {s:?}"));
        }
        Ok(Range { lo, hi })
    }
}

pub fn parse_family(s: &str) -> Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

/// Aliases keep clap from treating these as repeated flags: each is one
/// comma-separated value.
pub type Widths = Vec<usize>;
pub type Floats = Vec<f64>;
pub type Names = Vec<String>;

/// Comma-separated list of numbers.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| format!("{t:?} is not a valid number")))
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "latentgraph", version, about = "Learn and score disentangled generative parameters of graphs")]
pub struct Cli {
    /// Worker threads for data generation and evaluation (0 = all cores).
    /// Results are identical for every thread count.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a JSON Lines dataset of random graphs.
    Gen(GenArgs),
    /// Train a graph beta-VAE on a dataset.
    Train(TrainArgs),
    /// Decode evenly spaced points along one or two latent axes.
    Traverse(TraverseArgs),
    /// Encode a dataset and write posterior means next to the true parameters.
    Encode(EncodeArgs),
    /// Score latent/parameter alignment with the Mutual Information Gap.
    Mig(MigArgs),
    /// Measure how attribute randomization moves the latents.
    Randomize(RandomizeArgs),
    /// Draw random-walk subgraph samples from an edge list.
    Sample(SampleArgs),
    /// Topology statistics of a graph, optionally against samples of it.
    Stats(StatsArgs),
    /// Run a recipe file and check its thresholds.
    VerifyRecipes(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Train(_) => "train",
            Command::Traverse(_) => "traverse",
            Command::Encode(_) => "encode",
            Command::Mig(_) => "mig",
            Command::Randomize(_) => "randomize",
            Command::Sample(_) => "sample",
            Command::Stats(_) => "stats",
            Command::VerifyRecipes(_) => "verify-recipes",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Generator family: er, ba, sw or tree.
    #[arg(long, value_parser = parse_family)]
    #[serde(serialize_with = "ser_family")]
    pub family: Family,
    /// Node count range (er, ba, sw). Default 1:24 for er, 4:24 for ba, 5:24 for sw.
    #[arg(long)]
    pub n: Option<Range>,
    /// Link probability range (er). Default 0:1.
    #[arg(long)]
    pub p: Option<Range>,
    /// Edges per new node (ba). Default 1:3.
    #[arg(long)]
    pub m: Option<Range>,
    /// Even ring-lattice degree (sw). Default 2:4.
    #[arg(long)]
    pub k: Option<Range>,
    /// Rewiring probability (sw). Default 0:1.
    #[arg(long)]
    pub p_rewire: Option<Range>,
    /// Complete binary tree depth (tree). Default 0:3.
    #[arg(long)]
    pub depth: Option<Range>,
    /// Number of graphs.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Give each graph one uniform node attribute shared by all its nodes.
    #[arg(long)]
    pub attributes: bool,
    /// Dataset seed (defaults to $GD_SEED, else 0).
    #[arg(long, env = "GD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
}

fn ser_family<S: serde::Serializer>(f: &Family, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(f.name())
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Training dataset (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// KL weight.
    #[arg(long, default_value_t = 5.0)]
    pub beta: f64,
    /// Latent dimensionality J.
    #[arg(long, default_value_t = 4)]
    pub latent: usize,
    /// Weight of the parameter-decoder loss.
    #[arg(long = "lambda", default_value_t = 1.0)]
    pub lambda_param: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Padded node count.
    #[arg(long, default_value_t = 24)]
    pub n_max: usize,
    /// GCN layer widths.
    #[arg(long, default_value = "16,16", value_parser = parse_list::<usize>)]
    pub gcn_layers: Widths,
    /// Encoder dense widths between readout and latent heads.
    #[arg(long, default_value = "64", value_parser = parse_list::<usize>)]
    pub encoder_layers: Widths,
    /// Decoder dense widths.
    #[arg(long, default_value = "64,256", value_parser = parse_list::<usize>)]
    pub decoder_layers: Widths,
    /// Train on node attributes; on by default when every record has them.
    #[arg(long)]
    pub no_attributes: bool,
    /// Training seed (defaults to $GD_SEED, else 0).
    #[arg(long, env = "GD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory (checkpoint, history.csv, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TraverseArgs {
    /// Checkpoint file or training output directory.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Latent axis varied across rows.
    #[arg(long, default_value_t = 0)]
    pub axis: usize,
    #[arg(long, default_value = "-2:2")]
    pub range: Range,
    #[arg(long, default_value_t = 7)]
    pub steps: usize,
    /// Second axis varied across columns (grid mode).
    #[arg(long)]
    pub axis2: Option<usize>,
    #[arg(long, default_value = "-2:2")]
    pub range2: Range,
    #[arg(long, default_value_t = 7)]
    pub steps2: usize,
    /// Anchor for the other latents, comma-separated (default all zero).
    #[arg(long, value_parser = parse_list::<f64>)]
    pub base: Option<Floats>,
    /// Probability threshold for nodes and edges.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV of posterior means and true parameters.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MigArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Histogram bins for continuous columns.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Output JSON report; the MI matrix goes to the same path with a .csv extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RandomizeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset whose graphs carry node attributes.
    #[arg(long)]
    pub data: PathBuf,
    /// Randomization levels, comma-separated.
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", value_parser = parse_list::<f64>)]
    pub levels: Floats,
    /// Randomization draws per graph and level.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Randomization seed (defaults to $GD_SEED, else 0).
    #[arg(long, env = "GD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output JSON summary; per-row shifts go to the same path with a .csv extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Edge list: one `u v` pair per line, `#` comments.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 40)]
    pub walk_length: usize,
    /// Return parameter of the second-order walk.
    #[arg(long, default_value_t = 1.0)]
    pub p_return: f64,
    /// In-out parameter of the second-order walk.
    #[arg(long, default_value_t = 1.0)]
    pub q_inout: f64,
    #[arg(long, default_value_t = 24)]
    pub max_nodes: usize,
    /// Sampling seed (defaults to $GD_SEED, else 0).
    #[arg(long, env = "GD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output JSONL, one sampled graph per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Edge list of the full graph.
    #[arg(long)]
    pub graph: PathBuf,
    /// Sampled graphs (output of `sample`) to compare against the full graph.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Recipe file (TOML).
    #[arg(long)]
    pub recipes: PathBuf,
    /// Working directory for recipe outputs.
    #[arg(long, default_value = "recipe-runs")]
    pub work: PathBuf,
    /// Only check that the file parses and uses existing flags.
    #[arg(long)]
    pub static_only: bool,
    /// Run only the named recipe(s), comma-separated.
    #[arg(long, value_parser = parse_list::<String>)]
    pub only: Option<Names>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!("1:24".parse::<Range>().unwrap(), Range { lo: 1.0, hi: 24.0 });
        assert_eq!("0.5".parse::<Range>().unwrap(), Range { lo: 0.5, hi: 0.5 });
        assert_eq!("-2:2".parse::<Range>().unwrap(), Range { lo: -2.0, hi: 2.0 });
        assert!("3:1".parse::<Range>().is_err());
        assert!("a:b".parse::<Range>().is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("16, 16").unwrap(), vec![16, 16]);
        assert!(parse_list::<usize>("").unwrap().is_empty());
        assert!(parse_list::<usize>("1,x").is_err());
    }

    #[test]
    fn cli_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
