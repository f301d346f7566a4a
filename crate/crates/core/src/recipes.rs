//! Executable reproduction recipes.
//!
//! A recipe file is TOML holding a list of `[[recipe]]` tables, each with a
//! target claim, shell-free command lines and threshold checks over the JSON
//! files those commands write:
//!
//! ```toml
//! [[recipe]]
//! name = "er-mig"
//! target = "held-out ER graphs reach MIG >= 0.35"
//! expected = "mig.json with score in [0, 1]"
//! commands = [
//!   "latentgraph gen --family er --count 100 --seed 1 --out d.jsonl",
//! ]
//!
//! [[recipe.checks]]
//! kind = "json"
//! files = ["mig.json"]
//! pointer = "/score"
//! op = ">="
//! value = 0.35
//! ```
//!
//! Commands run sequentially in a working directory; a leading
//! `latentgraph` is replaced by the configured binary.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Program name that recipe commands use for the CLI.
pub const PROGRAM: &str = "latentgraph";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecipeFile {
    #[serde(default, rename = "recipe")]
    pub recipes: Vec<Recipe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    /// The claim being reproduced.
    pub target: String,
    #[serde(default)]
    pub expected: String,
    pub commands: Vec<String>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Op {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Op::Ge => a >= b,
            Op::Gt => a > b,
            Op::Le => a <= b,
            Op::Lt => a < b,
            Op::Eq => a == b,
            Op::Ne => a != b,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Ge => ">=",
            Op::Gt => ">",
            Op::Le => "<=",
            Op::Lt => "<",
            Op::Eq => "==",
            Op::Ne => "!=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    Median,
    Mean,
    Min,
    Max,
}

impl Reduce {
    fn apply(self, xs: &mut [f64]) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        match self {
            Reduce::Min => xs[0],
            Reduce::Max => xs[n - 1],
            Reduce::Mean => xs.iter().sum::<f64>() / n as f64,
            Reduce::Median if n % 2 == 1 => xs[n / 2],
            Reduce::Median => 0.5 * (xs[n / 2 - 1] + xs[n / 2]),
        }
    }
}

/// A number pulled from each of several JSON files and reduced to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub files: Vec<String>,
    pub pointer: String,
    pub reduce: Reduce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRef {
    pub file: String,
    pub pointer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// `value_at(file, pointer) op value` must hold in at least `min_pass`
    /// of `files` (all of them by default).
    Json {
        files: Vec<String>,
        pointer: String,
        op: Op,
        value: f64,
        min_pass: Option<usize>,
    },
    /// `reduce(left) op reduce(right)`.
    Compare { left: Aggregate, op: Op, right: Aggregate },
    /// In every file, exactly `count` elements of the array at `pointer`
    /// satisfy `op value`.
    ArrayCount {
        files: Vec<String>,
        pointer: String,
        op: Op,
        value: f64,
        count: usize,
    },
    /// The referenced values are pairwise distinct.
    Distinct { refs: Vec<ValueRef> },
}

impl Check {
    fn files(&self) -> Vec<&str> {
        match self {
            Check::Json { files, .. } | Check::ArrayCount { files, .. } => {
                files.iter().map(String::as_str).collect()
            }
            Check::Compare { left, right, .. } => left
                .files
                .iter()
                .chain(&right.files)
                .map(String::as_str)
                .collect(),
            Check::Distinct { refs } => refs.iter().map(|r| r.file.as_str()).collect(),
        }
    }
}

pub fn parse_recipes(text: &str) -> Result<RecipeFile> {
    let file: RecipeFile = toml::from_str(text).map_err(|e| Error::validation("recipe file", e.to_string()))?;
    let mut seen = BTreeSet::new();
    for r in &file.recipes {
        if !seen.insert(r.name.as_str()) {
            return Err(Error::validation("recipe file", format!("duplicate recipe name {:?}", r.name)));
        }
        for c in &r.checks {
            if c.files().is_empty() {
                return Err(Error::validation(
                    "recipe file",
                    format!("recipe {:?} has a check that names no files", r.name),
                ));
            }
            if let Check::Json { files, min_pass: Some(k), .. } = c {
                if *k > files.len() {
                    return Err(Error::validation(
                        "recipe file",
                        format!("recipe {:?}: min_pass {k} exceeds {} files", r.name, files.len()),
                    ));
                }
            }
        }
    }
    Ok(file)
}

pub fn load_recipes(path: &Path) -> Result<RecipeFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_recipes(&text)
}

/// Splits a command line on whitespace, honouring double quotes.
pub fn split_command(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut any = false;
    for ch in line.chars() {
        match ch {
            '"' => {
                quoted = !quoted;
                any = true;
            }
            c if c.is_whitespace() && !quoted => {
                if any {
                    out.push(std::mem::take(&mut cur));
                    any = false;
                }
            }
            c => {
                cur.push(c);
                any = true;
            }
        }
    }
    if any {
        out.push(cur);
    }
    out
}

/// Static check: every `latentgraph` command names a known subcommand and
/// only flags that subcommand accepts. `flags_of` returns the long flags
/// (without dashes) of a subcommand, or `None` when it does not exist.
pub fn check_flags(file: &RecipeFile, flags_of: impl Fn(&str) -> Option<Vec<String>>) -> Vec<String> {
    let mut problems = Vec::new();
    for r in &file.recipes {
        for line in &r.commands {
            let argv = split_command(line);
            if argv.first().map(String::as_str) != Some(PROGRAM) {
                continue;
            }
            let Some(sub) = argv.get(1) else {
                problems.push(format!("{}: missing subcommand in {line:?}", r.name));
                continue;
            };
            let Some(known) = flags_of(sub) else {
                problems.push(format!("{}: unknown subcommand {sub:?}", r.name));
                continue;
            };
            for arg in &argv[2..] {
                if let Some(flag) = arg.strip_prefix("--") {
                    let flag = flag.split('=').next().unwrap_or(flag);
                    if !known.iter().any(|k| k == flag) {
                        problems.push(format!("{}: {sub} has no flag --{flag}", r.name));
                    }
                }
            }
        }
    }
    problems
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeOutcome {
    pub name: String,
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecipeReport {
    pub outcomes: Vec<RecipeOutcome>,
}

impl RecipeReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RecipeOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }
}

#[derive(Debug, Clone)]
pub struct Runner {
    /// Binary substituted for a leading `latentgraph`.
    pub program: PathBuf,
    /// Each recipe runs in its own subdirectory of this one.
    pub work_dir: PathBuf,
}

impl Runner {
    pub fn verify(&self, file: &RecipeFile) -> Result<RecipeReport> {
        let mut report = RecipeReport::default();
        for r in &file.recipes {
            let dir = self.work_dir.join(&r.name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            log::info!("recipe {}: {}", r.name, r.target);
            let mut failures = Vec::new();
            for line in &r.commands {
                if let Err(msg) = self.run_command(line, &dir) {
                    failures.push(msg);
                    break;
                }
            }
            if failures.is_empty() {
                for c in &r.checks {
                    if let Err(msg) = evaluate_check(c, &dir) {
                        failures.push(msg);
                    }
                }
            }
            report.outcomes.push(RecipeOutcome {
                name: r.name.clone(),
                passed: failures.is_empty(),
                failures,
            });
        }
        Ok(report)
    }

    fn run_command(&self, line: &str, dir: &Path) -> std::result::Result<(), String> {
        let argv = split_command(line);
        let Some((head, rest)) = argv.split_first() else {
            return Ok(());
        };
        let program = if head == PROGRAM { self.program.clone() } else { PathBuf::from(head) };
        let out = Command::new(&program)
            .args(rest)
            .current_dir(dir)
            .output()
            .map_err(|e| format!("could not start {line:?}: {e}"))?;
        if out.status.success() {
            Ok(())
        } else {
            let err = String::from_utf8_lossy(&out.stderr);
            let last = err.lines().last().unwrap_or("").trim();
            Err(format!("command {line:?} failed ({}): {last}", out.status))
        }
    }
}

/// Runs every recipe in `file` with `runner`.
pub fn verify_recipes(file: &RecipeFile, runner: &Runner) -> Result<RecipeReport> {
    runner.verify(file)
}

fn read_json(dir: &Path, file: &str) -> std::result::Result<serde_json::Value, String> {
    let path = dir.join(file);
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{} is not JSON: {e}", path.display()))
}

fn lookup(dir: &Path, file: &str, pointer: &str) -> std::result::Result<serde_json::Value, String> {
    read_json(dir, file)?
        .pointer(pointer)
        .cloned()
        .ok_or_else(|| format!("{file}: nothing at {pointer}"))
}

fn number(dir: &Path, file: &str, pointer: &str) -> std::result::Result<f64, String> {
    lookup(dir, file, pointer)?
        .as_f64()
        .ok_or_else(|| format!("{file}: {pointer} is not a number"))
}

fn aggregate(a: &Aggregate, dir: &Path) -> std::result::Result<f64, String> {
    let mut xs = a
        .files
        .iter()
        .map(|f| number(dir, f, &a.pointer))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(a.reduce.apply(&mut xs))
}

/// Evaluates one check against files under `dir`.
pub fn evaluate_check(check: &Check, dir: &Path) -> std::result::Result<(), String> {
    match check {
        Check::Json {
            files,
            pointer,
            op,
            value,
            min_pass,
        } => {
            let need = min_pass.unwrap_or(files.len());
            let mut seen = Vec::new();
            let mut pass = 0;
            for f in files {
                let x = number(dir, f, pointer)?;
                pass += usize::from(op.holds(x, *value));
                seen.push(format!("{f}={x:.4}"));
            }
            if pass >= need {
                Ok(())
            } else {
                Err(format!(
                    "{pointer} {op} {value} held in {pass} of {} files, need {need} ({})",
                    files.len(),
                    seen.join(", ")
                ))
            }
        }
        Check::Compare { left, op, right } => {
            let (l, r) = (aggregate(left, dir)?, aggregate(right, dir)?);
            if op.holds(l, r) {
                Ok(())
            } else {
                Err(format!("{l:.4} {op} {r:.4} does not hold ({} vs {})", left.pointer, right.pointer))
            }
        }
        Check::ArrayCount {
            files,
            pointer,
            op,
            value,
            count,
        } => {
            for f in files {
                let v = lookup(dir, f, pointer)?;
                let arr = v.as_array().ok_or_else(|| format!("{f}: {pointer} is not an array"))?;
                let k = arr.iter().filter_map(|x| x.as_f64()).filter(|&x| op.holds(x, *value)).count();
                if k != *count {
                    return Err(format!("{f}: {k} elements of {pointer} are {op} {value}, expected {count}"));
                }
            }
            Ok(())
        }
        Check::Distinct { refs } => {
            let vals = refs
                .iter()
                .map(|r| lookup(dir, &r.file, &r.pointer))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            for a in 0..vals.len() {
                for b in a + 1..vals.len() {
                    if vals[a] == vals[b] {
                        return Err(format!(
                            "{}:{} and {}:{} are both {}",
                            refs[a].file, refs[a].pointer, refs[b].file, refs[b].pointer, vals[a]
                        ));
                    }
                }
            }
            Ok(())
        }
    }
}
