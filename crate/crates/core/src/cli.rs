//! Pipeline driver: stage functions over an output directory, the run
//! configuration, the JSON run report and the command-line front end.
//!
//! Artifacts in the output directory:
//! `pairs.txt`, `depth_<id>.dmap`, `filtered_<id>.dmap`, `cloud.ply`,
//! `cloud_<class>.ply` (with `--split`) and `report.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth_filter::{filter_all, FilterParams};
use crate::pair_select::{select_pairs, PairEntry, PairParams, PairSet};
use crate::patchmatch::{MatchParams, PatchMatcher};
use crate::scene_io::{load_scene, read_depthmap, write_depthmap, write_ply, DepthMaps, Scene};
use crate::semantic_fusion::{fuse, split_by_class, FusedCloud, SemanticMode};
use crate::synth::{generate_scene, SynthSpec};

pub const PAIRS_FILE: &str = "pairs.txt";
pub const REPORT_FILE: &str = "report.json";
pub const CLOUD_FILE: &str = "cloud.ply";

pub fn depth_file(id: u32) -> String {
    format!("depth_{id}.dmap")
}

pub fn filtered_file(id: u32) -> String {
    format!("filtered_{id}.dmap")
}

/// A failure tagged with the pipeline stage that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl StageError {
    fn new(stage: &'static str, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

fn tag<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> StageError {
    move |e| StageError::new(stage, e)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scene: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub pairs: PairParams,
    pub matching: MatchParams,
    pub filter: FilterParams,
    /// Class names to fuse; `None` fuses every labeled pixel.
    pub classes: Option<Vec<String>>,
    pub strict: bool,
    pub split: bool,
    /// Seed for every random draw; overrides `matching.seed`.
    pub seed: u64,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, StageError> {
        let text = fs::read_to_string(path)
            .map_err(|e| StageError::new("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| StageError::new("config", format!("{}: {e}", path.display())))
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            seed: self.seed,
            ..self.matching
        }
    }

    fn scene_path(&self) -> Result<&Path, StageError> {
        self.scene
            .as_deref()
            .ok_or_else(|| StageError::new("config", "no scene manifest given (--scene)"))
    }

    fn out_dir(&self) -> Result<&Path, StageError> {
        self.out
            .as_deref()
            .ok_or_else(|| StageError::new("config", "no output directory given (--out)"))
    }

    pub fn validate(&self) -> Result<(), StageError> {
        self.pairs.validate().map_err(tag("config"))?;
        self.match_params().validate().map_err(tag("config"))?;
        self.filter.validate().map_err(tag("config"))?;
        if self.jobs == Some(0) {
            return Err(StageError::new("config", "jobs must be >= 1"));
        }
        Ok(())
    }

    pub fn semantic_mode(&self, scene: &Scene) -> Result<SemanticMode, StageError> {
        match &self.classes {
            Some(names) => {
                SemanticMode::from_names(names, self.strict, scene.classes()).map_err(tag("fuse"))
            }
            None => Ok(SemanticMode {
                class_filter: None,
                cross_view_strict: self.strict,
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionReport {
    pub points: usize,
    /// Point count per class name.
    pub per_class: BTreeMap<String, usize>,
}

/// Machine-readable summary of the stages run into an output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Report {
    pub scene: String,
    pub seed: u64,
    pub pairs_selected: Option<usize>,
    /// Valid-pixel fraction per view before filtering.
    pub valid_before_filter: BTreeMap<u32, f64>,
    /// Valid-pixel fraction per view after filtering.
    pub valid_after_filter: BTreeMap<u32, f64>,
    pub fused: Option<FusionReport>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn load_or_default(out: &Path) -> Self {
        fs::read_to_string(out.join(REPORT_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    fn save(&self, out: &Path) -> Result<(), StageError> {
        let text = serde_json::to_string_pretty(self).map_err(tag("report"))? + "\n";
        write_file(&out.join(REPORT_FILE), text.as_bytes(), "report")
    }

    fn warn(&mut self, message: String) {
        warn!("{message}");
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }
}

fn write_file(path: &Path, bytes: &[u8], stage: &'static str) -> Result<(), StageError> {
    fs::write(path, bytes).map_err(|e| StageError::new(stage, format!("{}: {e}", path.display())))
}

/// Loads the scene and prepares the output directory.
pub struct Workspace {
    pub config: RunConfig,
    pub scene: Scene,
    pub out: PathBuf,
}

impl Workspace {
    pub fn open(config: RunConfig) -> Result<Self, StageError> {
        config.validate()?;
        let path = config.scene_path()?;
        let scene = load_scene(path).map_err(tag("load"))?;
        let out = config.out_dir()?.to_path_buf();
        fs::create_dir_all(&out)
            .map_err(|e| StageError::new("load", format!("{}: {e}", out.display())))?;
        Ok(Self { config, scene, out })
    }

    fn report(&self) -> Report {
        let mut report = Report::load_or_default(&self.out);
        report.scene = self.scene.name().to_string();
        report.seed = self.config.seed;
        report
    }

    /// Selects pairs and writes `pairs.txt`.
    pub fn pairs(&self) -> Result<PairSet, StageError> {
        let pairs = select_pairs(&self.scene, &self.config.pairs);
        write_file(
            &self.out.join(PAIRS_FILE),
            pairs.to_string().as_bytes(),
            "pairs",
        )?;
        let mut report = self.report();
        report.pairs_selected = Some(pairs.len());
        if pairs.is_empty() {
            report.warn("no stereo pairs were selected".into());
        }
        report.save(&self.out)?;
        info!("selected {} pairs", pairs.len());
        Ok(pairs)
    }

    /// Pairs from `pairs.txt` when present, otherwise freshly selected.
    pub fn load_pairs(&self) -> Result<PairSet, StageError> {
        let path = self.out.join(PAIRS_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => parse_pairs(&text)
                .map_err(|e| StageError::new("pairs", format!("{}: {e}", path.display()))),
            Err(_) => Ok(select_pairs(&self.scene, &self.config.pairs)),
        }
    }

    /// Computes and writes depth maps for `only` (or every reference with
    /// targets).
    pub fn depth(&self, pairs: &PairSet, only: Option<u32>) -> Result<DepthMaps, StageError> {
        let params = self.config.match_params();
        let refs: Vec<u32> = match only {
            Some(id) => {
                if self.scene.view(id).is_none() {
                    return Err(StageError::new("depth", format!("unknown view {id}")));
                }
                vec![id]
            }
            None => pairs.references().collect(),
        };
        let mut report = self.report();
        if refs.is_empty() {
            report.warn("no reference view has stereo targets; no depth maps computed".into());
        }
        let maps = refs
            .par_iter()
            .map(|&id| {
                let reference = self.scene.view(id).expect("checked above");
                let targets = pairs
                    .target_ids(id)
                    .into_iter()
                    .filter_map(|t| self.scene.view(t))
                    .collect();
                let matcher = PatchMatcher::new(&self.scene, reference, targets, &params)
                    .map_err(|e| StageError::new("depth", format!("view {id}: {e}")))?;
                let map = matcher.run();
                let path = self.out.join(depth_file(id));
                write_depthmap(&path, &map)
                    .map_err(|e| StageError::new("depth", format!("{}: {e}", path.display())))?;
                info!("view {id}: {:.1}% valid", 100.0 * map.valid_fraction());
                Ok((id, map))
            })
            .collect::<Result<DepthMaps, StageError>>()?;
        for (id, map) in &maps {
            report.valid_before_filter.insert(*id, map.valid_fraction());
        }
        report.save(&self.out)?;
        Ok(maps)
    }

    fn read_maps(
        &self,
        name: fn(u32) -> String,
        stage: &'static str,
    ) -> Result<DepthMaps, StageError> {
        let mut maps = DepthMaps::new();
        for view in self.scene.views() {
            let path = self.out.join(name(view.id));
            if path.exists() {
                let map = read_depthmap(&path)
                    .map_err(|e| StageError::new(stage, format!("{}: {e}", path.display())))?;
                maps.insert(view.id, map);
            }
        }
        Ok(maps)
    }

    /// Filters every `depth_<id>.dmap` against the unfiltered maps of its
    /// targets and writes `filtered_<id>.dmap`.
    pub fn filter(&self, pairs: &PairSet) -> Result<DepthMaps, StageError> {
        let maps = self.read_maps(depth_file, "filter")?;
        if maps.is_empty() {
            return Err(StageError::new(
                "filter",
                "no depth maps found; run the depth stage first",
            ));
        }
        let filtered =
            filter_all(&self.scene, pairs, &maps, &self.config.filter).map_err(tag("filter"))?;
        let mut report = self.report();
        for (id, map) in &filtered {
            let path = self.out.join(filtered_file(*id));
            write_depthmap(&path, map)
                .map_err(|e| StageError::new("filter", format!("{}: {e}", path.display())))?;
            report.valid_after_filter.insert(*id, map.valid_fraction());
        }
        report.save(&self.out)?;
        Ok(filtered)
    }

    /// Fuses the filtered maps into `cloud.ply` and, when splitting, one
    /// cloud per class.
    pub fn fuse(&self, pairs: &PairSet) -> Result<FusedCloud, StageError> {
        let maps = self.read_maps(filtered_file, "fuse")?;
        if maps.is_empty() {
            return Err(StageError::new(
                "fuse",
                "no filtered depth maps found; run the filter stage first",
            ));
        }
        let mode = self.config.semantic_mode(&self.scene)?;
        let cloud =
            fuse(&self.scene, &maps, pairs, &self.config.filter, &mode).map_err(tag("fuse"))?;
        let write = |path: PathBuf, cloud: &FusedCloud| {
            write_ply(&path, cloud)
                .map_err(|e| StageError::new("fuse", format!("{}: {e}", path.display())))
        };
        write(self.out.join(CLOUD_FILE), &cloud)?;
        let classes = self.scene.classes();
        if self.config.split {
            for (id, part) in split_by_class(&cloud, classes) {
                let name = classes.name(id).expect("split yields table classes");
                write(self.out.join(format!("cloud_{name}.ply")), &part)?;
            }
        }
        let mut report = self.report();
        let per_class = cloud
            .count_by_label()
            .into_iter()
            .map(|(id, n)| {
                (
                    classes
                        .name(id)
                        .map_or_else(|| id.to_string(), str::to_string),
                    n,
                )
            })
            .collect();
        report.fused = Some(FusionReport {
            points: cloud.len(),
            per_class,
        });
        if cloud.is_empty() {
            let which = self
                .config
                .classes
                .as_ref()
                .map_or_else(|| "any class".to_string(), |c| c.join(","));
            report.warn(format!("fusion produced zero points for {which}"));
        }
        report.save(&self.out)?;
        info!("fused {} points", cloud.len());
        Ok(cloud)
    }

    /// All stages in order.
    pub fn run(&self) -> Result<(Report, FusedCloud), StageError> {
        let pairs = self.pairs()?;
        self.depth(&pairs, None)?;
        self.filter(&pairs)?;
        let cloud = self.fuse(&pairs)?;
        Ok((self.report(), cloud))
    }
}

/// Parses the `ref target shared angle baseline` lines of `pairs.txt`.
pub fn parse_pairs(text: &str) -> Result<PairSet, String> {
    let mut pairs: BTreeMap<u32, Vec<PairEntry>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || {
            format!(
                "line {}: expected `ref target shared angle baseline`",
                n + 1
            )
        };
        if f.len() != 5 {
            return Err(bad());
        }
        let reference: u32 = f[0].parse().map_err(|_| bad())?;
        let entry = PairEntry {
            target: f[1].parse().map_err(|_| bad())?,
            shared: f[2].parse().map_err(|_| bad())?,
            angle_deg: f[3].parse().map_err(|_| bad())?,
            baseline: f[4].parse().map_err(|_| bad())?,
        };
        pairs.entry(reference).or_default().push(entry);
    }
    Ok(PairSet { pairs })
}

#[derive(Debug, Parser)]
#[command(
    name = "semvs",
    version,
    about = "Semantic multi-view stereo from posed, labeled images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select stereo pairs and write pairs.txt.
    Pairs(CommonArgs),
    /// Compute depth maps.
    Depth {
        #[command(flatten)]
        common: CommonArgs,
        /// Only this reference view.
        #[arg(long = "ref")]
        reference: Option<u32>,
    },
    /// Filter depth maps for multi-view coherence.
    Filter(CommonArgs),
    /// Fuse filtered depth maps into a labeled point cloud.
    Fuse(CommonArgs),
    /// Run every stage.
    Run(CommonArgs),
    /// Render a synthetic scene from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Scene manifest.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Comma-separated class names to fuse.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Require cross-view label agreement.
    #[arg(long)]
    pub strict: bool,
    /// Also write one cloud per class.
    #[arg(long)]
    pub split: bool,
    /// Match window half-size.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

impl CommonArgs {
    pub fn config(&self) -> Result<RunConfig, StageError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.scene.is_some() {
            c.scene.clone_from(&self.scene);
        }
        if self.out.is_some() {
            c.out.clone_from(&self.out);
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
        if let Some(k) = self.k {
            c.filter.k = k;
        }
        if let Some(tau) = self.tau {
            c.filter.tau = tau;
        }
        if self.classes.is_some() {
            c.classes.clone_from(&self.classes);
        }
        c.strict |= self.strict;
        c.split |= self.split;
        if let Some(w) = self.window {
            c.matching.half_window = w;
        }
        if let Some(it) = self.iterations {
            c.matching.iterations = it;
        }
        Ok(c)
    }
}

fn with_pool<T>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T, StageError> + Send,
) -> Result<T, StageError>
where
    T: Send,
{
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(tag("config"))?
            .install(f),
        None => f(),
    }
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Synth { spec, out } => {
            let text = fs::read_to_string(&spec)
                .map_err(|e| StageError::new("synth", format!("{}: {e}", spec.display())))?;
            let spec: SynthSpec = serde_json::from_str(&text)
                .map_err(|e| StageError::new("synth", format!("{}: {e}", spec.display())))?;
            let (path, _) = generate_scene(&spec, &out).map_err(tag("synth"))?;
            info!("wrote {}", path.display());
            Ok(())
        }
        Command::Pairs(args) => {
            let ws = Workspace::open(args.config()?)?;
            let pairs = ws.pairs()?;
            print!("{pairs}");
            Ok(())
        }
        Command::Depth { common, reference } => {
            let ws = Workspace::open(common.config()?)?;
            with_pool(ws.config.jobs, || {
                let pairs = ws.load_pairs()?;
                ws.depth(&pairs, reference).map(drop)
            })
        }
        Command::Filter(args) => {
            let ws = Workspace::open(args.config()?)?;
            with_pool(ws.config.jobs, || {
                let pairs = ws.load_pairs()?;
                ws.filter(&pairs).map(drop)
            })
        }
        Command::Fuse(args) => {
            let ws = Workspace::open(args.config()?)?;
            with_pool(ws.config.jobs, || {
                let pairs = ws.load_pairs()?;
                ws.fuse(&pairs).map(drop)
            })
        }
        Command::Run(args) => {
            let ws = Workspace::open(args.config()?)?;
            with_pool(ws.config.jobs, || ws.run().map(drop))
        }
    }
}
