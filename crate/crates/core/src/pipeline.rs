//! End-to-end run: config validation, stage execution with an on-disk
//! cache keyed by content hashes, and the run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::access::{hex_metrics, read_hex_metrics, read_smi, write_hex_metrics, write_scatter};
use crate::anchors::{detect_anchors, AnchorOutcome};
use crate::geo::{
    assign_hexes, build_hex_grid, disaggregate, hexgrid_geojson, project_towers, voronoi, voronoi_geojson,
    HexCell, HexCoord, StudyBoundary,
};
use crate::ingest::{
    bin_hourly, filter_active_users, parse_events, parse_timezone, DropReason, HourlyCounts, ParseOptions,
    StudyMonth, TowerRegistry,
};
use crate::router::{Network, RouterConfig, TravelTimeMatrix};
use crate::spatial::{bivariate_lisa, build_weights, lisa_geojson, read_lisa_csv, write_lisa_csv, LisaConfig};
use crate::stats::{cluster_composition_report, read_demographics, MnlConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Stage { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub events: PathBuf,
    pub bts: PathBuf,
    pub boundary: PathBuf,
    pub gtfs: PathBuf,
    pub streets: PathBuf,
    pub smi: PathBuf,
    pub demographics: PathBuf,
}

impl Inputs {
    fn entries(&self) -> [(&'static str, &PathBuf); 7] {
        [
            ("events", &self.events),
            ("bts", &self.bts),
            ("boundary", &self.boundary),
            ("gtfs", &self.gtfs),
            ("streets", &self.streets),
            ("smi", &self.smi),
            ("demographics", &self.demographics),
        ]
    }

    fn entries_mut(&mut self) -> [&mut PathBuf; 7] {
        [
            &mut self.events,
            &mut self.bts,
            &mut self.boundary,
            &mut self.gtfs,
            &mut self.streets,
            &mut self.smi,
            &mut self.demographics,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub month: StudyMonth,
    pub timezone: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub naive_timestamps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeoConfig {
    pub hex_edge_m: f64,
    pub tie_break: String,
}

impl Default for GeoConfig {
    fn default() -> Self {
        Self {
            hex_edge_m: 174.0,
            tie_break: "min_bts_id".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccessConfig {
    /// Impedance threshold in minutes; the citywide mean commute when absent.
    pub threshold_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LisaSection {
    pub permutations: u32,
    pub alpha: f64,
    /// Falls back to the global seed.
    pub seed: Option<u64>,
}

impl Default for LisaSection {
    fn default() -> Self {
        let d = LisaConfig::default();
        Self {
            permutations: d.permutations,
            alpha: d.alpha,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub study: StudyConfig,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub geo: GeoConfig,
    #[serde(default)]
    pub router: RouterConfig,
    #[serde(default)]
    pub access: AccessConfig,
    #[serde(default)]
    pub lisa: LisaSection,
    #[serde(default)]
    pub stats: MnlConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Parses the file and resolves relative paths against its directory.
    /// Nothing is checked on disk yet; see [`RunConfig::validate`].
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.inputs.entries_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Validation(m));
        for (key, p) in self.inputs.entries() {
            if !p.exists() {
                return bad(format!("inputs.{key}: path does not exist: {}", p.display()));
            }
        }
        for (key, p) in [("inputs.gtfs", &self.inputs.gtfs), ("inputs.streets", &self.inputs.streets)] {
            if !p.is_dir() {
                return bad(format!("{key}: expected a directory: {}", p.display()));
            }
        }
        if let Err(e) = parse_timezone(&self.study.timezone) {
            return bad(format!("study.timezone: {e}"));
        }
        if !(self.geo.hex_edge_m > 0.0 && self.geo.hex_edge_m.is_finite()) {
            return bad(format!("geo.hex_edge_m must be positive, got {}", self.geo.hex_edge_m));
        }
        if self.geo.tie_break != "min_bts_id" {
            return bad(format!("geo.tie_break: only `min_bts_id` is supported, got `{}`", self.geo.tie_break));
        }
        if let Err(e) = self.router.validate() {
            return bad(e.to_string());
        }
        if let Some(t) = self.access.threshold_min {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("access.threshold_min must be positive, got {t}"));
            }
        }
        if !(self.lisa.alpha > 0.0 && self.lisa.alpha <= 1.0) {
            return bad(format!("lisa.alpha must lie in (0, 1], got {}", self.lisa.alpha));
        }
        if !(self.stats.l2 >= 0.0 && self.stats.tol > 0.0 && self.stats.max_iter > 0) {
            return bad("stats: l2 must be >= 0, tol > 0 and max_iter > 0".into());
        }
        Ok(())
    }

    fn lisa_config(&self) -> LisaConfig {
        LisaConfig {
            permutations: self.lisa.permutations,
            alpha: self.lisa.alpha,
            seed: self.lisa.seed.unwrap_or(self.seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Anchors,
    Grid,
    Matrix,
    Access,
    Lisa,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Anchors,
        Stage::Grid,
        Stage::Matrix,
        Stage::Access,
        Stage::Lisa,
        Stage::Stats,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Anchors => "anchors",
            Stage::Grid => "grid",
            Stage::Matrix => "matrix",
            Stage::Access => "access",
            Stage::Lisa => "lisa",
            Stage::Stats => "stats",
        }
    }

    fn upstream(&self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Anchors => &[Stage::Ingest],
            Stage::Grid => &[Stage::Anchors],
            Stage::Matrix => &[Stage::Grid],
            Stage::Access => &[Stage::Anchors, Stage::Grid, Stage::Matrix],
            Stage::Lisa => &[Stage::Grid, Stage::Access],
            Stage::Stats => &[Stage::Lisa],
        }
    }

    fn inputs(&self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["events", "bts"],
            Stage::Anchors => &[],
            Stage::Grid => &["boundary", "bts"],
            Stage::Matrix => &["boundary", "gtfs", "streets"],
            Stage::Access => &["smi"],
            Stage::Lisa => &["boundary"],
            Stage::Stats => &["demographics"],
        }
    }

    fn settings(&self, cfg: &RunConfig) -> Value {
        match self {
            Stage::Ingest => json!({ "study": cfg.study, "ingest": cfg.ingest }),
            Stage::Anchors => json!({ "study": cfg.study }),
            Stage::Grid => json!({ "geo": cfg.geo }),
            Stage::Matrix => json!({ "router": cfg.router }),
            Stage::Access => json!({ "access": cfg.access }),
            Stage::Lisa => json!({ "lisa": cfg.lisa_config() }),
            Stage::Stats => json!({ "stats": cfg.stats }),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub cache_hit: bool,
    pub seconds: f64,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    outputs: BTreeMap<String, String>,
}

pub const MANIFEST: &str = "manifest.json";
pub const DIRTY: &str = "DIRTY";
const CACHE_DIR: &str = ".stages";

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Hash of a file, or of a directory's sorted (name, content hash) listing.
pub fn sha256_path(path: &Path) -> std::io::Result<String> {
    if !path.is_dir() {
        return sha256_file(path);
    }
    let mut names: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.update(name.as_bytes());
        h.update([0]);
        h.update(sha256_path(&p)?.as_bytes());
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}

fn sha256_bytes(b: &[u8]) -> String {
    hex::encode(Sha256::digest(b))
}

/// Runs every stage up to and including `through`, reusing cached outputs
/// whose keys still match, and writes `manifest.json`.
pub fn run(cfg: &RunConfig, through: Stage) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let fail = |stage: Stage, message: String| PipelineError::Stage { stage, message };
    fs::create_dir_all(out.join(CACHE_DIR)).map_err(|e| fail(Stage::Ingest, format!("cannot create output dir: {e}")))?;

    let mut inputs = BTreeMap::new();
    for (name, p) in cfg.inputs.entries() {
        let h = sha256_path(p).map_err(|e| PipelineError::Validation(format!("inputs.{name}: {e}")))?;
        inputs.insert(name.to_string(), h);
    }
    let config_hash = sha256_bytes(&serde_json::to_vec(cfg).expect("config serializes"));

    let mut records: BTreeMap<Stage, StageRecord> = BTreeMap::new();
    for stage in Stage::ALL.into_iter().filter(|s| *s <= through) {
        let key_doc = json!({
            "stage": stage.name(),
            "version": VERSION,
            "settings": stage.settings(cfg),
            "inputs": stage.inputs().iter().map(|n| (n.to_string(), inputs[*n].clone())).collect::<BTreeMap<_, _>>(),
            "upstream": stage.upstream().iter().map(|u| (u.name(), records[u].outputs.clone())).collect::<BTreeMap<_, _>>(),
        });
        let key = sha256_bytes(&serde_json::to_vec(&key_doc).expect("key serializes"));
        let cache_path = out.join(CACHE_DIR).join(format!("{}.json", stage.name()));
        let started = Instant::now();

        if let Some(outputs) = cached_outputs(&cache_path, &key, out) {
            log::info!("stage {stage}: cache hit");
            records.insert(
                stage,
                StageRecord {
                    name: stage.name().into(),
                    key,
                    cache_hit: true,
                    seconds: started.elapsed().as_secs_f64(),
                    outputs,
                },
            );
            continue;
        }

        log::info!("stage {stage}: running");
        let _ = fs::remove_file(&cache_path);
        let produced = match execute(stage, cfg) {
            Ok(files) => files,
            Err(message) => {
                let _ = fs::write(out.join(DIRTY), format!("stage {stage} failed: {message}\n"));
                return Err(fail(stage, message));
            }
        };
        let mut outputs = BTreeMap::new();
        for f in produced {
            let h = sha256_file(&out.join(&f)).map_err(|e| fail(stage, format!("{f}: {e}")))?;
            outputs.insert(f, h);
        }
        let entry = CacheEntry {
            key: key.clone(),
            outputs: outputs.clone(),
        };
        fs::write(&cache_path, serde_json::to_vec_pretty(&entry).expect("entry serializes"))
            .map_err(|e| fail(stage, format!("cannot write cache record: {e}")))?;
        let seconds = started.elapsed().as_secs_f64();
        log::info!("stage {stage}: done in {seconds:.2}s");
        records.insert(
            stage,
            StageRecord {
                name: stage.name().into(),
                key,
                cache_hit: false,
                seconds,
                outputs,
            },
        );
    }

    let outputs = records
        .values()
        .flat_map(|r| r.outputs.iter().map(|(k, v)| (k.clone(), v.clone())))
        .collect();
    let manifest = Manifest {
        version: VERSION.into(),
        config_hash,
        inputs,
        stages: records.into_values().collect(),
        outputs,
    };
    fs::write(out.join(MANIFEST), serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))
        .map_err(|e| fail(through, format!("cannot write manifest: {e}")))?;
    let _ = fs::remove_file(out.join(DIRTY));
    Ok(manifest)
}

fn cached_outputs(cache_path: &Path, key: &str, out: &Path) -> Option<BTreeMap<String, String>> {
    let entry: CacheEntry = serde_json::from_slice(&fs::read(cache_path).ok()?).ok()?;
    if entry.key != key {
        return None;
    }
    for (f, h) in &entry.outputs {
        if sha256_file(&out.join(f)).ok()? != *h {
            return None;
        }
    }
    Some(entry.outputs)
}

type StageResult = Result<Vec<String>, String>;

fn execute(stage: Stage, cfg: &RunConfig) -> StageResult {
    match stage {
        Stage::Ingest => stage_ingest(cfg),
        Stage::Anchors => stage_anchors(cfg),
        Stage::Grid => stage_grid(cfg),
        Stage::Matrix => stage_matrix(cfg),
        Stage::Access => stage_access(cfg),
        Stage::Lisa => stage_lisa(cfg),
        Stage::Stats => stage_stats(cfg),
    }
}

fn create(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>, String> {
    File::create(cfg.output_dir.join(name))
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {name}: {e}"))
}

fn write_json(cfg: &RunConfig, name: &str, v: &impl Serialize) -> Result<String, String> {
    let mut w = create(cfg, name)?;
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| e.to_string())?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| e.to_string())?;
    Ok(name.to_string())
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn stage_ingest(cfg: &RunConfig) -> StageResult {
    let tz = parse_timezone(&cfg.study.timezone).map_err(|e| e.to_string())?;
    let registry = TowerRegistry::load(&cfg.inputs.bts).map_err(|e| e.to_string())?;
    let opts = ParseOptions {
        month: cfg.study.month,
        tz,
        naive_timestamps: cfg.ingest.naive_timestamps,
    };
    let (events, report) = parse_events(&cfg.inputs.events, &registry, &opts).map_err(|e| e.to_string())?;
    let counts = bin_hourly(&events, &tz);
    let active = filter_active_users(&counts, cfg.study.month);

    let mut w = create(cfg, "hourly_counts.csv")?;
    counts.write_csv(&mut w).map_err(|e| e.to_string())?;
    let mut w = create(cfg, "active_users.csv")?;
    writeln!(w, "user_id").map_err(|e| e.to_string())?;
    for u in &active {
        writeln!(w, "{u}").map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())?;
    let summary = json!({
        "rows_read": report.rows_read,
        "retained": report.retained,
        "dropped": {
            "malformed": report.dropped(DropReason::Malformed),
            "unknown_tower": report.dropped(DropReason::UnknownTower),
            "outside_month": report.dropped(DropReason::OutsideMonth),
        },
        "users": counts.users.len(),
        "active_users": active.len(),
    });
    Ok(vec![
        "hourly_counts.csv".into(),
        "active_users.csv".into(),
        write_json(cfg, "ingest_report.json", &summary)?,
    ])
}

fn read_active(path: &Path) -> Result<BTreeSet<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.lines().skip(1).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn stage_anchors(cfg: &RunConfig) -> StageResult {
    let counts = HourlyCounts::read_csv(&out_path(cfg, "hourly_counts.csv")).map_err(|e| e.to_string())?;
    let active = read_active(&out_path(cfg, "active_users.csv"))?;
    let outcome = detect_anchors(&counts, &active, cfg.study.month);
    let mut w = create(cfg, "anchors.csv")?;
    outcome.write_anchors_csv(&mut w).map_err(|e| e.to_string())?;
    let mut w = create(cfg, "rejected.csv")?;
    outcome.write_rejected_csv(&mut w).map_err(|e| e.to_string())?;
    Ok(vec!["anchors.csv".into(), "rejected.csv".into()])
}

fn read_anchors(cfg: &RunConfig) -> Result<AnchorOutcome, String> {
    AnchorOutcome::read_csv(&out_path(cfg, "anchors.csv"), &out_path(cfg, "rejected.csv")).map_err(|e| e.to_string())
}

pub const HEXES_HEADER: [&str; 4] = ["hex_id", "assigned_bts", "user_share", "opportunity_share"];

pub fn write_hexes_csv<W: Write>(hexes: &[HexCell], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEXES_HEADER)?;
    for h in hexes {
        wtr.write_record([
            h.hex_id.to_string(),
            h.assigned_bts.clone().unwrap_or_default(),
            h.user_share.to_string(),
            h.opportunity_share.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_hexes_csv(path: &Path, edge_m: f64) -> Result<Vec<HexCell>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let id: HexCoord = rec[0].parse().map_err(|e| format!("{}: {e}", path.display()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| format!("{}: {e}", path.display()));
        let mut h = HexCell::new(id, edge_m);
        h.assigned_bts = Some(rec[1].to_string()).filter(|s| !s.is_empty());
        h.user_share = num(2)?;
        h.opportunity_share = num(3)?;
        out.push(h);
    }
    Ok(out)
}

fn load_boundary(cfg: &RunConfig) -> Result<(StudyBoundary, crate::geo::ProjectedPlane), String> {
    let b = StudyBoundary::load(&cfg.inputs.boundary).map_err(|e| e.to_string())?;
    let plane = b.plane();
    Ok((b, plane))
}

fn stage_grid(cfg: &RunConfig) -> StageResult {
    let (boundary, plane) = load_boundary(cfg)?;
    let region = boundary.region(&plane).map_err(|e| e.to_string())?;
    let registry = TowerRegistry::load(&cfg.inputs.bts).map_err(|e| e.to_string())?;
    let sites = project_towers(&registry, &plane).map_err(|e| e.to_string())?;
    let cells = voronoi(&sites, &region).map_err(|e| e.to_string())?;
    let grid = build_hex_grid(&region, cfg.geo.hex_edge_m).map_err(|e| e.to_string())?;
    let (mut hexes, dropped) = assign_hexes(&grid, &cells);
    if dropped > 0 {
        log::warn!("{dropped} hexes overlap no Voronoi cell and were dropped");
    }
    let anchors = read_anchors(cfg)?;
    let (home, work) = anchors.tower_totals();
    disaggregate(&home, &work, &mut hexes).map_err(|e| e.to_string())?;

    let mut w = create(cfg, "hexes.csv")?;
    write_hexes_csv(&hexes, &mut w).map_err(|e| e.to_string())?;
    Ok(vec![
        "hexes.csv".into(),
        write_json(cfg, "hexgrid.geojson", &hexgrid_geojson(&plane, &hexes))?,
        write_json(cfg, "voronoi.geojson", &voronoi_geojson(&plane, &cells))?,
    ])
}

fn stage_matrix(cfg: &RunConfig) -> StageResult {
    let (_, plane) = load_boundary(cfg)?;
    let hexes = read_hexes_csv(&out_path(cfg, "hexes.csv"), cfg.geo.hex_edge_m)?;
    let net = Network::build(&cfg.inputs.gtfs, &cfg.inputs.streets, &plane, cfg.router.clone())
        .map_err(|e| e.to_string())?;
    let origins: Vec<_> = hexes.iter().filter(|h| h.user_share > 0.0).map(|h| (h.hex_id, h.center)).collect();
    let dests: Vec<_> = hexes
        .iter()
        .filter(|h| h.opportunity_share > 0.0)
        .map(|h| (h.hex_id, h.center))
        .collect();
    let m = net.build_matrix(&origins, &dests);
    let mut w = create(cfg, "matrix.csv")?;
    m.write_csv(&mut w).map_err(|e| e.to_string())?;
    let unreachable = m.minutes.iter().filter(|v| !v.is_finite()).count();
    let summary = json!({
        "stops": net.transit.stops.len(),
        "source_routes": net.transit.source_route_count,
        "routes": net.transit.routes.len(),
        "trips": net.transit.trip_count(),
        "street_nodes": net.walk.len(),
        "street_edges": net.walk.edge_count(),
        "departures": net.departures(),
        "origins": m.origins.len(),
        "destinations": m.destinations.len(),
        "unreachable_pairs": unreachable,
    });
    Ok(vec!["matrix.csv".into(), write_json(cfg, "network_report.json", &summary)?])
}

fn stage_access(cfg: &RunConfig) -> StageResult {
    let hexes = read_hexes_csv(&out_path(cfg, "hexes.csv"), cfg.geo.hex_edge_m)?;
    let anchors = read_anchors(cfg)?;
    let matrix = TravelTimeMatrix::read_csv(&out_path(cfg, "matrix.csv")).map_err(|e| e.to_string())?;
    let smi = read_smi(&cfg.inputs.smi).map_err(|e| e.to_string())?;
    let report = hex_metrics(&hexes, &anchors.anchors, &matrix, &smi, cfg.access.threshold_min)
        .map_err(|e| e.to_string())?;
    let mut w = create(cfg, "hex_metrics.csv")?;
    write_hex_metrics(&report.metrics, &mut w).map_err(|e| e.to_string())?;
    let mut w = create(cfg, "scatter.csv")?;
    write_scatter(&report.metrics, &mut w).map_err(|e| e.to_string())?;
    let summary = json!({
        "threshold_min": report.threshold_min,
        "citywide_mean_commute_min": report.citywide_mean,
        "palma_ratio": report.palma,
        "gini_mean_commute": report.gini,
        "total_opportunities": report.total_opportunities,
        "unreachable_weight": report.unreachable_weight,
        "smi_quartiles_degenerate": report.smi_degenerate,
        "commute_quartiles_degenerate": report.commute_degenerate,
    });
    Ok(vec![
        "hex_metrics.csv".into(),
        "scatter.csv".into(),
        write_json(cfg, "access_summary.json", &summary)?,
    ])
}

fn stage_lisa(cfg: &RunConfig) -> StageResult {
    let (_, plane) = load_boundary(cfg)?;
    let hexes = read_hexes_csv(&out_path(cfg, "hexes.csv"), cfg.geo.hex_edge_m)?;
    let metrics = read_hex_metrics(&out_path(cfg, "hex_metrics.csv")).map_err(|e| e.to_string())?;
    let usable: BTreeMap<HexCoord, (f64, f64)> = metrics
        .iter()
        .filter_map(|m| Some((m.hex_id, (m.smi?, m.mean_commute_min?))))
        .collect();
    let ids: Vec<HexCoord> = usable.keys().copied().collect();
    let w = build_weights(&ids);
    let x: Vec<f64> = w.hexes.iter().map(|h| usable[h].0).collect();
    let y: Vec<f64> = w.hexes.iter().map(|h| usable[h].1).collect();
    let results = bivariate_lisa(&x, &y, &w, &cfg.lisa_config()).map_err(|e| e.to_string())?;
    let mut out = create(cfg, "lisa.csv")?;
    write_lisa_csv(&results, &mut out).map_err(|e| e.to_string())?;
    Ok(vec![
        "lisa.csv".into(),
        write_json(cfg, "lisa.geojson", &lisa_geojson(&plane, &hexes, &results))?,
    ])
}

fn stage_stats(cfg: &RunConfig) -> StageResult {
    let lisa = read_lisa_csv(&out_path(cfg, "lisa.csv")).map_err(|e| e.to_string())?;
    let demo = read_demographics(&cfg.inputs.demographics).map_err(|e| e.to_string())?;
    let report = cluster_composition_report(&lisa, &demo, &cfg.stats).map_err(|e| e.to_string())?;
    Ok(vec![write_json(cfg, "report.json", &report)?])
}

/// Every stage's output file names, for callers that want to inspect them.
pub fn stage_outputs(manifest: &Manifest, stage: Stage) -> Vec<String> {
    manifest
        .stages
        .iter()
        .find(|r| r.name == stage.name())
        .map(|r| r.outputs.keys().cloned().collect())
        .unwrap_or_default()
}
