use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use wafer_spr::filter::{parse_rational, rational_to_f64, FilterParams, FilterRegistry, SpatialFilter};
use wafer_spr::iwmm::{GwHyper, HmcConfig, KernelParams, McmcConfig, PointSet, TraceEntry};
use wafer_spr::pipeline::{cluster_map, run_pipeline, ClusterConfig};
use wafer_spr::synthgen::{generate, mixed_type_suite, PatternSpec, TruthSidecar};
use wafer_spr::validation::{
    component_labels, evaluate, reconstruct_ground_truth, wilcoxon_signed_rank, EvaluationReport, Metric,
    NmiNormalization, Partition,
};
use wafer_spr::wafer::{parse_wafer, write_wafer, CellState, GridFormat, Neighborhood, WaferMap};

use crate::error::{CliError, CliResult};
use crate::output::{to_json, RunManifest, Sink};
use crate::render::render_svg;
use crate::{
    Cli, ClusterArgs, Command, CompareArgs, EvaluateArgs, FilterArgs, FilterOpts, GenerateArgs, IwmmOpts,
    RenderArgs,
};

pub const ASSIGNMENTS_SCHEMA: &str = "wafer-spr/assignments/v1";
pub const LATENT_SCHEMA: &str = "wafer-spr/latent/v1";
pub const REPORT_SCHEMA: &str = "wafer-spr/evaluation/v1";
pub const FILTER_SCHEMA: &str = "wafer-spr/filter-summary/v1";
pub const WILCOXON_SCHEMA: &str = "wafer-spr/wilcoxon/v1";
pub const COMPARE_HEADER: &str = "wafer,method,ch,gdi,ri,ari,nmi,impr_ch,impr_gdi,impr_ri,impr_ari,impr_nmi";

pub fn run(cli: &Cli) -> CliResult<()> {
    let format: GridFormat = cli.format.parse().map_err(CliError::Config)?;
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out.clone(),
        format,
    };
    match &cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Filter(a) => cmd_filter(&ctx, a),
        Command::Cluster(a) => cmd_cluster(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Render(a) => cmd_render(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
    }
}

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
    format: GridFormat,
}

impl Ctx {
    fn ext(&self) -> &'static str {
        match self.format {
            GridFormat::Ascii => "txt",
            GridFormat::Csv => "csv",
        }
    }

    fn manifest(&self, command: &str, inputs: &[&Path], config: serde_json::Value) -> RunManifest {
        let inputs = inputs.iter().map(|p| p.display().to_string()).collect();
        let format = match self.format {
            GridFormat::Ascii => "ascii",
            GridFormat::Csv => "csv",
        };
        RunManifest::new(command, inputs, self.seed, format, config)
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Reads a wafer; a `.csv` extension selects CSV regardless of `--format`.
fn read_wafer(path: &Path, format: GridFormat) -> CliResult<WaferMap> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => GridFormat::Csv,
        _ => format,
    };
    let text = read_text(path)?;
    parse_wafer(&text, format).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Decimal, exponent or `p/q` form.
fn config_number(name: &str, text: &str) -> CliResult<f64> {
    let v = match text.trim().parse::<f64>() {
        Ok(v) => v,
        Err(_) => rational_to_f64(parse_rational(text).map_err(|e| CliError::Config(format!("--{name}: {e}")))?),
    };
    if !v.is_finite() {
        return Err(CliError::Config(format!("--{name} must be finite, got {text:?}")));
    }
    Ok(v)
}

fn filter_params(opts: &FilterOpts) -> CliResult<FilterParams> {
    let u = parse_rational(&opts.u).map_err(|e| CliError::Config(format!("--u: {e}")))?;
    let w_mag = parse_rational(&opts.w_mag).map_err(|e| CliError::Config(format!("--w-mag: {e}")))?;
    let m_threshold: usize = opts
        .m
        .parse()
        .map_err(|_| CliError::Config(format!("--m must be a positive integer, got {:?}", opts.m)))?;
    let neighborhood: Neighborhood = opts.neighborhood.parse().map_err(CliError::Config)?;
    let cpf_mode = opts.cpf_mode.parse().map_err(CliError::Config)?;
    Ok(FilterParams {
        u,
        w_mag,
        m_threshold,
        neighborhood,
        cpf_mode,
    })
}

fn cluster_config(opts: &IwmmOpts) -> CliResult<ClusterConfig> {
    let prior = config_number("prior-scale", &opts.prior_scale)?;
    let hyper = GwHyper {
        alpha: config_number("alpha", &opts.alpha)?,
        scale: [prior, 0.0, prior],
        ..GwHyper::default()
    };
    let kernel = KernelParams::new(
        config_number("signal-variance", &opts.signal_variance)?,
        config_number("length-scale", &opts.length_scale)?,
        config_number("jitter", &opts.jitter)?,
    )?;
    hyper.validate()?;
    let mcmc = McmcConfig {
        iters: opts.iters,
        burn_in: opts.burn_in,
        hmc: HmcConfig {
            step_size: config_number("step-size", &opts.step_size)?,
            leapfrog_steps: opts.leapfrog_steps,
        },
        adapt_step: !opts.no_adapt,
    };
    if mcmc.iters <= mcmc.burn_in {
        return Err(CliError::Config("--iters must exceed --burn-in".into()));
    }
    Ok(ClusterConfig { hyper, kernel, mcmc })
}

fn generate_config(a: &GenerateArgs, specs: &[PatternSpec], noise: f64) -> serde_json::Value {
    json!({
        "rows": a.rows,
        "cols": a.cols,
        "noise_rate": noise,
        "patterns": specs,
        "suite": a.suite,
    })
}

fn cmd_generate(ctx: &Ctx, a: &GenerateArgs) -> CliResult<()> {
    let noise = config_number("noise", &a.noise)?;
    let mut sink = Sink::new(ctx.out.clone())?;
    if a.suite {
        if !sink.has_dir() {
            return Err(CliError::Config("--suite needs --out".into()));
        }
        let suite = mixed_type_suite();
        for w in &suite {
            let synth = w.generate();
            let text = write_wafer(&synth.map, None, ctx.format).map_err(|e| CliError::Internal(e.to_string()))?;
            sink.secondary(&format!("{}.{}", w.name, ctx.ext()), &text)?;
            sink.secondary(&format!("{}.truth.json", w.name), &to_json(&synth.sidecar())?)?;
        }
        let config = json!({ "suite": suite });
        return sink.finish(ctx.manifest("generate", &[], config));
    }
    let specs = a
        .patterns
        .iter()
        .map(|p| serde_json::from_str::<PatternSpec>(p).map_err(|e| CliError::Config(format!("--pattern {p}: {e}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let synth =
        generate(a.rows, a.cols, &specs, noise, ctx.seed).map_err(|e| CliError::Config(e.to_string()))?;
    let text = write_wafer(&synth.map, None, ctx.format).map_err(|e| CliError::Internal(e.to_string()))?;
    sink.primary(&format!("{}.{}", a.name, ctx.ext()), &text)?;
    sink.secondary(&format!("{}.truth.json", a.name), &to_json(&synth.sidecar())?)?;
    sink.finish(ctx.manifest("generate", &[], generate_config(a, &specs, noise)))
}

#[derive(Debug, Serialize)]
struct FilterSummary {
    schema: &'static str,
    method: String,
    describe: String,
    objective_value: String,
    kept_count: usize,
    defective_in: usize,
    approximate: bool,
}

fn cmd_filter(ctx: &Ctx, a: &FilterArgs) -> CliResult<()> {
    let params = filter_params(&a.opts)?;
    let filter = FilterRegistry::with_builtin().build(&a.method, &params)?;
    let map = read_wafer(&a.input, ctx.format)?;
    let result = filter.filter(&map)?;
    let mut sink = Sink::new(ctx.out.clone())?;
    let text = write_wafer(&map, Some(&result.labels), ctx.format).map_err(|e| CliError::Internal(e.to_string()))?;
    sink.primary(&format!("filtered.{}", ctx.ext()), &text)?;
    let summary = FilterSummary {
        schema: FILTER_SCHEMA,
        method: filter.name().to_string(),
        describe: filter.describe(),
        objective_value: result.objective_value.to_string(),
        kept_count: result.kept_count,
        defective_in: map.defective_count(),
        approximate: result.approximate,
    };
    sink.secondary("filter_summary.json", &to_json(&summary)?)?;
    let config = json!({ "method": a.method, "params": params });
    sink.finish(ctx.manifest("filter", &[&a.input], config))
}

/// One clustered chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipAssignment {
    pub row: usize,
    pub col: usize,
    pub cluster: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssignmentsFile {
    pub schema: String,
    #[serde(default)]
    pub k_hat: usize,
    pub assignments: Vec<ChipAssignment>,
    #[serde(default)]
    pub trace: Vec<TraceEntry>,
    #[serde(default)]
    pub best_iteration: usize,
    #[serde(default)]
    pub acceptance_rate: f64,
    #[serde(default)]
    pub final_step_size: f64,
    #[serde(default)]
    pub seed: u64,
}

fn cmd_cluster(ctx: &Ctx, a: &ClusterArgs) -> CliResult<()> {
    let cfg = cluster_config(&a.iwmm)?;
    let map = read_wafer(&a.input, ctx.format)?;
    if map.defective_count() == 0 {
        return Err(CliError::EmptyDefects(format!("{} has no defective chips", a.input.display())));
    }
    let (coords, fit) = cluster_map(&map, &cfg, ctx.seed)?;
    let file = AssignmentsFile {
        schema: ASSIGNMENTS_SCHEMA.to_string(),
        k_hat: fit.k_hat,
        assignments: coords
            .iter()
            .zip(&fit.assignments)
            .map(|(&(row, col), &cluster)| ChipAssignment { row, col, cluster })
            .collect(),
        trace: fit.trace.clone(),
        best_iteration: fit.best_iteration,
        acceptance_rate: fit.acceptance_rate,
        final_step_size: fit.final_step_size,
        seed: ctx.seed,
    };
    let latent = json!({
        "schema": LATENT_SCHEMA,
        "coords": coords
            .iter()
            .zip(&fit.latent_coords)
            .map(|(&(row, col), z)| json!({ "row": row, "col": col, "z": z }))
            .collect::<Vec<_>>(),
    });
    let mut sink = Sink::new(ctx.out.clone())?;
    sink.primary("assignments.json", &to_json(&file)?)?;
    sink.secondary("latent.json", &to_json(&latent)?)?;
    sink.finish(ctx.manifest("cluster", &[&a.input], json!(cfg)))
}

/// Reference labels readable by `evaluate`.
enum Reference {
    Sidecar(TruthSidecar),
    Assignments(BTreeMap<(usize, usize), usize>),
    Reconstructed { map: WaferMap, labels: Vec<usize> },
}

impl Reference {
    fn load(a: &EvaluateArgs, format: GridFormat) -> CliResult<Self> {
        match (&a.truth, &a.wafer) {
            (Some(_), Some(_)) => Err(CliError::Config("give either --truth or --wafer, not both".into())),
            (Some(path), None) => {
                let value: serde_json::Value = read_json(path)?;
                if value.get("assignments").is_some() {
                    let file: AssignmentsFile = serde_json::from_value(value)
                        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
                    Ok(Reference::Assignments(assignment_map(&file)?))
                } else {
                    let sidecar: TruthSidecar = serde_json::from_value(value)
                        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
                    Ok(Reference::Sidecar(sidecar))
                }
            }
            (None, Some(path)) => {
                if !a.reconstruct {
                    return Err(CliError::Config("--wafer needs --reconstruct".into()));
                }
                let map = read_wafer(path, format)?;
                let labels = component_labels(&reconstruct_ground_truth(&map), Neighborhood::King);
                Ok(Reference::Reconstructed { map, labels })
            }
            (None, None) => Err(CliError::Config("give --truth or --wafer --reconstruct".into())),
        }
    }

    /// Label at a chip; `None` when the chip is outside the reference.
    fn label(&self, rc: (usize, usize)) -> Option<usize> {
        let (r, c) = rc;
        match self {
            Reference::Sidecar(s) => s.labels.get(r).and_then(|row| row.get(c)).copied(),
            Reference::Assignments(m) => m.get(&rc).copied(),
            Reference::Reconstructed { map, labels } => match map.get(r, c) {
                Some(cell) if cell.in_mask() => Some(labels[r * map.cols() + c]),
                _ => None,
            },
        }
    }
}

fn assignment_map(file: &AssignmentsFile) -> CliResult<BTreeMap<(usize, usize), usize>> {
    let mut map = BTreeMap::new();
    for a in &file.assignments {
        if map.insert((a.row, a.col), a.cluster).is_some() {
            return Err(CliError::Parse(format!("chip ({}, {}) assigned twice", a.row, a.col)));
        }
    }
    Ok(map)
}

fn partition(labels: &[usize]) -> CliResult<Partition> {
    Partition::from_raw(labels).map_err(|e| CliError::Internal(e.to_string()))
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    schema: &'static str,
    #[serde(flatten)]
    report: &'a EvaluationReport,
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> CliResult<()> {
    let norm: NmiNormalization = a.nmi.parse().map_err(CliError::Config)?;
    let reference = Reference::load(a, ctx.format)?;
    let pred_file: AssignmentsFile = read_json(&a.pred)?;
    let pred = assignment_map(&pred_file)?;
    if pred.is_empty() {
        return Err(CliError::EmptyDefects(format!("{} has no assignments", a.pred.display())));
    }
    let coords: Vec<(usize, usize)> = pred.keys().copied().collect();
    let pred_labels: Vec<usize> = pred.values().copied().collect();
    let points = PointSet::from_cells(&coords)?;
    let predicted = partition(&pred_labels)?;

    // external point set: the predicted chips, or every raw defective chip
    let (ext_coords, ext_pred): (Vec<(usize, usize)>, Vec<usize>) = match &a.raw {
        Some(path) => {
            let raw = read_wafer(path, ctx.format)?;
            // AC may fill holes, so predicted chips need only lie on the wafer
            if let Some(rc) = coords.iter().find(|&&(r, c)| !raw.get(r, c).is_some_and(CellState::in_mask)) {
                return Err(CliError::Mismatch(format!(
                    "predicted chip {rc:?} is not on the wafer {}",
                    path.display()
                )));
            }
            let defective: BTreeSet<(usize, usize)> = raw.defective_coords().into_iter().collect();
            let ext: Vec<(usize, usize)> = defective.into_iter().collect();
            let labels = ext.iter().map(|rc| pred.get(rc).copied().unwrap_or(0)).collect();
            (ext, labels)
        }
        None => (coords.clone(), pred_labels.clone()),
    };
    let mut truth = Vec::with_capacity(ext_coords.len());
    for &rc in &ext_coords {
        let label = match (&reference, reference.label(rc)) {
            (_, Some(l)) => l,
            // assignment references only cover kept chips
            (Reference::Assignments(_), None) if a.raw.is_some() => 0,
            (_, None) => return Err(CliError::Mismatch(format!("chip {rc:?} has no reference label"))),
        };
        truth.push(label);
    }
    if let (Reference::Assignments(m), None) = (&reference, &a.raw) {
        if m.len() != ext_coords.len() {
            return Err(CliError::Mismatch(format!(
                "reference has {} chips, prediction has {}",
                m.len(),
                ext_coords.len()
            )));
        }
    }
    let truth_p = partition(&truth)?;
    let pred_p = partition(&ext_pred)?;
    let report = evaluate(&points, &predicted, Some((&truth_p, &pred_p)), norm);
    let mut inputs: Vec<&Path> = vec![&a.pred];
    inputs.extend(a.truth.as_deref());
    inputs.extend(a.wafer.as_deref());
    inputs.extend(a.raw.as_deref());
    let mut sink = Sink::new(ctx.out.clone())?;
    sink.primary(
        "evaluation.json",
        &to_json(&ReportFile {
            schema: REPORT_SCHEMA,
            report: &report,
        })?,
    )?;
    let config = json!({ "nmi": norm, "reconstruct": a.reconstruct, "raw": a.raw.is_some() });
    sink.finish(ctx.manifest("evaluate", &inputs, config))
}

fn cmd_render(ctx: &Ctx, a: &RenderArgs) -> CliResult<()> {
    let map = read_wafer(&a.input, ctx.format)?;
    let clusters = match &a.assignments {
        Some(path) => {
            let file: AssignmentsFile = read_json(path)?;
            assignment_map(&file)?
        }
        None => BTreeMap::new(),
    };
    let mut sink = Sink::new(ctx.out.clone())?;
    sink.primary("render.svg", &render_svg(&map, &clusters))?;
    let mut inputs: Vec<&Path> = vec![&a.input];
    inputs.extend(a.assignments.as_deref());
    sink.finish(ctx.manifest("render", &inputs, json!({})))
}

/// Metric order used by the comparison table.
const METRICS: [&str; 5] = ["ch", "gdi", "ri", "ari", "nmi"];

type MetricRow = [Option<f64>; 5];

fn report_row(r: &EvaluationReport) -> MetricRow {
    let v = |m: &Metric| m.value;
    [v(&r.ch), v(&r.gdi), v(&r.ri), v(&r.ari), v(&r.nmi)]
}

/// Median of the defined values.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Percentage improvement of `ac` over `cpf`; undefined when `cpf` is 0.
pub fn improvement(ac: Option<f64>, cpf: Option<f64>) -> Option<f64> {
    match (ac, cpf) {
        (Some(a), Some(c)) if a == c => Some(0.0),
        (Some(a), Some(c)) if c != 0.0 => Some((a - c) / c.abs() * 100.0),
        _ => None,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Truth labels for a wafer from `<stem>.truth.json` next to it, if present.
fn sidecar_for(path: &Path, map: &WaferMap) -> CliResult<Option<(PathBuf, Vec<usize>)>> {
    let Some(stem) = path.file_stem() else {
        return Ok(None);
    };
    let mut name = stem.to_os_string();
    name.push(".truth.json");
    let side = path.with_file_name(name);
    if !side.exists() {
        return Ok(None);
    }
    let sidecar: TruthSidecar = read_json(&side)?;
    if sidecar.rows != map.rows() || sidecar.cols != map.cols() {
        return Err(CliError::Mismatch(format!(
            "{} is {}x{}, wafer is {}x{}",
            side.display(),
            sidecar.rows,
            sidecar.cols,
            map.rows(),
            map.cols()
        )));
    }
    Ok(Some((side, sidecar.flat_labels())))
}

#[derive(Debug, Serialize)]
struct WilcoxonEntry {
    method: String,
    metric: &'static str,
    n_wafers: usize,
    statistic: Option<f64>,
    p_two_sided: Option<f64>,
    exact: Option<bool>,
    undefined_reason: Option<String>,
}

fn cmd_compare(ctx: &Ctx, a: &CompareArgs) -> CliResult<()> {
    let norm: NmiNormalization = a.nmi.parse().map_err(CliError::Config)?;
    let cfg = cluster_config(&a.iwmm)?;
    if a.seeds == 0 {
        return Err(CliError::Config("--seeds must be >= 1".into()));
    }
    let m_list = a
        .m_list
        .split(',')
        .map(|m| {
            m.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("--m-list entry {m:?} is not a positive integer")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let base = FilterOpts {
        u: a.u.clone(),
        w_mag: a.w_mag.clone(),
        m: "5".into(),
        neighborhood: a.neighborhood.clone(),
        cpf_mode: a.cpf_mode.clone(),
    };
    let params = filter_params(&base)?;
    let registry = FilterRegistry::with_builtin();
    let mut methods: Vec<(String, Box<dyn SpatialFilter>)> = vec![("ac".into(), registry.build("ac", &params)?)];
    for &m in &m_list {
        let p = FilterParams {
            m_threshold: m,
            ..params.clone()
        };
        methods.push((format!("cpf-m{m}"), registry.build("cpf", &p)?));
    }

    let mut inputs: Vec<PathBuf> = a.wafers.clone();
    let mut csv = String::from(COMPARE_HEADER);
    csv.push('\n');
    // per method, per wafer metric medians
    let mut table: Vec<Vec<MetricRow>> = vec![Vec::new(); methods.len()];
    for path in &a.wafers {
        let raw = read_wafer(path, ctx.format)?;
        let truth = sidecar_for(path, &raw)?;
        if let Some((side, _)) = &truth {
            inputs.push(side.clone());
        }
        let wafer_name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut rows: Vec<MetricRow> = Vec::with_capacity(methods.len());
        for (mi, (_, filter)) in methods.iter().enumerate() {
            let mut per_seed: Vec<MetricRow> = Vec::with_capacity(a.seeds);
            for s in 0..a.seeds {
                let out = run_pipeline(
                    &raw,
                    truth.as_ref().map(|(_, t)| t.as_slice()),
                    filter.as_ref(),
                    &cfg,
                    norm,
                    ctx.seed + s as u64,
                )?;
                per_seed.push(report_row(&out.report));
            }
            let mut row: MetricRow = [None; 5];
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = median(&per_seed.iter().map(|r| r[k]).collect::<Vec<_>>());
            }
            table[mi].push(row);
            rows.push(row);
        }
        for (mi, (name, _)) in methods.iter().enumerate() {
            let mut fields = vec![wafer_name.clone(), name.clone()];
            fields.extend(rows[mi].iter().map(|&v| cell(v)));
            fields.extend((0..5).map(|k| {
                if mi == 0 {
                    String::new()
                } else {
                    cell(improvement(rows[0][k], rows[mi][k]))
                }
            }));
            csv.push_str(&fields.join(","));
            csv.push('\n');
        }
    }

    let mut tests = Vec::new();
    for (mi, (name, _)) in methods.iter().enumerate().skip(1) {
        for (k, metric) in METRICS.iter().enumerate() {
            let diffs: Vec<f64> = table[0]
                .iter()
                .zip(&table[mi])
                .filter_map(|(ac, cpf)| Some(ac[k]? - cpf[k]?))
                .collect();
            let mut entry = WilcoxonEntry {
                method: name.clone(),
                metric,
                n_wafers: diffs.len(),
                statistic: None,
                p_two_sided: None,
                exact: None,
                undefined_reason: None,
            };
            if diffs.len() < 2 {
                entry.undefined_reason = Some("fewer than 2 wafers with defined values".into());
            } else {
                match wilcoxon_signed_rank(&diffs) {
                    Ok(w) => {
                        entry.statistic = Some(w.statistic);
                        entry.p_two_sided = Some(w.p_two_sided);
                        entry.exact = Some(w.exact);
                    }
                    Err(e) => entry.undefined_reason = Some(e.to_string()),
                }
            }
            tests.push(entry);
        }
    }
    let wilcoxon = json!({
        "schema": WILCOXON_SCHEMA,
        "baseline": "ac",
        "difference": "ac minus method",
        "tests": tests,
    });

    let mut sink = Sink::new(ctx.out.clone())?;
    sink.primary("comparison.csv", &csv)?;
    sink.secondary("wilcoxon.json", &to_json(&wilcoxon)?)?;
    let config = json!({
        "filter": params,
        "m_list": m_list,
        "seeds": a.seeds,
        "nmi": norm,
        "cluster": cfg,
    });
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    sink.finish(ctx.manifest("compare", &input_refs, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_skips_undefined() {
        assert_eq!(median(&[Some(3.0), None, Some(1.0), Some(2.0)]), Some(2.0));
        assert_eq!(median(&[Some(1.0), Some(2.0)]), Some(1.5));
        assert_eq!(median(&[None]), None);
    }

    #[test]
    fn improvement_is_relative_percentage() {
        assert_eq!(improvement(Some(0.6), Some(0.5)).map(|v| (v * 1e9).round()), Some(20e9));
        assert_eq!(improvement(Some(0.7), Some(0.7)), Some(0.0));
        assert_eq!(improvement(Some(0.0), Some(0.0)), Some(0.0));
        assert_eq!(improvement(Some(1.0), Some(0.0)), None);
        assert_eq!(improvement(None, Some(1.0)), None);
    }
}
