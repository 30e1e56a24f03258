use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;
use stockpot_core::geometry::{
    distance_to, geometry_report, perturb_from_center, plan_units, pseudo_center,
    sigma_from_ensemble, verify_shell_properties, DistanceReport, SigmaMap,
};
use stockpot_core::merge::{
    greedy_soup, interpolate_pair, periodic_merge_replay, provenance, stock_merge, uniform_soup,
    wise_ft, write_ratio_csv, MergeMethod,
};
use stockpot_core::reduce;
use stockpot_core::synthetic::{
    concentration_stats, sample_ensemble, simulate_trajectories, SyntheticSpec, TrajectoryParams,
};
use stockpot_core::tensor_store::{to_bytes, validate_schema, SchemaReport};
use stockpot_core::{Checkpoint, Error, Granularity};

use crate::output::{
    create_dir, emit, json_arg, json_bytes, load, load_all, save, sidecar, usage, CliError,
};
use crate::{GranularityKind, Method, ReportArgs, UnitArgs};

type CliResult<T = ()> = Result<T, CliError>;

fn granularity(args: &UnitArgs) -> CliResult<Granularity> {
    let kind = match args.granularity {
        GranularityKind::Global => "global",
        GranularityKind::Tensor => "tensor",
        GranularityKind::Filter => "filter",
        GranularityKind::Block => "block",
    };
    if args.block_map.is_some() && args.granularity != GranularityKind::Block {
        return Err(usage("--block-map only applies to --granularity block"));
    }
    let map = args
        .block_map
        .as_deref()
        .map(|raw| json_arg::<BTreeMap<String, String>>(raw, "--block-map"))
        .transpose()?;
    Ok(Granularity::parse(kind, map)?)
}

fn refs(ckpts: &[Checkpoint]) -> Vec<&Checkpoint> {
    ckpts.iter().collect()
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> stockpot_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Sends a report to `--out` or stdout; with `--out` the summary goes to stdout.
fn report(bytes: Vec<u8>, out: Option<&Path>, summary: impl FnOnce() -> String) -> CliResult {
    emit(&bytes, out)?;
    if let Some(path) = out {
        println!("{}", summary());
        println!("report: {}", path.display());
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

#[derive(Serialize)]
struct TensorInfo<'a> {
    name: &'a str,
    dtype: &'static str,
    shape: &'a [usize],
    numel: usize,
    mean: f64,
    std: f64,
    l2_norm: f64,
}

#[derive(Serialize)]
struct FileInfo<'a> {
    path: String,
    digest: String,
    numel: usize,
    tensors: Vec<TensorInfo<'a>>,
    metadata: Option<&'a BTreeMap<String, String>>,
}

#[derive(Serialize)]
struct InspectReport<'a> {
    files: Vec<FileInfo<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schema: Option<SchemaReport>,
}

pub fn inspect(paths: &[PathBuf], out: Option<&Path>) -> CliResult {
    let ckpts = load_all(paths)?;
    let files: Vec<FileInfo> = paths
        .iter()
        .zip(&ckpts)
        .map(|(p, c)| FileInfo {
            path: p.display().to_string(),
            digest: c.digest().to_hex(),
            numel: c.numel(),
            tensors: c
                .tensors()
                .map(|t| {
                    let v = t.to_f64();
                    let (mean, std) = reduce::mean_std(&v);
                    TensorInfo {
                        name: t.name(),
                        dtype: t.dtype().as_str(),
                        shape: t.shape(),
                        numel: t.numel(),
                        mean,
                        std,
                        l2_norm: reduce::norm(&v),
                    }
                })
                .collect(),
            metadata: c.metadata(),
        })
        .collect();
    let schema = (ckpts.len() >= 2).then(|| validate_schema(&refs(&ckpts)));
    let incompatible = schema
        .as_ref()
        .filter(|s| !s.compatible)
        .map(SchemaReport::describe);
    let r = InspectReport { files, schema };
    report(json_bytes(serde_json::to_string_pretty(&r)?), out, || {
        let mut s = String::new();
        for f in &r.files {
            s.push_str(&format!(
                "{}  {}  {} tensors, {} elements\n",
                f.path,
                &f.digest[..12],
                f.tensors.len(),
                f.numel
            ));
        }
        match &r.schema {
            Some(sc) if sc.compatible => s.push_str("schemas compatible"),
            Some(_) => s.push_str("schemas differ"),
            None => s.push_str("single file, no schema comparison"),
        }
        s
    })?;
    match incompatible {
        Some(msg) => Err(Error::Schema(msg).into()),
        None => Ok(()),
    }
}

pub fn geometry(
    anchor: &Path,
    models: &[PathBuf],
    units: &UnitArgs,
    out: &ReportArgs,
) -> CliResult {
    let g = granularity(units)?;
    let anchor = load(anchor)?;
    let models = load_all(models)?;
    let r = geometry_report(&refs(&models), &anchor, &g)?;
    let bytes = if out.csv {
        csv_bytes(|b| r.write_csv(b))?
    } else {
        json_bytes(r.to_json()?)
    };
    report(bytes, out.out.as_deref(), || {
        let mut s = format!(
            "{} models, {} {} units",
            r.models,
            r.units.len(),
            r.granularity
        );
        for u in &r.units {
            s.push_str(&format!(
                "\n  {}: angle {} +- {} deg, |delta|/sqrt(n) {:.4e}",
                u.unit,
                fmt_opt(u.mean_angle_deg),
                fmt_opt(u.std_angle_deg),
                u.mean_norm_per_sqrt_n
            ));
        }
        s
    })
}

pub fn center(models: &[PathBuf], out: &Path) -> CliResult {
    let models = load_all(models)?;
    let c = pseudo_center(&refs(&models))?;
    save(&c, out)?;
    println!("center of {} models: {}", models.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct DistanceEntry<'a> {
    path: String,
    digest: String,
    #[serde(flatten)]
    report: &'a DistanceReport,
}

pub fn distance(center: &Path, paths: &[PathBuf], units: &UnitArgs, out: &ReportArgs) -> CliResult {
    let g = granularity(units)?;
    let center = load(center)?;
    let ckpts = load_all(paths)?;
    let reports = ckpts
        .iter()
        .map(|c| distance_to(c, &center, &g))
        .collect::<Result<Vec<_>, _>>()?;
    let bytes = if out.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["path", "unit", "class", "n", "distance"])
            .map_err(Error::from)?;
        for (p, r) in paths.iter().zip(&reports) {
            for u in &r.units {
                w.write_record([
                    p.display().to_string(),
                    u.unit.clone(),
                    u.class.as_str().to_string(),
                    u.n.to_string(),
                    u.distance.to_string(),
                ])
                .map_err(Error::from)?;
            }
        }
        w.into_inner()
            .map_err(|e| Error::from(csv::Error::from(e.into_error())))?
    } else {
        let entries: Vec<DistanceEntry> = paths
            .iter()
            .zip(&ckpts)
            .zip(&reports)
            .map(|((p, c), r)| DistanceEntry {
                path: p.display().to_string(),
                digest: c.digest().to_hex(),
                report: r,
            })
            .collect();
        json_bytes(serde_json::to_string_pretty(&entries)?)
    };
    report(bytes, out.out.as_deref(), || {
        paths
            .iter()
            .zip(&reports)
            .map(|(p, r)| format!("{}: {:.6e}", p.display(), r.global))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

pub fn verify(
    anchor: &Path,
    center: &Path,
    tol: f64,
    models: &[PathBuf],
    units: &UnitArgs,
    out: &ReportArgs,
) -> CliResult {
    let g = granularity(units)?;
    let anchor = load(anchor)?;
    let center = load(center)?;
    let models = load_all(models)?;
    let r = verify_shell_properties(&refs(&models), &anchor, &center, tol, &g)?;
    let bytes = if out.csv {
        csv_bytes(|b| r.write_csv(b))?
    } else {
        json_bytes(r.to_json()?)
    };
    report(bytes, out.out.as_deref(), || {
        r.properties
            .iter()
            .map(|p| {
                format!(
                    "{:<22} max residual {}  {}",
                    p.property.as_str(),
                    fmt_opt(p.max_residual),
                    if p.pass { "pass" } else { "FAIL" }
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    if r.pass {
        return Ok(());
    }
    let failures: Vec<String> = r
        .properties
        .iter()
        .filter(|p| !p.pass)
        .map(|p| {
            let worst = p
                .units
                .iter()
                .filter_map(|u| u.residual.map(|x| (x, &u.unit)))
                .max_by(|a, b| a.0.total_cmp(&b.0));
            match (worst, p.degenerate_units.first()) {
                (Some((x, unit)), _) if x > tol => {
                    format!("{} (unit `{unit}`: {x:.4} > {tol})", p.property.as_str())
                }
                (_, Some(unit)) => format!("{} (unit `{unit}` is degenerate)", p.property.as_str()),
                _ => p.property.as_str().to_string(),
            }
        })
        .collect();
    Err(CliError::Failed(format!(
        "shell properties not within tolerance: {}",
        failures.join(", ")
    )))
}

pub struct MergeRequest {
    pub method: Method,
    pub anchor: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub out: PathBuf,
    pub alpha: Option<f64>,
    pub t: Option<f64>,
    pub allow_extrapolation: bool,
    pub score_distance_to: Option<PathBuf>,
    pub score_cmd: Option<String>,
    pub units: UnitArgs,
    pub csv: bool,
}

fn require<T>(value: Option<T>, flag: &str, method: &str) -> CliResult<T> {
    value.ok_or_else(|| usage(format!("--method {method} requires {flag}")))
}

fn reject<T>(value: &Option<T>, flag: &str, method: &str) -> CliResult {
    match value {
        Some(_) => Err(usage(format!("{flag} does not apply to --method {method}"))),
        None => Ok(()),
    }
}

fn count(models: &[PathBuf], method: &str, want: usize) -> CliResult {
    if models.len() != want {
        return Err(usage(format!(
            "--method {method} takes exactly {want} model(s), got {}",
            models.len()
        )));
    }
    Ok(())
}

fn with_provenance(ckpt: Checkpoint, method: &MergeMethod, inputs: &[&Checkpoint]) -> Checkpoint {
    ckpt.with_metadata(provenance(method, inputs))
}

/// Scores a checkpoint by running `cmd` with a temporary copy's path appended.
fn score_with_command(cmd: &str, ckpt: &Checkpoint) -> Result<f64, String> {
    let mut file = tempfile::Builder::new()
        .prefix("stockpot-score-")
        .suffix(".safetensors")
        .tempfile()
        .map_err(|e| format!("cannot create temporary checkpoint: {e}"))?;
    file.write_all(&to_bytes(ckpt))
        .and_then(|_| file.flush())
        .map_err(|e| format!("cannot write temporary checkpoint: {e}"))?;
    log::debug!("scoring {} with `{cmd}`", file.path().display());
    let output = Command::new("sh")
        .arg("-c")
        .arg(format!("{cmd} \"$1\""))
        .arg("stockpot-score")
        .arg(file.path())
        .output()
        .map_err(|e| format!("cannot run `{cmd}`: {e}"))?;
    if !output.status.success() {
        return Err(format!(
            "`{cmd}` exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        ));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let last = stdout
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .ok_or_else(|| format!("`{cmd}` printed no score"))?;
    last.parse::<f64>()
        .map_err(|_| format!("`{cmd}` printed `{last}`, which is not a number"))
}

pub fn merge(req: MergeRequest) -> CliResult {
    let m = match req.method {
        Method::Stock => "stock",
        Method::Uniform => "uniform",
        Method::Wise => "wise",
        Method::Greedy => "greedy",
        Method::Pair => "pair",
    };
    if req.method != Method::Wise {
        reject(&req.alpha, "--alpha", m)?;
    }
    if req.method != Method::Pair {
        reject(&req.t, "--t", m)?;
    }
    if !matches!(req.method, Method::Wise | Method::Pair) && req.allow_extrapolation {
        return Err(usage(format!(
            "--allow-extrapolation does not apply to --method {m}"
        )));
    }
    if req.method != Method::Greedy {
        reject(&req.score_distance_to, "--score-distance-to", m)?;
        reject(&req.score_cmd, "--score-cmd", m)?;
    }
    if !matches!(req.method, Method::Stock | Method::Wise) {
        reject(&req.anchor, "--anchor", m)?;
    }
    if req.method != Method::Stock && req.csv {
        return Err(usage(format!("--csv does not apply to --method {m}")));
    }
    let g = granularity(&req.units)?;
    if req.method != Method::Stock && g != Granularity::PerTensor {
        return Err(usage(format!(
            "--granularity does not apply to --method {m}"
        )));
    }

    match req.method {
        Method::Stock => {
            let anchor = load(require(req.anchor.as_ref(), "--anchor", m)?)?;
            let models = load_all(&req.models)?;
            let refs = refs(&models);
            let (merged, r) = stock_merge(&anchor, &refs, &g)?;
            let inputs: Vec<&Checkpoint> = std::iter::once(&anchor)
                .chain(refs.iter().copied())
                .collect();
            let merged = with_provenance(merged, &MergeMethod::Stock { granularity: g }, &inputs);
            let (side, bytes) = if req.csv {
                (
                    sidecar(&req.out, ".ratios.csv"),
                    csv_bytes(|b| r.write_csv(b))?,
                )
            } else {
                (sidecar(&req.out, ".ratios.json"), json_bytes(r.to_json()?))
            };
            save(&merged, &req.out)?;
            emit(&bytes, Some(&side))?;
            let ts: Vec<f64> = r.units.iter().map(|u| u.t).collect();
            let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            println!(
                "stock merge of {} models over {} {} units: t in [{lo:.4}, {hi:.4}], {} clamped, {} degenerate, {} unanchored",
                r.models,
                r.units.len(),
                r.granularity,
                r.units.iter().filter(|u| u.clamped).count(),
                r.units.iter().filter(|u| u.degenerate).count(),
                r.units.iter().filter(|u| u.unanchored).count(),
            );
            println!("merged: {}\nratios: {}", req.out.display(), side.display());
        }
        Method::Uniform => {
            let models = load_all(&req.models)?;
            let refs = refs(&models);
            let merged = with_provenance(uniform_soup(&refs)?, &MergeMethod::Uniform, &refs);
            save(&merged, &req.out)?;
            println!(
                "uniform soup of {} models: {}",
                models.len(),
                req.out.display()
            );
        }
        Method::Wise => {
            let alpha = require(req.alpha, "--alpha", m)?;
            count(&req.models, m, 1)?;
            let anchor = load(require(req.anchor.as_ref(), "--anchor", m)?)?;
            let model = load(&req.models[0])?;
            let merged = wise_ft(&anchor, &model, alpha, req.allow_extrapolation)?;
            // endpoints are exact copies of an input and are written unchanged
            let merged = if alpha == 0.0 || alpha == 1.0 {
                merged
            } else {
                with_provenance(merged, &MergeMethod::WiseFt { alpha }, &[&anchor, &model])
            };
            save(&merged, &req.out)?;
            println!("wise-ft at alpha {alpha}: {}", req.out.display());
        }
        Method::Pair => {
            let t = require(req.t, "--t", m)?;
            count(&req.models, m, 2)?;
            let a = load(&req.models[0])?;
            let b = load(&req.models[1])?;
            let merged = interpolate_pair(&a, &b, t, req.allow_extrapolation)?;
            let merged = if t == 0.0 || t == 1.0 {
                merged
            } else {
                with_provenance(merged, &MergeMethod::PairInterpolate { t }, &[&a, &b])
            };
            save(&merged, &req.out)?;
            println!("interpolation at t {t}: {}", req.out.display());
        }
        Method::Greedy => {
            let models = load_all(&req.models)?;
            let refs = refs(&models);
            let ((merged, trace), scorer) = match (&req.score_distance_to, &req.score_cmd) {
                (Some(target), None) => {
                    let target = load(target)?;
                    let desc = format!("negative_distance_to:{}", target.digest().to_hex());
                    let r = greedy_soup(&refs, |c| {
                        distance_to(c, &target, &Granularity::Global).map(|d| -d.global)
                    })?;
                    (r, desc)
                }
                (None, Some(cmd)) => {
                    let r = greedy_soup(&refs, |c| score_with_command(cmd, c))?;
                    (r, format!("command:{cmd}"))
                }
                _ => {
                    return Err(usage(
                        "--method greedy requires --score-distance-to or --score-cmd",
                    ))
                }
            };
            let chosen: Vec<&Checkpoint> = trace.selected.iter().map(|&i| refs[i]).collect();
            let merged = with_provenance(merged, &MergeMethod::Greedy { scorer }, &chosen);
            let side = sidecar(&req.out, ".greedy.json");
            save(&merged, &req.out)?;
            emit(
                &json_bytes(serde_json::to_string_pretty(&trace)?),
                Some(&side),
            )?;
            println!(
                "greedy soup kept {} of {} models (score {:.6}): {}",
                trace.selected.len(),
                models.len(),
                trace.final_score,
                req.out.display()
            );
            println!("trace: {}", side.display());
        }
    }
    Ok(())
}

pub fn periodic(
    anchor: &Path,
    runs: &[String],
    out: &Path,
    periods_dir: Option<&Path>,
    units: &UnitArgs,
    csv: bool,
) -> CliResult {
    let g = granularity(units)?;
    let anchor = load(anchor)?;
    let runs: Vec<Vec<Checkpoint>> = runs
        .iter()
        .map(|r| {
            let paths: Vec<PathBuf> = r
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
                .collect();
            load_all(&paths)
        })
        .collect::<Result<_, _>>()?;
    let replay = periodic_merge_replay(&anchor, &runs, &g)?;
    let method = MergeMethod::Stock { granularity: g };
    let inputs_at = |p: usize| -> Vec<&Checkpoint> {
        std::iter::once(&anchor)
            .chain(runs.iter().map(|r| &r[p]))
            .collect()
    };

    if let Some(dir) = periods_dir {
        create_dir(dir)?;
        for (p, ckpt) in replay.merged.iter().enumerate() {
            let ckpt = with_provenance(ckpt.clone(), &method, &inputs_at(p));
            save(&ckpt, &dir.join(format!("period_{:03}.safetensors", p + 1)))?;
        }
    }
    let last = replay.merged.len() - 1;
    save(
        &with_provenance(replay.final_merge().clone(), &method, &inputs_at(last)),
        out,
    )?;
    let (side, bytes) = if csv {
        (
            sidecar(out, ".ratios.csv"),
            csv_bytes(|b| write_ratio_csv(replay.reports.iter(), b))?,
        )
    } else {
        (
            sidecar(out, ".ratios.json"),
            json_bytes(serde_json::to_string_pretty(&replay.reports)?),
        )
    };
    emit(&bytes, Some(&side))?;
    println!(
        "replayed {} periods of {} runs: {}\nratios: {}",
        replay.merged.len(),
        runs.len(),
        out.display(),
        side.display()
    );
    Ok(())
}

pub fn plane(
    anchor: &Path,
    a: &Path,
    b: &Path,
    rows: usize,
    cols: usize,
    margin: f64,
    out: &Path,
) -> CliResult {
    let w0 = load(anchor)?;
    let wa = load(a)?;
    let wb = load(b)?;
    let grid = stockpot_core::geometry::plane_grid(&w0, &wa, &wb, rows, cols, margin)?;
    let name = |r: usize, c: usize| format!("point_{r:03}_{c:03}.safetensors");
    create_dir(out)?;
    for (r, c, x, y) in grid.coordinates() {
        save(&grid.materialize(x, y)?, &out.join(name(r, c)))?;
    }
    let manifest = grid.manifest(margin, name);
    let path = out.join("manifest.json");
    emit(
        &json_bytes(serde_json::to_string_pretty(&manifest)?),
        Some(&path),
    )?;
    println!(
        "{rows}x{cols} plane grid: wA at ({:.4}, {:.4}), wB at ({:.4}, {:.4})\nmanifest: {}",
        manifest.w_a.0,
        manifest.w_a.1,
        manifest.w_b.0,
        manifest.w_b.1,
        path.display()
    );
    Ok(())
}

pub fn perturb(
    center: &Path,
    sigma: Option<f64>,
    sigma_map: Option<&str>,
    sigma_from: Option<&[PathBuf]>,
    seed: u64,
    out: &Path,
    units: &UnitArgs,
) -> CliResult {
    let g = granularity(units)?;
    let c = load(center)?;
    let sigmas: SigmaMap = match (sigma, sigma_map, sigma_from) {
        (Some(s), None, None) => plan_units(&c.layout(), &g)
            .into_iter()
            .map(|u| (u.key, s))
            .collect(),
        (None, Some(raw), None) => json_arg(raw, "--sigma-map")?,
        (None, None, Some(paths)) => {
            let models = load_all(paths)?;
            sigma_from_ensemble(&refs(&models), &g)?
        }
        _ => {
            return Err(usage(
                "give exactly one of --sigma, --sigma-map or --sigma-from",
            ))
        }
    };
    let noisy = perturb_from_center(&c, &g, &sigmas, seed)?;
    save(&noisy, out)?;
    println!(
        "perturbed {} {} units with seed {seed}: {}",
        sigmas.len(),
        g,
        out.display()
    );
    Ok(())
}

fn synth_spec(spec: Option<&Path>, seed: Option<u64>) -> CliResult<SyntheticSpec> {
    match (spec, seed) {
        (Some(p), None) => Ok(SyntheticSpec::load(p)?),
        (Some(p), Some(s)) => Ok(SyntheticSpec::load(p)?.with_seed(s)),
        (None, Some(s)) => Ok(SyntheticSpec::desk(s)),
        (None, None) => Err(usage("the built-in spec needs an explicit --seed")),
    }
}

fn write_spec(spec: &SyntheticSpec, dir: &Path) -> CliResult {
    emit(
        &json_bytes(serde_json::to_string_pretty(spec)?),
        Some(&dir.join("spec.json")),
    )
}

pub fn synth_sample(spec: Option<&Path>, seed: Option<u64>, n: usize, out: &Path) -> CliResult {
    let spec = synth_spec(spec, seed)?;
    let e = sample_ensemble(&spec, n)?;
    create_dir(out)?;
    for (i, m) in e.models.iter().enumerate() {
        save(m, &out.join(format!("model_{i:03}.safetensors")))?;
    }
    save(&e.anchor, &out.join("anchor.safetensors"))?;
    save(&e.center, &out.join("center.safetensors"))?;
    write_spec(&spec, out)?;
    println!(
        "sampled {n} models ({} units, {} parameters, seed {}) into {}",
        spec.units.len(),
        spec.total_dim(),
        spec.seed,
        out.display()
    );
    Ok(())
}

pub fn synth_trajectory(
    spec: Option<&Path>,
    seed: Option<u64>,
    params: &Path,
    seeds: &[u64],
    out: &Path,
) -> CliResult {
    let spec = synth_spec(spec, seed)?;
    let params: TrajectoryParams = json_arg(&params.display().to_string(), "--params")?;
    let tr = simulate_trajectories(&spec, &params, seeds)?;
    create_dir(out)?;
    for (s, run) in tr.runs.iter().enumerate() {
        let dir = out.join(format!("run_{s:03}"));
        create_dir(&dir)?;
        for (t, ckpt) in run.iter().enumerate() {
            save(ckpt, &dir.join(format!("epoch_{:03}.safetensors", t + 1)))?;
        }
    }
    let centers = out.join("centers");
    create_dir(&centers)?;
    for (t, ckpt) in tr.centers.iter().enumerate() {
        save(
            ckpt,
            &centers.join(format!("epoch_{:03}.safetensors", t + 1)),
        )?;
    }
    if !tr.merges.is_empty() {
        let merges = out.join("merges");
        create_dir(&merges)?;
        for (t, ckpt) in tr.merges.iter().enumerate() {
            save(
                ckpt,
                &merges.join(format!("epoch_{:03}.safetensors", t + 1)),
            )?;
        }
    }
    save(&tr.anchor, &out.join("anchor.safetensors"))?;
    save(&tr.mu, &out.join("mu.safetensors"))?;
    write_spec(&spec, out)?;
    emit(
        &json_bytes(serde_json::to_string_pretty(&params)?),
        Some(&out.join("params.json")),
    )?;
    println!(
        "simulated {} runs for {} epochs{} into {}",
        seeds.len(),
        params.epochs,
        if params.rebranch {
            " with rebranching"
        } else {
            ""
        },
        out.display()
    );
    Ok(())
}

pub fn synth_validate(
    spec: Option<&Path>,
    seed: Option<u64>,
    samples: usize,
    out: Option<&Path>,
) -> CliResult {
    let spec = synth_spec(spec, seed)?;
    let r = concentration_stats(&spec, samples)?;
    report(json_bytes(r.to_json()?), out, || {
        let mut s = format!("spec valid: {} units, {samples} samples", spec.units.len());
        for u in &r.units {
            s.push_str(&format!(
                "\n  {}: norm {:.4} (predicted {:.4}), angle {} deg (predicted {})",
                u.unit,
                u.measured_norm_mean,
                u.predicted_norm,
                fmt_opt(u.measured_angle_mean),
                fmt_opt(u.predicted_angle_deg)
            ));
        }
        s
    })
}
