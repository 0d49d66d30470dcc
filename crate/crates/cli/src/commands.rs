//! One function per subcommand, each a thin layer over a library module.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use serde::Serialize;
use serde_json::Value;
use torusflux::fields::{
    abc_certificate, abc_flow, lacunary_field, random_smooth_field, single_mode, single_mode_certificate,
    taylor_green_2d, taylor_green_certificate, GeneratorCertificate,
};
use torusflux::flux::{eps_scan, FluxKind, gamma_bound_series, level_scan, FluxSeries, GammaBound};
use torusflux::mollify::{commutator_scan, default_ladder, mollification_rates, MollificationRates, RateSeries};
use torusflux::norms::{besov_norm, cnat_tail_diagnostic, tail_slope, BesovReport, BesovSpec, Summability, TailDiagnostic};
use torusflux::solver::{richardson_estimate, run, ProbeBudget, Richardson, RunOptions, SimState, CFL_SAFETY};
use torusflux::verify::{run_criterion, Check, Scale, CRITERIA};
use torusflux::{tfld, TorusField, TorusGrid};

use crate::config::{parse_ladder, GenKind, RunConfig};
use crate::error::CliError;
use crate::output::{num, Meta, Writer};

fn writer(cfg: &RunConfig, command: &'static str) -> Result<Writer, CliError> {
    Writer::new(&cfg.out, Meta::new(command, cfg.hash(), cfg.seed))
}

/// Empty input paths fall back to the default field in the output directory.
fn input_path(cfg: &RunConfig, input: &Path) -> PathBuf {
    if input.as_os_str().is_empty() {
        cfg.out.join(format!("{}.tfld", cfg.generate.name))
    } else {
        input.to_path_buf()
    }
}

fn load(path: &Path) -> Result<TorusField, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("input file {} does not exist", path.display())));
    }
    tfld::load(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn ladder_or_default(spec: &str, grid: &TorusGrid) -> Result<Vec<f64>, CliError> {
    if spec.is_empty() {
        Ok(default_ladder(grid))
    } else {
        parse_ladder(spec)
    }
}

#[derive(Serialize)]
struct Generated<'a> {
    file: String,
    certificate: &'a GeneratorCertificate,
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let g = &cfg.generate;
    let grid = TorusGrid::new(g.dim, g.n)?;
    let (field, cert) = match g.kind {
        GenKind::TaylorGreen => (taylor_green_2d(&grid)?, taylor_green_certificate(&grid)),
        GenKind::Abc => (abc_flow(&grid, g.abc[0], g.abc[1], g.abc[2])?, abc_certificate(&grid)),
        GenKind::SingleMode => (single_mode(&grid, g.mode_k, g.amplitude)?, single_mode_certificate(&grid)),
        GenKind::Lacunary => {
            let planted: Vec<f64> =
                (0..=grid.j_max()).map(|j| 2f64.powf(-g.planted_decay * j as f64)).collect();
            lacunary_field(&grid, &planted, g.alpha, g.p, cfg.seed)?
        }
        GenKind::RandomSmooth => random_smooth_field(&grid, g.decay_rate, cfg.seed)?,
    };
    let mut w = writer(cfg, "generate")?;
    let file = format!("{}.tfld", g.name);
    w.raw(&file, &tfld::to_bytes(&field))?;
    w.json(&format!("{}.json", g.name), &Generated { file: file.clone(), certificate: &cert })?;
    println!("wrote {}", w.dir.join(file).display());
    Ok(())
}

#[derive(Serialize)]
struct NormsOut {
    input: String,
    report: BesovReport,
    tail: Option<TailDiagnostic>,
    tail_error: Option<String>,
}

pub fn norms(cfg: &RunConfig) -> Result<(), CliError> {
    let n = &cfg.norms;
    let path = input_path(cfg, &n.input);
    let f = load(&path)?;
    let spec = BesovSpec::new(n.alpha, n.p, n.q)?;
    let report = besov_norm(&f, &spec)?;
    let tail = if n.q == Summability::CNat { cnat_tail_diagnostic(&report) } else { tail_slope(&report) };
    let (tail, tail_error) = match tail {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mut w = writer(cfg, "norms")?;
    w.csv("norms.csv", &report.to_csv())?;
    println!("B^{}_{{{},{}}} norm {:e}", spec.s, spec.p, spec.q, report.norm);
    w.json("norms.json", &NormsOut { input: path.display().to_string(), report, tail, tail_error })?;
    Ok(())
}

#[derive(Serialize)]
struct MollOut {
    input: String,
    rates: MollificationRates,
    commutator: Option<RateSeries>,
}

pub fn mollscan(cfg: &RunConfig) -> Result<(), CliError> {
    let m = &cfg.mollscan;
    let path = input_path(cfg, &m.input);
    let f = load(&path)?;
    let ladder = ladder_or_default(&m.ladder, f.grid())?;
    let spec = BesovSpec::new(m.alpha, m.p, Summability::Infinity)?;
    let rates = mollification_rates(&f, &spec, &ladder, m.derivative_order, None)?;
    let commutator = match (m.theta, m.q) {
        (Some(theta), Some(q)) => Some(commutator_scan(&f, &ladder, theta, m.p, q)?),
        _ => None,
    };
    let mut csv = String::from("eps,difference,derivative");
    if commutator.is_some() {
        csv.push_str(",commutator");
    }
    csv.push('\n');
    for (i, e) in ladder.iter().enumerate() {
        csv.push_str(&format!("{},{},{}", num(*e), num(rates.difference.values[i]), num(rates.derivative.values[i])));
        if let Some(c) = &commutator {
            csv.push_str(&format!(",{}", num(c.values[i])));
        }
        csv.push('\n');
    }
    let mut w = writer(cfg, "mollscan")?;
    w.csv("mollscan.csv", &csv)?;
    println!("difference slope {:.4} (alpha {})", rates.difference.slope(), m.alpha);
    if let Some(c) = &commutator {
        println!("commutator slope {:.4}", c.slope());
    }
    w.json("mollscan.json", &MollOut { input: path.display().to_string(), rates, commutator })?;
    Ok(())
}

#[derive(Serialize)]
struct FluxOut {
    input: String,
    p: f64,
    series: FluxSeries,
    gamma: Option<Vec<GammaBound>>,
}

pub fn fluxscan(cfg: &RunConfig) -> Result<(), CliError> {
    let fc = &cfg.fluxscan;
    let path = input_path(cfg, &fc.input);
    let v = load(&path)?;
    let grid = *v.grid();
    if matches!(fc.kind, FluxKind::HelicityLp | FluxKind::HelicityMoll) && grid.dim() != 3 {
        return Err(CliError::Config(format!("{} needs a 3D field, {} is {}D", fc.kind, path.display(), grid.dim())));
    }
    let levels: Vec<i32> = if fc.levels.is_empty() { (1..=grid.j_max()).collect() } else { fc.levels.clone() };
    let series = if fc.kind.is_lp() {
        level_scan(&v, fc.kind, &levels)?
    } else {
        eps_scan(&v, fc.kind, &ladder_or_default(&fc.ladder, &grid)?)?
    };
    let mut w = writer(cfg, "fluxscan")?;
    let stem = format!("flux_{}", fc.kind);
    w.csv(&format!("{stem}.csv"), &series.to_csv())?;
    println!("{} rows, fitted slope {:.4}", series.values.len(), series.slope());
    let gamma = match (fc.theta, fc.alpha) {
        (Some(theta), Some(alpha)) => {
            let d = besov_norm(&v, &BesovSpec::new(alpha, fc.p, Summability::Infinity)?)?.d_j;
            let dt = besov_norm(&v, &BesovSpec::new(fc.beta.unwrap_or(alpha), fc.p, Summability::Infinity)?)?.d_j;
            let lv: Vec<i64> = levels.iter().map(|&n| n as i64).collect();
            let (bounds, _) = gamma_bound_series(&d, &dt, alpha, fc.beta, theta, &lv)?;
            let mut csv = String::from("N,bound\n");
            for b in &bounds {
                csv.push_str(&format!("{},{}\n", b.n_level, num(b.value)));
            }
            w.csv("gamma.csv", &csv)?;
            Some(bounds)
        }
        _ => None,
    };
    w.json(&format!("{stem}.json"), &FluxOut { input: path.display().to_string(), p: fc.p, series, gamma })?;
    Ok(())
}

#[derive(Serialize)]
struct RunOut {
    input: String,
    steps: usize,
    dt: f64,
    t_final: f64,
    energy_drift: f64,
    second_drift: f64,
    probes: Vec<ProbeBudget>,
    snapshots: Vec<String>,
    richardson: Option<Richardson>,
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let sc = &cfg.simulate;
    let path = input_path(cfg, &sc.input);
    let v = load(&path)?;
    let dt = match sc.dt {
        Some(dt) => dt,
        None => {
            let s = SimState::from_velocity(&v)?;
            let speed = s.max_speed();
            if speed == 0.0 {
                sc.t_final
            } else {
                0.5 * CFL_SAFETY * v.grid().spacing() / speed
            }
        }
    };
    let opts = RunOptions { t_final: sc.t_final, dt, snapshot_every: sc.snapshot_every, probes: sc.probes.clone() };
    let mut w = writer(cfg, "simulate")?;
    let traj = w.dir.join("trajectory");
    std::fs::create_dir_all(&traj).map_err(|e| CliError::Io(format!("creating {}: {e}", traj.display())))?;
    let (tx, rx) = mpsc::channel::<(usize, Vec<u8>)>();
    let dir = traj.clone();
    let sink = thread::spawn(move || -> std::io::Result<Vec<String>> {
        let mut names = Vec::new();
        for (step, bytes) in rx {
            let name = format!("snap_{step:06}.tfld");
            std::fs::write(dir.join(&name), bytes)?;
            names.push(name);
        }
        Ok(names)
    });
    let result = run(&v, &opts, |s| {
        tx.send((s.step, tfld::to_bytes(&s.velocity())))
            .map_err(|_| torusflux::Error::Domain("snapshot writer stopped".into()))
    });
    drop(tx);
    let names = sink.join().map_err(|_| CliError::Io("snapshot writer panicked".into()))??;
    let summary = result?;
    let richardson = if sc.richardson { Some(richardson_estimate(&v, sc.t_final, dt)?) } else { None };
    w.csv("trajectory/budgets.csv", &summary.budgets_csv())?;
    println!(
        "{} steps of {:e}: energy drift {:e}, second invariant drift {:e}",
        summary.steps,
        summary.dt,
        summary.energy_drift(),
        summary.second_drift()
    );
    w.json(
        "trajectory/run.json",
        &RunOut {
            input: path.display().to_string(),
            steps: summary.steps,
            dt: summary.dt,
            t_final: sc.t_final,
            energy_drift: summary.energy_drift(),
            second_drift: summary.second_drift(),
            probes: summary.probes.clone(),
            snapshots: names,
            richardson,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyOut {
    scale: Scale,
    total: usize,
    passed: usize,
    checks: Vec<Check>,
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let vc = &cfg.verify;
    let mut checks = Vec::new();
    for (id, title) in CRITERIA {
        if !vc.criteria.is_empty() && !vc.criteria.contains(&id) {
            continue;
        }
        println!("criterion {id}: {title}");
        for c in run_criterion(id, vc.scale, cfg.seed) {
            println!("  {c}");
            checks.push(c);
        }
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    let total = checks.len();
    println!("{passed}/{total} checks passed");
    let mut w = writer(cfg, "verify")?;
    w.json("verify.json", &VerifyOut { scale: vc.scale, total, passed, checks })?;
    if passed == total {
        Ok(())
    } else {
        Err(CliError::Check(format!("{} of {total} checks failed", total - passed)))
    }
}

fn collect(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("reading {}: {e}", dir.display())))?;
    let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect(&p, root, out)?;
        } else if matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "csv")) {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if !(dir == root && name.starts_with("report.")) {
                out.push(p);
            }
        }
    }
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let inputs = if cfg.report.inputs.is_empty() { vec![cfg.out.clone()] } else { cfg.report.inputs.clone() };
    let mut json = BTreeMap::new();
    let mut csv = String::from("source,row,column,value\n");
    for root in &inputs {
        if !root.is_dir() {
            return Err(CliError::Io(format!("report input {} is not a directory", root.display())));
        }
        let mut files = Vec::new();
        collect(root, root, &mut files)?;
        for f in files {
            let key = f.strip_prefix(root).unwrap_or(&f).to_string_lossy().replace('\\', "/");
            let key = format!("{}/{key}", root.file_name().and_then(|n| n.to_str()).unwrap_or("."));
            let text = std::fs::read_to_string(&f).map_err(|e| CliError::Io(format!("reading {}: {e}", f.display())))?;
            if f.extension().and_then(|e| e.to_str()) == Some("json") {
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Io(format!("{} is not valid JSON: {e}", f.display())))?;
                json.insert(key, v);
            } else {
                let mut lines = text.lines().filter(|l| !l.starts_with('#'));
                let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
                for (row, line) in lines.enumerate() {
                    for (col, val) in header.iter().zip(line.split(',')) {
                        csv.push_str(&format!("{key},{row},{col},{val}\n"));
                    }
                }
            }
        }
    }
    let mut w = writer(cfg, "report")?;
    println!("merged {} JSON files", json.len());
    w.json("report.json", &json)?;
    w.csv("report.csv", &csv)?;
    Ok(())
}
