//! Subcommand implementations. Each `*Config::resolve` validates every
//! parameter before any computation starts.

use anyhow::{anyhow, bail, Context, Result};
use mpno_core::contract::{bundled_suite, parse, plan_flop_optimal, plan_greedy, EinsumPlan, LoweringMode};
use mpno_core::error_lab::{
    aliasing_demo, bounds_sweep, write_reports_csv, BoundConstants, FunctionSpec, SweepConfig, SweepReport,
};
use mpno_core::fno::{
    ablation_gaps, encode_weights, frequency_trend, mode_ablation, train as train_model, write_ablation_csv,
    write_frequency_csv, Model, ModelConfig, Phase, PrecisionMode, PrecisionSchedule, StabilizerKind, TaskConfig,
    ToyTask, TrainConfig, TrainMode,
};
use mpno_core::{Grid, PrecisionSystem};
use serde::Serialize;
use serde_json::json;

use crate::config::{BoundsArgs, Format, ModesArgs, PlanArgs, SpectrumArgs, TaskArgs, TrainArgs};
use crate::manifest::{Recorder, RunManifest};
use crate::Globals;

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn parse_token<T>(what: &str, token: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    token.parse().map_err(|e| anyhow!("invalid {what} `{token}`: {e}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsConfig {
    pub sweep: SweepConfig,
    pub function: String,
}

impl BoundsConfig {
    pub fn resolve(a: BoundsArgs, g: &Globals) -> Result<Self> {
        let function = a.function.unwrap_or_else(|| "product".into());
        let spec = FunctionSpec::parse(&function, g.seed)?;
        let systems = a
            .sys
            .unwrap_or_else(|| vec!["half".into()])
            .iter()
            .map(|s| parse_token::<PrecisionSystem>("precision system", s))
            .collect::<Result<Vec<_>>>()?;
        let c2 = a.c2.unwrap_or(BoundConstants::default().c2);
        if !(c2.is_finite() && c2 > 0.0) {
            bail!("--c2 must be positive, got {c2}");
        }
        let sweep = SweepConfig {
            ds: a.d.unwrap_or_else(|| vec![1, 2, 3]),
            ms: a.m.unwrap_or_else(|| vec![4, 8, 16, 32]),
            omegas: a.omega.unwrap_or_else(|| vec![1]),
            systems,
            functions: vec![spec],
            consts: BoundConstants { c2, ..BoundConstants::default() },
        };
        sweep.validate()?;
        Ok(Self { sweep, function })
    }
}

fn write_violations_csv(report: &SweepReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "kind", "function", "sys", "value", "bound"])?;
    for v in &report.violations {
        let kind = match v.kind {
            mpno_core::error_lab::BoundKind::Disc => "disc",
            mpno_core::error_lab::BoundKind::Prec => "prec",
        };
        w.write_record([v.row.to_string(), kind.into(), v.function.clone(), v.sys.clone(), v.value.to_string(), v.bound.to_string()])?;
    }
    Ok(w.into_inner()?)
}

pub fn bounds(cfg: &BoundsConfig, g: &Globals) -> Result<RunManifest> {
    let mut rec = Recorder::new(&g.out)?;
    let report = rec.stage("sweep", || bounds_sweep(&cfg.sweep))?;
    match g.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_reports_csv(&report.rows, &mut buf)?;
            rec.write("bounds.csv", &buf)?;
            rec.write("violations.csv", &write_violations_csv(&report)?)?;
        }
        Format::Json => {
            rec.write("bounds.json", &to_json(&report)?)?;
        }
    }
    let (disc_ratio, prec_ratio) = report.max_ratios();
    println!(
        "bounds: {} rows, {} violations, max disc_err/disc_upper={disc_ratio:.4}, max prec_err/prec_upper={prec_ratio:.4}",
        report.rows.len(),
        report.violations.len()
    );
    for v in &report.violations {
        println!("  violation row {} {:?} {} {}: {} > {}", v.row, v.kind, v.function, v.sys, v.value, v.bound);
    }
    let summary = json!({
        "rows": report.rows.len(),
        "violations": report.violations.len(),
        "max_disc_ratio": disc_ratio,
        "max_prec_ratio": prec_ratio,
    });
    rec.finish("bounds", g.seed, serde_json::to_value(cfg)?, summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanCase {
    pub name: String,
    pub equation: String,
    pub shapes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanConfig {
    pub cases: Vec<PlanCase>,
    pub sys: PrecisionSystem,
    pub lowering: LoweringMode,
}

/// Parse `2x4x8x8,4x4x8x8` into operand shapes. A scalar operand is written
/// as an empty entry.
pub fn parse_shapes(text: &str) -> Result<Vec<Vec<usize>>> {
    text.split(',')
        .map(|op| {
            let op = op.trim();
            if op.is_empty() {
                return Ok(Vec::new());
            }
            op.split('x').map(|d| parse_token::<usize>("dimension", d.trim())).collect()
        })
        .collect()
}

impl PlanConfig {
    pub fn resolve(a: PlanArgs) -> Result<Self> {
        let cases = match (a.equation, a.shapes) {
            (Some(eq), Some(shapes)) => {
                let shapes = parse_shapes(&shapes)?;
                let spec = parse(&eq, &shapes)?;
                vec![PlanCase { name: "custom".into(), equation: spec.equation(), shapes }]
            }
            (Some(_), None) => bail!("--equation needs --shapes"),
            (None, Some(_)) => bail!("--shapes needs --equation"),
            (None, None) => bundled_suite()
                .into_iter()
                .map(|c| PlanCase { name: c.name.into(), equation: c.equation.into(), shapes: c.shapes })
                .collect(),
        };
        let sys = parse_token("precision system", a.sys.as_deref().unwrap_or("exact"))?;
        let lowering = match a.lowering {
            Some(t) => parse_token("lowering mode", &t)?,
            None => LoweringMode::default(),
        };
        Ok(Self { cases, sys, lowering })
    }
}

fn side_by_side(name: &str, greedy: &EinsumPlan, optimal: &EinsumPlan, sys: &PrecisionSystem) -> String {
    let same = greedy.steps == optimal.steps;
    let mut out = format!("== {name}: {} ==\n", greedy.spec);
    out.push_str(&greedy.render());
    out.push_str(&optimal.render());
    let b = sys.bytes_per_real();
    out.push_str(&format!(
        "  peak elems greedy={} flop_optimal={} | peak bytes ({b} B/real) greedy={} flop_optimal={}\n",
        greedy.peak_intermediate_elems,
        optimal.peak_intermediate_elems,
        greedy.peak_bytes(b),
        optimal.peak_bytes(b)
    ));
    if same {
        out.push_str("  plans identical\n");
    }
    out
}

pub fn plan(cfg: &PlanConfig, g: &Globals) -> Result<RunManifest> {
    let mut rec = Recorder::new(&g.out)?;
    let plans = rec.stage("plan", || -> Result<Vec<(String, EinsumPlan, EinsumPlan)>> {
        cfg.cases
            .iter()
            .map(|c| {
                let spec = parse(&c.equation, &c.shapes)?;
                Ok((c.name.clone(), plan_greedy(&spec)?, plan_flop_optimal(&spec)?))
            })
            .collect()
    })?;
    let (bytes, name) = match g.format {
        Format::Csv => {
            let text: String = plans.iter().map(|(n, gp, op)| side_by_side(n, gp, op, &cfg.sys)).collect();
            (text.into_bytes(), "plan.txt")
        }
        Format::Json => {
            let docs: Vec<_> = plans
                .iter()
                .map(|(n, gp, op)| {
                    json!({
                        "name": n,
                        "greedy": gp.doc(cfg.lowering),
                        "flop_optimal": op.doc(cfg.lowering),
                        "same": gp.steps == op.steps,
                    })
                })
                .collect();
            (to_json(&docs)?, "plan.json")
        }
    };
    print!("{}", String::from_utf8_lossy(&bytes));
    rec.write(name, &bytes)?;
    let summary: Vec<_> = plans
        .iter()
        .map(|(n, gp, op)| {
            json!({
                "name": n,
                "greedy_peak": gp.peak_intermediate_elems,
                "flop_optimal_peak": op.peak_intermediate_elems,
                "greedy_flops": gp.total_flops,
                "flop_optimal_flops": op.total_flops,
            })
        })
        .collect();
    rec.finish("plan", g.seed, serde_json::to_value(cfg)?, json!(summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskSetup {
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub input_scale: f64,
}

impl TaskSetup {
    fn resolve(a: TaskArgs, modes: Option<usize>) -> Result<Self> {
        let td = TaskConfig::default();
        let task = TaskConfig {
            d: a.d.unwrap_or(td.d),
            m: a.m.unwrap_or(td.m),
            n_train: a.n_train.unwrap_or(td.n_train),
            n_test: a.n_test.unwrap_or(td.n_test),
            ..td
        };
        Grid::new(task.d, task.m)?;
        let md = ModelConfig::default();
        let model = ModelConfig {
            depth: a.depth.unwrap_or(md.depth),
            width: a.width.unwrap_or(md.width),
            modes: modes.unwrap_or(md.modes),
            stabilizer: match a.stabilizer {
                Some(t) => parse_token::<StabilizerKind>("stabilizer", &t)?,
                None => md.stabilizer,
            },
            lowering: match a.lowering {
                Some(t) => parse_token::<LoweringMode>("lowering mode", &t)?,
                None => md.lowering,
            },
        };
        let tc = TrainConfig::default();
        let train = TrainConfig {
            steps: a.steps.unwrap_or(tc.steps),
            lr: a.lr.unwrap_or(tc.lr),
            momentum: a.momentum.unwrap_or(tc.momentum),
            seed: tc.seed,
        };
        if !(train.lr.is_finite() && train.lr > 0.0) || !(0.0..1.0).contains(&train.momentum) {
            bail!("--lr must be positive and --momentum in [0, 1)");
        }
        let input_scale = a.input_scale.unwrap_or(1.0);
        if !input_scale.is_finite() {
            bail!("--input-scale must be finite");
        }
        Ok(Self { task, model, train, input_scale })
    }

    fn build(&self, seed: u64) -> Result<(ToyTask, TrainConfig)> {
        let task = ToyTask::poisson(&self.task, seed)?.with_input_scale(self.input_scale);
        Ok((task, TrainConfig { seed, ..self.train.clone() }))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainRunConfig {
    pub setup: TaskSetup,
    pub mode: String,
    #[serde(skip)]
    pub train_mode: TrainMode,
}

impl TrainRunConfig {
    pub fn resolve(a: TrainArgs) -> Result<Self> {
        let setup = TaskSetup::resolve(a.task, a.modes)?;
        let (mode, train_mode) = match (a.schedule, a.mode) {
            (Some(_), Some(_)) => bail!("--schedule and --mode are mutually exclusive"),
            (Some(s), None) => {
                let sys: PrecisionSystem =
                    parse_token("precision system", a.schedule_sys.as_deref().unwrap_or("half"))?;
                let sched = if s == "default" {
                    PrecisionSchedule::default_for(sys)?
                } else {
                    let f: Vec<f64> =
                        s.split(',').map(|x| parse_token::<f64>("schedule fraction", x.trim())).collect::<Result<_>>()?;
                    let [a, b, c] = f.as_slice() else { bail!("--schedule needs `default` or three fractions") };
                    PrecisionSchedule::new(sys, *a, *b, *c)?
                };
                (format!("schedule:{s}"), TrainMode::Schedule(sched))
            }
            (None, m) => {
                let m = m.unwrap_or_else(|| "full".into());
                let pm: PrecisionMode = parse_token("precision mode", &m)?;
                (pm.to_string(), TrainMode::Fixed(pm))
            }
        };
        if a.schedule_sys.is_some() && !matches!(train_mode, TrainMode::Schedule(_)) {
            bail!("--schedule-sys needs --schedule");
        }
        Ok(Self { setup, mode, train_mode })
    }
}

pub fn train(cfg: &TrainRunConfig, g: &Globals) -> Result<RunManifest> {
    let mut rec = Recorder::new(&g.out)?;
    let (task, tc) = rec.stage("task", || cfg.setup.build(g.seed))?;
    let mut model = Model::new(&cfg.setup.model, task.grid, g.seed)?;
    let trace = rec.stage("train", || train_model(&task, &mut model, &cfg.train_mode, &tc))?;
    match g.format {
        Format::Csv => {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            rec.write("trace.csv", &buf)?;
        }
        Format::Json => {
            rec.write("trace.json", &to_json(&trace)?)?;
        }
    }
    rec.write("weights.bin", &encode_weights(&model)?)?;
    let count = |p: Phase| trace.rows.iter().filter(|r| r.phase == p).count();
    let first = trace.first_nonfinite();
    let summary = json!({
        "final_test_loss": trace.final_test_loss,
        "diverged": trace.diverged,
        "steps_run": trace.rows.len(),
        "phase_steps": {"mixed": count(Phase::Mixed), "amp": count(Phase::Amp), "full": count(Phase::Full)},
        "first_nonfinite": first.map(|r| json!({"step": r.step, "stage": r.nonfinite_stage})),
    });
    match (trace.final_test_loss, first) {
        (Some(l), _) => println!("train: {} steps, final test relative L2 {l:.6}", trace.rows.len()),
        (None, Some(r)) => println!(
            "train: non-finite value at step {} stage {}",
            r.step,
            r.nonfinite_stage.as_deref().unwrap_or("?")
        ),
        (None, None) => println!("train: test evaluation was non-finite"),
    }
    rec.finish("train", g.seed, serde_json::to_value(cfg)?, summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModesConfig {
    pub setup: TaskSetup,
    pub cutoffs: Vec<usize>,
    pub precisions: Vec<PrecisionMode>,
}

impl ModesConfig {
    pub fn resolve(a: ModesArgs) -> Result<Self> {
        let setup = TaskSetup::resolve(a.task, None)?;
        let cutoffs = a.cutoffs.unwrap_or_else(|| vec![4, 8, 16, 32]);
        if cutoffs.contains(&0) {
            bail!("cutoffs must be positive");
        }
        let precisions = a
            .precisions
            .unwrap_or_else(|| vec!["full".into(), "mixed:half".into()])
            .iter()
            .map(|p| parse_token::<PrecisionMode>("precision mode", p))
            .collect::<Result<_>>()?;
        Ok(Self { setup, cutoffs, precisions })
    }
}

pub fn modes(cfg: &ModesConfig, g: &Globals) -> Result<RunManifest> {
    let mut rec = Recorder::new(&g.out)?;
    let (task, tc) = cfg.setup.build(g.seed)?;
    let mut rows = Vec::new();
    for &k in &cfg.cutoffs {
        let r = rec.stage(&format!("K={k}"), || mode_ablation(&task, &[k], &cfg.precisions, &cfg.setup.model, &tc))?;
        rows.extend(r);
    }
    match g.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_ablation_csv(&rows, &mut buf)?;
            rec.write("modes.csv", &buf)?;
        }
        Format::Json => {
            rec.write("modes.json", &to_json(&rows)?)?;
        }
    }
    for r in &rows {
        let loss = r.final_test_loss.map_or("diverged".to_string(), |l| format!("{l:.6}"));
        println!("modes: K={} {} final test loss {loss}", r.modes, r.precision);
    }
    let gaps: Vec<_> = ablation_gaps(&rows).into_iter().map(|(k, gap)| json!({"modes": k, "gap": gap})).collect();
    rec.finish("modes", g.seed, serde_json::to_value(cfg)?, json!({"gaps": gaps}))
}

#[derive(Debug, Clone, Serialize)]
pub enum SpectrumConfig {
    Tones { seeds: usize, max_freq: u32, m: usize, scale: f64 },
    Alias { amplitude: f64, omegas: Vec<i64>, m: usize },
}

impl SpectrumConfig {
    pub fn resolve(a: SpectrumArgs) -> Result<Self> {
        if a.alias.unwrap_or(false) {
            if a.seeds.is_some() || a.max_freq.is_some() || a.scale.is_some() {
                bail!("--alias does not take --seeds, --max-freq or --scale");
            }
            let amplitude = a.amplitude.unwrap_or(1.0);
            if !amplitude.is_finite() {
                bail!("--M must be finite");
            }
            let m = a.m.unwrap_or(8);
            Grid::new(1, m)?;
            Ok(SpectrumConfig::Alias { amplitude, omegas: a.omega.unwrap_or_else(|| vec![1]), m })
        } else {
            if a.amplitude.is_some() || a.omega.is_some() {
                bail!("--M and --omega need --alias");
            }
            let max_freq = a.max_freq.unwrap_or(10);
            let m = a.m.unwrap_or(256);
            Grid::new(1, m)?;
            if max_freq == 0 || 2 * max_freq as usize >= m {
                bail!("--max-freq {max_freq} must be positive and below m/2 = {}", m / 2);
            }
            let scale = a.scale.unwrap_or(1.0);
            if !scale.is_finite() {
                bail!("--scale must be finite");
            }
            Ok(SpectrumConfig::Tones { seeds: a.seeds.unwrap_or(20), max_freq, m, scale })
        }
    }
}

pub fn spectrum(cfg: &SpectrumConfig, g: &Globals) -> Result<RunManifest> {
    let mut rec = Recorder::new(&g.out)?;
    let summary = match cfg {
        SpectrumConfig::Tones { seeds, max_freq, m, scale } => {
            let seed_list: Vec<u64> = (0..*seeds as u64).map(|s| g.seed.wrapping_add(s)).collect();
            let (reports, mean) = rec.stage("experiment", || frequency_trend(&seed_list, *max_freq, *m, *scale))?;
            match g.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_frequency_csv(&reports, &mut buf)?;
                    rec.write("spectrum.csv", &buf)?;
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["seed", "spearman"])?;
                    for r in &reports {
                        w.write_record([r.seed.to_string(), r.spearman.map(|s| s.to_string()).unwrap_or_default()])?;
                    }
                    rec.write("trend.csv", &w.into_inner().context("flushing trend CSV")?)?;
                }
                Format::Json => {
                    rec.write("spectrum.json", &to_json(&json!({"reports": reports, "mean_spearman": mean}))?)?;
                }
            }
            match mean {
                Some(s) => println!("spectrum: {} seeds, mean Spearman(freq, pct_err) = {s:.4}", reports.len()),
                None => println!("spectrum: {} seeds, Spearman statistic undefined", reports.len()),
            }
            json!({"mean_spearman": mean})
        }
        SpectrumConfig::Alias { amplitude, omegas, m } => {
            let grid = Grid::new(1, *m)?;
            let errs = rec.stage("alias", || {
                omegas.iter().map(|&w| aliasing_demo(*amplitude, w, &grid)).collect::<mpno_core::Result<Vec<_>>>()
            })?;
            let rows: Vec<_> = omegas
                .iter()
                .zip(&errs)
                .map(|(w, e)| json!({"M": amplitude, "omega": w, "m": m, "disc_error": e}))
                .collect();
            match g.format {
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["M", "omega", "m", "disc_error"])?;
                    for (o, e) in omegas.iter().zip(&errs) {
                        w.write_record([amplitude.to_string(), o.to_string(), m.to_string(), e.to_string()])?;
                    }
                    rec.write("alias.csv", &w.into_inner().context("flushing alias CSV")?)?;
                }
                Format::Json => {
                    rec.write("alias.json", &to_json(&rows)?)?;
                }
            }
            for (o, e) in omegas.iter().zip(&errs) {
                println!("alias: M={amplitude} omega={o} m={m} disc_error={e}");
            }
            json!(rows)
        }
    };
    rec.finish("spectrum", g.seed, serde_json::to_value(cfg)?, summary)
}
