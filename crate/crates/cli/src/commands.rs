use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use wate::bootstrap::BootstrapOptions;
use wate::simulation::{self, report, MethodRow, Scenario, SimulationDesign, TRUTH_SEED, TRUTH_SIZE};
use wate::{ColumnMap, DesignSpec, EstimateOptions, EstimationPipeline, EstimatorKind};

use crate::config::{render, ConfigFile};
use crate::{parse, CommonArgs, EstimateArgs, Format, SimulateArgs, TrueValuesArgs};

pub const DEFAULT_SEED: u64 = 2019;

pub enum Status {
    Complete,
    /// Report written, but this many cells could not be computed.
    Partial(usize),
}

const COMMON_KEYS: &[&str] = &["seed", "workers", "out", "format"];

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    COMMON_KEYS.iter().chain(extra).copied().collect()
}

struct Common {
    seed: Option<u64>,
    workers: usize,
    out: Option<PathBuf>,
    format: Option<Format>,
}

fn load_config(common: &CommonArgs, extra: &[&'static str]) -> Result<(ConfigFile, Common)> {
    let cfg = match &common.config {
        Some(p) => ConfigFile::load(p, &keys(extra))?,
        None => ConfigFile::default(),
    };
    let resolved = Common {
        seed: cfg.merge_parsed(common.seed, "seed")?,
        workers: cfg.merge_parsed(common.workers, "workers")?.unwrap_or(0),
        out: cfg.merge(common.out.as_ref().map(|p| p.display().to_string()), "out").map(PathBuf::from),
        format: cfg.merge_parsed(common.format, "format")?,
    };
    Ok((cfg, resolved))
}

fn csv_with_echo(echo: &str, body: &str) -> String {
    let mut out = String::new();
    for line in echo.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(body);
    out
}

fn md_with_echo(echo: &str, body: &str) -> String {
    format!("{body}\n## Configuration\n\n```\n{echo}```\n")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit(common: &Common, echo: &str, csv: &str, md: &str) -> Result<()> {
    let csv = csv_with_echo(echo, csv);
    let md = md_with_echo(echo, md);
    match (&common.out, common.format) {
        (None, Some(Format::Csv)) => print!("{csv}"),
        (None, _) => print!("{md}"),
        (Some(p), Some(Format::Csv)) => write_file(p, &csv)?,
        (Some(p), Some(Format::Md)) => write_file(p, &md)?,
        (Some(p), _) => {
            let c = p.with_extension("csv");
            let m = p.with_extension("md");
            write_file(&c, &csv)?;
            write_file(&m, &md)?;
            eprintln!("wrote {} and {}", c.display(), m.display());
        }
    }
    Ok(())
}

pub fn estimate(args: EstimateArgs) -> Result<Status> {
    let (cfg, common) = load_config(
        &args.common,
        &[
            "input",
            "treatment",
            "outcome",
            "covariates",
            "estimand",
            "estimator",
            "pi-design",
            "m-design",
            "truncate",
            "bootstrap",
            "literal-aipw",
        ],
    )?;
    let input = cfg
        .merge(args.input.map(|p| p.display().to_string()), "input")
        .context("no input CSV given")?;
    let map = ColumnMap {
        treatment: cfg.merge(args.treatment, "treatment").unwrap_or_else(|| "a".into()),
        outcome: cfg.merge(args.outcome, "outcome").unwrap_or_else(|| "y".into()),
        covariates: cfg
            .merge(args.covariates, "covariates")
            .map(|s| s.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect()),
    };
    let ds = wate::load_csv(&input, &map).with_context(|| format!("loading {input}"))?;
    let names = ds.covariates().names().to_vec();
    let main_effects = names.join(" + ");

    let estimand_src = cfg.merge(args.estimand, "estimand").unwrap_or_else(|| "ate,att,atc,ato".into());
    let estimator_src = cfg.merge(args.estimator, "estimator").unwrap_or_else(|| "regression,ipw,aipw".into());
    let pi_src = cfg.merge(args.pi_design, "pi-design").unwrap_or_else(|| main_effects.clone());
    let m_src = cfg.merge(args.m_design, "m-design").unwrap_or_else(|| main_effects.clone());
    let truncation = cfg.merge(args.truncate, "truncate").map(|s| parse::truncation(&s)).transpose()?;
    let replicates = cfg.merge_parsed(args.bootstrap, "bootstrap")?.unwrap_or(1000);
    let literal = cfg.merge_bool(args.literal_aipw, "literal-aipw")?;
    let seed = common.seed.unwrap_or(DEFAULT_SEED);

    let pipeline = EstimationPipeline {
        pi_design: DesignSpec::parse(&pi_src, &names).context("propensity design")?,
        m_design: DesignSpec::parse(&m_src, &names).context("outcome design")?,
        estimands: parse::estimands(&estimand_src, &names)?,
        estimators: parse::estimators(&estimator_src)?,
        truncation,
        fit_options: Default::default(),
        estimate_options: EstimateOptions { literal_aipw: literal },
    };
    if replicates == 1 {
        bail!("bootstrap needs at least 2 replicates (0 disables it)");
    }
    let boot = (replicates > 0).then_some(BootstrapOptions {
        replicates,
        seed,
        workers: common.workers,
    });
    let report = pipeline.run(&ds, boot.as_ref())?;

    let echo = render(&[
        ("input", input.clone()),
        ("treatment", map.treatment.clone()),
        ("outcome", map.outcome.clone()),
        ("covariates", names.join(",")),
        ("estimand", estimand_src),
        ("estimator", estimator_src),
        ("pi-design", pi_src),
        ("m-design", m_src),
        ("truncate", truncation.map(|(l, u)| format!("{l},{u}")).unwrap_or_default()),
        ("bootstrap", replicates.to_string()),
        ("seed", seed.to_string()),
        ("literal-aipw", literal.to_string()),
    ]);
    emit(&common, &echo, &report.to_csv(), &report.to_markdown())?;
    Ok(match report.n_failed() {
        0 => Status::Complete,
        n => Status::Partial(n),
    })
}

fn rows_for(estimators: &[EstimatorKind]) -> Vec<MethodRow> {
    let mut rows = Vec::new();
    for &k in estimators {
        let r = |pi, m| MethodRow::new(k, pi, m);
        match k {
            EstimatorKind::Regression => rows.extend([r(None, Some(true)), r(None, Some(false))]),
            EstimatorKind::IpwNormalized | EstimatorKind::IpwUnnormalized => {
                rows.extend([r(Some(true), None), r(Some(false), None)])
            }
            EstimatorKind::Aipw | EstimatorKind::DrLinearInPi => rows.extend([
                r(Some(true), Some(true)),
                r(Some(true), Some(false)),
                r(Some(false), Some(true)),
                r(Some(false), Some(false)),
            ]),
        }
    }
    rows
}

fn scenarios(src: &str) -> Result<Vec<Scenario>> {
    parse::list::<u8>(src, "outcome model")?
        .into_iter()
        .map(|i| Scenario::from_index(i).map_err(Into::into))
        .collect()
}

pub fn simulate(args: SimulateArgs) -> Result<Status> {
    let (cfg, common) = load_config(
        &args.common,
        &["outcome-model", "n", "reps", "estimand", "estimator", "truth-size", "literal-aipw"],
    )?;
    let model_src = cfg.merge(args.outcome_model, "outcome-model").unwrap_or_else(|| "1".into());
    let n_src = cfg.merge(args.n, "n").unwrap_or_else(|| "200,1000".into());
    let reps = cfg.merge_parsed(args.reps, "reps")?.unwrap_or(1000);
    let estimand_src = cfg.merge(args.estimand, "estimand").unwrap_or_else(|| "ate,att,atc,ato".into());
    let estimator_src = cfg.merge(args.estimator, "estimator").unwrap_or_else(|| "regression,ipw,aipw".into());
    let truth_size = cfg.merge_parsed(args.truth_size, "truth-size")?.unwrap_or(TRUTH_SIZE);
    let literal = cfg.merge_bool(args.literal_aipw, "literal-aipw")?;
    let seed = common.seed.unwrap_or(DEFAULT_SEED);

    let models = scenarios(&model_src)?;
    let ns: Vec<usize> = parse::list(&n_src, "sample size")?;
    let estimands = parse::estimands(&estimand_src, &[])?;
    let rows = rows_for(&parse::estimators(&estimator_src)?);

    let mut all = Vec::new();
    let mut md = String::new();
    for &scenario in &models {
        let mut per_model = Vec::new();
        for &n in &ns {
            let design = SimulationDesign {
                rows: rows.clone(),
                estimands: estimands.clone(),
                truth_size,
                estimate_options: EstimateOptions { literal_aipw: literal },
                workers: common.workers,
                ..SimulationDesign::new(scenario, n, reps, seed)
            };
            per_model.push(simulation::run_study(&design)?);
        }
        md.push_str(&report::to_markdown(&per_model));
        all.extend(per_model);
    }
    let empty = all
        .iter()
        .flat_map(|r| &r.cells)
        .filter(|c| c.defined && c.n_ok == 0)
        .count();

    let echo = render(&[
        ("outcome-model", model_src),
        ("n", n_src),
        ("reps", reps.to_string()),
        ("estimand", estimand_src),
        ("estimator", estimator_src),
        ("truth-size", truth_size.to_string()),
        ("seed", seed.to_string()),
        ("literal-aipw", literal.to_string()),
    ]);
    emit(&common, &echo, &report::to_csv(&all), &md)?;
    Ok(match empty {
        0 => Status::Complete,
        n => Status::Partial(n),
    })
}

pub fn true_values(args: TrueValuesArgs) -> Result<Status> {
    let (cfg, common) = load_config(&args.common, &["outcome-model", "m"])?;
    let model_src = cfg.merge(args.outcome_model, "outcome-model").unwrap_or_else(|| "1,2".into());
    let m = cfg.merge_parsed(args.m, "m")?.unwrap_or(TRUTH_SIZE);
    let seed = common.seed.unwrap_or(TRUTH_SEED);
    if m < 2 {
        bail!("--m must be at least 2");
    }

    let mut csv = String::from("outcome_model,estimand,value,mc_se,draws\n");
    let mut md = String::from("# True estimands\n\n| Outcome model | ATE | ATT | ATC | ATO |\n|---|---|---|---|---|\n");
    let mut text = String::new();
    for scenario in scenarios(&model_src)? {
        let t = simulation::cached_true_estimands(scenario, m, seed)?;
        let _ = writeln!(text, "{scenario}\n{}", report::truth_to_text(&t));
        let mut row = format!("| {} |", scenario.index());
        for label in ["ATE", "ATT", "ATC", "ATO"] {
            let (v, se) = (t.get(label).expect("label"), t.se(label).expect("label"));
            let _ = writeln!(csv, "{},{label},{v:.6},{se:.6},{}", scenario.index(), t.sample_size_used);
            let _ = write!(row, " {v:.4} ({se:.4}) |");
        }
        md.push_str(&row);
        md.push('\n');
    }
    let echo = render(&[("outcome-model", model_src), ("m", m.to_string()), ("seed", seed.to_string())]);
    match (&common.out, common.format) {
        (None, None) => print!("{text}"),
        _ => emit(&common, &echo, &csv, &md)?,
    }
    Ok(Status::Complete)
}
