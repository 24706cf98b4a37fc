use std::path::{Path, PathBuf};

use ovsens::benchmarking::{benchmark_candidates, benchmark_included, joint_rho_sq, BenchmarkEntry, BenchmarkTable};
use ovsens::ingest::{encode, load_table_with, stepwise_select, AnalysisConfig, Encoded, StepwiseResult, ZoneSpec};
use ovsens::propensity::{
    benchmark_under_stratification, check_balance, stratified_effect, StratifiedDesign,
};
use ovsens::regression::{decompose_omission, fit_wls, FitResult, ModelSpec};
use ovsens::report::{Cell, Column, Metadata, Report, Section, SensitivityRow};
use ovsens::sensitivity::{
    adjusted_se, interval_at, omitted_bias, sensitivity_interval, t_quantile, SensitivityZone,
};
use ovsens::targets::{benchmark_target, lincom_effect, EffectTarget};
use ovsens::Error;
use sha2::{Digest, Sha256};

use crate::error::{Context, PResult, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Benchmark,
    Sensitivity,
    Targets,
    Propensity,
    Verify,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Benchmark => "benchmark",
            Command::Sensitivity => "sensitivity",
            Command::Targets => "targets",
            Command::Propensity => "propensity",
            Command::Verify => "verify",
        }
    }
}

/// Everything a pipeline run needs besides the subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    /// Overrides the config's data path.
    pub data: Option<PathBuf>,
    /// Overrides the config's zones.
    pub zones: Option<Vec<ZoneSpec>>,
    /// Overrides the config's confidence level.
    pub q_level: Option<f64>,
    pub timestamp: bool,
}

fn usage(operation: &'static str, msg: String) -> PipelineError {
    PipelineError {
        module: "cli_report",
        operation,
        source: Error::Config(msg),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError {
        module: "ingest",
        operation: "load_table",
        source: Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        },
    }
}

struct Prepared {
    config: AnalysisConfig,
    encoded: Encoded<f64>,
    spec: ModelSpec,
    stepwise: Option<StepwiseResult<f64>>,
    q_level: f64,
    metadata: Metadata,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn prepare(command: Command, opts: &Options) -> PResult<Prepared> {
    let mut config = AnalysisConfig::from_path(&opts.config).ctx("ingest", "load_config")?;
    if let Some(z) = &opts.zones {
        config.zones = z.clone();
    }
    if let Some(q) = opts.q_level {
        config.q_level = q;
    }
    config.validate().ctx("ingest", "load_config")?;
    let data_path = opts
        .data
        .clone()
        .or_else(|| config.data.clone())
        .ok_or_else(|| usage("run_pipeline", "no data file: set `data` in the config or pass --data".into()))?;

    let data_bytes = std::fs::read(&data_path).map_err(|e| io_error(&data_path, e))?;
    let config_bytes = std::fs::read(&opts.config).map_err(|e| io_error(&opts.config, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&data_bytes);
    hasher.update(&config_bytes);
    let input_hash = hex(&hasher.finalize());

    let delimiter = config.delimiter_byte().ctx("ingest", "load_config")?;
    let table = load_table_with(&data_path, delimiter).ctx("ingest", "load_table")?;
    let encoded = encode::<f64>(&table, &config).ctx("ingest", "encode")?;

    let (spec, stepwise) = if config.stepwise.enabled {
        let r = stepwise_select(&encoded.data, &encoded.spec, &config.stepwise).ctx("ingest", "stepwise_select")?;
        (r.spec.clone(), Some(r))
    } else {
        (encoded.spec.clone(), None)
    };

    let mut metadata = Metadata::new(command.as_str());
    metadata.input_hash = Some(input_hash);
    let mut shown = config.clone();
    shown.data = Some(data_path.file_name().map(PathBuf::from).unwrap_or(data_path.clone()));
    metadata.config = serde_json::to_value(&shown).ok();
    if opts.timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        metadata.timestamp = Some(format!("unix:{secs}"));
    }
    Ok(Prepared {
        q_level: config.q_level,
        config,
        encoded,
        spec,
        stepwise,
        metadata,
    })
}

/// Runs one subcommand and returns its report.
pub fn run_pipeline(command: Command, opts: &Options) -> PResult<Report> {
    let cx = prepare(command, opts)?;
    let mut report = Report::new(cx.metadata.clone());
    match command {
        Command::Fit => fit_sections(&cx, &mut report)?,
        Command::Benchmark => benchmark_sections(&cx, &mut report)?,
        Command::Sensitivity => sensitivity_sections(&cx, &mut report)?,
        Command::Targets => target_sections(&cx, &mut report)?,
        Command::Propensity => propensity_sections(&cx, &mut report)?,
        Command::Verify => verify_sections(&cx, &mut report)?,
    }
    Ok(report)
}

/// The outcome fit, which must leave residual variance for anything but `fit`.
fn model_fit(cx: &Prepared) -> PResult<FitResult<f64>> {
    let fit = fit_wls(&cx.encoded.data, &cx.spec).ctx("core_regression", "fit_wls")?;
    fit.require_imperfect(&cx.spec.outcome).ctx("core_regression", "fit_wls")?;
    Ok(fit)
}

fn data_note(cx: &Prepared) -> String {
    format!(
        "{} rows used, {} dropped for missing values",
        cx.encoded.rows_used.len(),
        cx.encoded.rows_dropped
    )
}

fn fit_sections(cx: &Prepared, report: &mut Report) -> PResult<()> {
    let fit = fit_wls(&cx.encoded.data, &cx.spec).ctx("core_regression", "fit_wls")?;
    let q = t_quantile::<f64>(cx.q_level, fit.df).ctx("sensitivity", "t_quantile")?;
    let (lo, hi) = fit.confint(&cx.spec.treatment, q).ctx("core_regression", "confint")?;
    let mut s = Section::fit("fit", "Outcome regression", &fit);
    s.notes.push(data_note(cx));
    if fit.require_imperfect(&cx.spec.outcome).is_err() {
        s.notes.push("the outcome is fitted exactly; sensitivity analysis is undefined".into());
    }
    s.notes.push(format!(
        "{:.0}% interval for {}: ({lo:.4}, {hi:.4})",
        cx.q_level * 100.0,
        cx.spec.treatment
    ));
    report.push(s);
    if let Some(sw) = &cx.stepwise {
        let mut s = Section::new(
            "stepwise",
            "Backward stepwise removals",
            vec![
                Column::new("step"),
                Column::new("removed"),
                Column::new("k"),
                Column::num("f", 3),
                Column::num("p_value", 4),
                Column::num("aic", 2),
            ],
        );
        for (i, st) in sw.trace.iter().enumerate() {
            s.rows.push(vec![
                Cell::int(i + 1),
                Cell::text(&st.removed),
                Cell::int(st.k),
                Cell::num(st.f),
                Cell::num(st.p_value),
                Cell::num(st.aic),
            ]);
        }
        s.notes.push(format!(
            "{} of {} covariate groups retained",
            sw.spec.covariates.len(),
            cx.encoded.spec.covariates.len()
        ));
        report.push(s);
    }
    Ok(())
}

fn included_table(cx: &Prepared) -> PResult<BenchmarkTable<f64>> {
    benchmark_included(&cx.encoded.data, &cx.spec).ctx("benchmarking", "benchmark_included")
}

fn candidate_table(cx: &Prepared) -> PResult<BenchmarkTable<f64>> {
    benchmark_candidates(&cx.encoded.data, &cx.spec, &cx.encoded.candidates).ctx("benchmarking", "benchmark_candidates")
}

fn benchmark_sections(cx: &Prepared, report: &mut Report) -> PResult<()> {
    model_fit(cx)?;
    let included = included_table(cx)?;
    let candidates = candidate_table(cx)?;
    let mut table = included.clone();
    table.entries.extend(candidates.entries);
    let mut s = Section::benchmark("benchmark", "Treatment confounding and outcome partial R^2 benchmarks", &table);
    let joint = joint_rho_sq(&cx.encoded.data, &cx.spec, &cx.spec.covariates).ctx("benchmarking", "joint_rho_sq")?;
    s.notes.push(format!(
        "all {} included groups jointly: rho_sq = {joint:.4}",
        cx.spec.covariates.len()
    ));
    s.notes.push("t_w for groups with k > 1 is the rescaled square root of F".into());
    report.push(s);
    Ok(())
}

/// The table holding a benchmark variable, looked up among candidates first.
fn find_entry<'a>(tables: &'a [&'a BenchmarkTable<f64>], name: &str) -> Option<&'a BenchmarkEntry<f64>> {
    tables.iter().find_map(|t| t.entry(name))
}

struct ResolvedZone {
    label: String,
    zone: SensitivityZone<f64>,
}

fn resolve_zones(cx: &Prepared, zones: &[ZoneSpec], tables: &[&BenchmarkTable<f64>]) -> PResult<Vec<ResolvedZone>> {
    let mut out = Vec::new();
    for z in zones {
        match z {
            ZoneSpec::Fixed { t, r, k } => out.push(ResolvedZone {
                label: format!("T={t}, R={r}"),
                zone: SensitivityZone::new(*t, *r).with_rank(*k),
            }),
            ZoneSpec::Benchmark { variable, r } => {
                let e = find_entry(tables, variable).ok_or_else(|| {
                    usage(
                        "resolve_zones",
                        format!("benchmark zone `{variable}` is neither an included covariate nor a candidate"),
                    )
                })?;
                if let Some(reason) = &e.degenerate {
                    return Err(PipelineError {
                        module: "benchmarking",
                        operation: "resolve_zones",
                        source: Error::DegenerateVariance(format!("{variable}: {reason}")),
                    });
                }
                let rs: Vec<f64> = match r {
                    Some(r) => vec![*r],
                    None => cx.config.r_bounds.clone(),
                };
                for r in rs {
                    out.push(ResolvedZone {
                        label: variable.clone(),
                        zone: SensitivityZone::new(e.t_w.abs(), r).with_rank(e.k),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn sensitivity_rows(
    estimate: f64,
    se: f64,
    df: usize,
    q: f64,
    zones: &[ResolvedZone],
) -> PResult<Vec<SensitivityRow<f64>>> {
    zones
        .iter()
        .map(|z| {
            let interval = sensitivity_interval(estimate, se, df, q, &z.zone).ctx("sensitivity", "sensitivity_interval")?;
            Ok(SensitivityRow {
                label: z.label.clone(),
                t_bound: z.zone.t_bound,
                r_bound: z.zone.r_bound,
                k: z.zone.k,
                estimate,
                se,
                interval,
            })
        })
        .collect()
}

fn default_zones(cx: &Prepared) -> Vec<ZoneSpec> {
    cx.encoded
        .candidates
        .iter()
        .map(|c| ZoneSpec::Benchmark {
            variable: c.clone(),
            r: None,
        })
        .collect()
}

fn sensitivity_sections(cx: &Prepared, report: &mut Report) -> PResult<()> {
    let fit = model_fit(cx)?;
    let b = fit.treatment_coef().ctx("core_regression", "fit_wls")?;
    let se = fit.treatment_se().ctx("core_regression", "fit_wls")?;
    let q = t_quantile::<f64>(cx.q_level, fit.df).ctx("sensitivity", "t_quantile")?;
    let zones = if cx.config.zones.is_empty() {
        default_zones(cx)
    } else {
        cx.config.zones.clone()
    };
    let needs_benchmarks = zones.iter().any(|z| matches!(z, ZoneSpec::Benchmark { .. }));
    let tables = if needs_benchmarks {
        vec![candidate_table(cx)?, included_table(cx)?]
    } else {
        Vec::new()
    };
    let refs: Vec<&BenchmarkTable<f64>> = tables.iter().collect();
    let resolved = resolve_zones(cx, &zones, &refs)?;
    let rows = sensitivity_rows(b, se, fit.df, q, &resolved)?;
    let mut s = Section::sensitivity("sensitivity", "Sensitivity intervals for the treatment effect", &rows);
    s.notes.push(format!(
        "{} = {b:.4} (se {se:.4}), df = {}, q = {q:.4} ({:.0}% level)",
        cx.spec.treatment,
        fit.df,
        cx.q_level * 100.0
    ));
    report.push(s);
    Ok(())
}

fn targets_of(cx: &Prepared) -> PResult<Vec<EffectTarget<f64>>> {
    if !cx.config.targets.is_empty() {
        return cx.encoded.targets(&cx.config).ctx("targets", "resolve_targets");
    }
    let mut t = vec![EffectTarget::main_effect(&cx.spec)];
    if !cx.spec.interactions.is_empty() {
        t.push(ovsens::targets::ett_target(&cx.encoded.data, &cx.spec).ctx("targets", "ett_target")?);
    }
    Ok(t)
}

fn target_sections(cx: &Prepared, report: &mut Report) -> PResult<()> {
    let fit = model_fit(cx)?;
    let q = t_quantile::<f64>(cx.q_level, fit.df).ctx("sensitivity", "t_quantile")?;
    let targets = targets_of(cx)?;
    let mut est = Section::new(
        "targets",
        "Effect targets",
        vec![
            Column::new("target"),
            Column::new("combination"),
            Column::num("estimate", 4),
            Column::num("se", 4),
            Column::num("lower", 3),
            Column::num("upper", 3),
        ],
    );
    let mut sens = Section::new(
        "target_sensitivity",
        "Sensitivity intervals for effect targets",
        vec![
            Column::new("target"),
            Column::new("candidate"),
            Column::new("k"),
            Column::num("t_w", 2),
            Column::num("r_bound", 3),
            Column::num("lower", 3),
            Column::num("upper", 3),
            Column::new("regime"),
        ],
    );
    for t in &targets {
        let (e, s) = lincom_effect(&fit, t).ctx("targets", "lincom_effect")?;
        let combination: Vec<String> = t.combination.iter().map(|(c, w)| format!("{w}*{c}")).collect();
        est.rows.push(vec![
            Cell::text(&t.label),
            Cell::text(combination.join(" + ")),
            Cell::num(e),
            Cell::num(s),
            Cell::num(e - q * s),
            Cell::num(e + q * s),
        ]);
        if cx.encoded.candidates.is_empty() {
            continue;
        }
        let table = benchmark_target(&cx.encoded.data, &cx.spec, t, &cx.encoded.candidates)
            .ctx("targets", "benchmark_target")?;
        for entry in &table.entries {
            if entry.is_degenerate() {
                sens.notes.push(format!("{} / {}: not benchmarked", t.label, entry.name));
                continue;
            }
            for &r in &cx.config.r_bounds {
                let zone = SensitivityZone::new(entry.t_w.abs(), r).with_rank(entry.k);
                let iv = sensitivity_interval(e, s, fit.df, q, &zone).ctx("targets", "target_sensitivity")?;
                sens.rows.push(vec![
                    Cell::text(&t.label),
                    Cell::text(&entry.name),
                    Cell::int(entry.k),
                    Cell::num(entry.t_w),
                    Cell::num(r),
                    Cell::num(iv.lower),
                    Cell::num(iv.upper),
                    Cell::text(iv.regime.as_str()),
                ]);
            }
        }
    }
    est.notes.push(format!("df = {}, q = {q:.4}", fit.df));
    report.push(est);
    if !sens.rows.is_empty() || !sens.notes.is_empty() {
        report.push(sens);
    }
    Ok(())
}

fn propensity_sections(cx: &Prepared, report: &mut Report) -> PResult<()> {
    let design = StratifiedDesign::new(
        cx.spec.outcome.clone(),
        cx.spec.treatment.clone(),
        cx.encoded.propensity_covariates.clone(),
    )
    .with_strata(cx.config.propensity.n_strata);
    let data = &cx.encoded.data;
    let (model, strat) = design.stratify(data).ctx("propensity", "fit_logistic")?;

    let mut ps = Section::new(
        "propensity_model",
        "Propensity model",
        vec![Column::new("term"), Column::num("coefficient", 4), Column::num("se", 4)],
    );
    for ((n, c), s) in model.names.iter().zip(&model.coefficients).zip(&model.se) {
        ps.rows.push(vec![Cell::text(n), Cell::num(*c), Cell::num(*s)]);
    }
    ps.notes.push(format!(
        "converged in {} iterations, deviance {:.3}, max |gradient| {:.2e}",
        model.iterations, model.deviance, model.max_gradient
    ));
    if !model.dropped.is_empty() {
        ps.notes.push(format!("dropped collinear columns: {}", model.dropped.join(", ")));
    }
    report.push(ps);

    let balance = check_balance(
        data,
        &strat,
        &cx.spec.treatment,
        &cx.encoded.propensity_covariates,
        cx.config.propensity.alpha,
    )
    .ctx("propensity", "check_balance")?;
    let mut bs = Section::new(
        "balance",
        "Within-stratum covariate balance",
        vec![
            Column::new("column"),
            Column::num("difference", 4),
            Column::num("standardized", 3),
            Column::num("z", 2),
        ],
    );
    for c in &balance.covariates {
        bs.rows.push(vec![
            Cell::text(&c.name),
            Cell::num(c.difference),
            Cell::num(c.standardized),
            Cell::num(c.z),
        ]);
    }
    bs.notes.push(format!(
        "joint chi-square {:.3} on {} df, p = {:.4}: {} at alpha = {}",
        balance.statistic,
        balance.df,
        balance.p_value,
        if balance.balanced { "balanced" } else { "not balanced" },
        balance.alpha
    ));
    bs.notes.push(format!("stratum sizes: {:?}", strat.sizes()));
    report.push(bs);

    let effect = stratified_effect(data, &cx.spec.outcome, &cx.spec.treatment, &strat)
        .ctx("propensity", "stratified_effect")?;
    report.push(Section::fit("stratified_effect", "Outcome on treatment with stratum fixed effects", &effect));

    let table = benchmark_under_stratification(data, &design, &cx.encoded.propensity_covariates)
        .ctx("propensity", "benchmark_under_stratification")?;
    report.push(Section::benchmark(
        "stratified_benchmark",
        "Treatment confounding under propensity stratification",
        &table,
    ));

    let b = effect.treatment_coef().ctx("propensity", "stratified_effect")?;
    let se = effect.treatment_se().ctx("propensity", "stratified_effect")?;
    let q = t_quantile::<f64>(cx.q_level, effect.df).ctx("sensitivity", "t_quantile")?;
    let zones: Vec<ResolvedZone> = table
        .entries
        .iter()
        .filter(|e| !e.is_degenerate())
        .flat_map(|e| {
            cx.config.r_bounds.iter().map(move |&r| ResolvedZone {
                label: e.name.clone(),
                zone: SensitivityZone::new(e.t_w.abs(), r).with_rank(e.k),
            })
        })
        .collect();
    let rows = sensitivity_rows(b, se, effect.df, q, &zones)?;
    report.push(Section::sensitivity(
        "stratified_sensitivity",
        "Sensitivity intervals for the stratified effect",
        &rows,
    ));
    Ok(())
}

fn verify_sections(cx: &Prepared, report: &mut Report) -> PResult<()> {
    model_fit(cx)?;
    let data = &cx.encoded.data;
    let mut s = Section::new(
        "verify",
        "Refit checks of the closed-form formulas",
        vec![
            Column::new("variable"),
            Column::new("check"),
            Column::num("formula", 8),
            Column::num("refit", 8),
            Column::new("abs_error"),
            Column::new("pass"),
        ],
    );
    let mut groups: Vec<(String, ModelSpec)> = cx
        .spec
        .covariates
        .iter()
        .map(|g| (g.clone(), cx.spec.without_covariates(std::slice::from_ref(g))))
        .collect();
    groups.extend(cx.encoded.candidates.iter().map(|c| (c.clone(), cx.spec.clone())));
    let mut failures = 0;
    let mut skipped = Vec::new();
    for (g, spec) in &groups {
        let d = match decompose_omission(data, spec, g) {
            Ok(d) => d,
            Err(e @ (Error::DegenerateVariance(_) | Error::TreatmentCollinear(_))) => {
                skipped.push(format!("{g} ({e})"));
                continue;
            }
            Err(e) => return Err(e).ctx("core_regression", "decompose_omission"),
        };
        let scn = d.scenario();
        let q = t_quantile::<f64>(cx.q_level, d.df).ctx("sensitivity", "t_quantile")?;
        let se_formula = adjusted_se(d.se_b, &scn, d.df).ctx("sensitivity", "adjusted_se")?;
        let (lo, hi) = interval_at(d.b_hat, d.se_b, d.df, q, &scn).ctx("sensitivity", "interval_at")?;
        let scale = d.b_hat.abs() + d.se_b;
        let checks = [
            ("bias", omitted_bias(d.se_b, &scn), d.b_hat - d.beta_hat, scale),
            ("se", se_formula, d.se_beta, d.se_beta),
            ("identity", d.beta_hat + d.delta_effective * d.b_star, d.b_hat, scale),
            ("lower", lo, d.beta_hat - q * d.se_beta, scale),
            ("upper", hi, d.beta_hat + q * d.se_beta, scale),
        ];
        for (name, formula, refit, sc) in checks {
            let err = (formula - refit).abs();
            let pass = err <= 1e-8 * sc.max(f64::MIN_POSITIVE);
            if !pass {
                failures += 1;
            }
            s.rows.push(vec![
                Cell::text(g),
                Cell::text(name),
                Cell::num(formula),
                Cell::num(refit),
                Cell::num(err),
                Cell::text(if pass { "yes" } else { "no" }),
            ]);
        }
    }
    if !skipped.is_empty() {
        s.notes.push(format!("skipped: {}", skipped.join("; ")));
    }
    s.notes.push(format!("{} checks, {failures} failed", s.rows.len()));
    report.push(s);
    if failures > 0 {
        return Err(PipelineError {
            module: "core_regression",
            operation: "verify",
            source: Error::DegenerateVariance(format!("{failures} refit checks failed")),
        });
    }
    Ok(())
}
