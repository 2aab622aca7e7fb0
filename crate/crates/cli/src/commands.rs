//! One function per subcommand. Each returns the JSON report; plot data is
//! written as CSV next to it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gbayes::bayesianity::DiagnosticConfig;
use gbayes::evidence::{bayes_factor_shift_demo, WARNING};
use gbayes::quasiposterior::{convention_offset_check, el_at, et_at, MeanMoment, MeanVarianceMoment, MomentModel};
use gbayes::variational::{maximize_linear_utility, SolverOptions};
use gbayes::{
    constrained_gibbs_update, delta_lpd, extract_likelihood, gibbs_update, info_matching_eta, objective,
    partition_function_curve, prequential_score, product_additivity_gap, safebayes_select, shifted_pair_report,
    solve_penalized, total_variation, vnm_optimal_rule, Distribution, DivergenceSpec, EvidenceRecord, ParamGrid,
    ScoringRule, Temperature, Verdict,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, MethodSpec, MomentSpec, RuleSpec};

/// Everything a subcommand needs besides the config itself.
pub struct RunContext {
    pub config_dir: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl RunContext {
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.out.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, name: &str, value: &Value) -> Result<()> {
        let path = self.out.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn atom_label(grid: &ParamGrid<f64>, i: usize) -> String {
    let a = grid.atom(i);
    if a.len() == 1 {
        num(a[0])
    } else {
        a.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
    }
}

fn posterior_rows(post: &Distribution<f64>) -> Vec<Vec<String>> {
    (0..post.len()).map(|i| vec![atom_label(post.grid(), i), num(post.weight(i))]).collect()
}

fn divergences(names: Option<&Vec<String>>) -> Result<Vec<DivergenceSpec<f64>>> {
    match names {
        None => Ok(DivergenceSpec::catalog()),
        Some(v) => v.iter().map(|n| Ok(DivergenceSpec::by_name(n)?)).collect(),
    }
}

fn base(cfg: &ExperimentConfig, command: &str) -> Value {
    json!({ "command": command, "name": cfg.name })
}

/// Per-atom losses from `losses`, or from `loss` + `data`.
fn cumulative(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(Vec<f64>, Vec<usize>)> {
    if let Some(l) = &cfg.losses {
        if cfg.loss.is_some() {
            bail!("give either `losses` or `loss` with `data`, not both");
        }
        return Ok((l.clone(), vec![]));
    }
    let grid = cfg.grid()?;
    let data = cfg.data(&ctx.config_dir, ctx.seed)?;
    let m = cfg.loss()?.cumulative(&grid, &data)?;
    let mut flagged = m.infeasible_atoms;
    flagged.extend(m.unconverged_atoms);
    flagged.sort_unstable();
    Ok((m.losses, flagged))
}

pub fn update(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let prior = cfg.prior()?;
    let eta = cfg.eta()?;
    let (losses, infeasible) = cumulative(cfg, ctx)?;
    let r = if infeasible.is_empty() {
        gibbs_update(&prior, &losses, eta)?
    } else {
        constrained_gibbs_update(&prior, &losses, eta)?
    };
    let record = EvidenceRecord::from_result(cfg.name.clone().unwrap_or_else(|| "model".into()), eta, &r, 0.0);
    ctx.write_csv("posterior.csv", &["theta", "weight"], &posterior_rows(&r.posterior))?;
    let mut v = base(cfg, "update");
    v["eta"] = json!(eta.value());
    v["losses"] = json!(losses);
    v["infeasible_atoms"] = json!(infeasible);
    v["posterior"] = json!(r.posterior.weights());
    v["log_Z"] = json!(r.log_normalizer);
    v["anchored_log_Z"] = json!(r.anchored_log_normalizer);
    v["evidence"] = serde_json::to_value(&record)?;
    v["warning"] = json!(WARNING);
    Ok(v)
}

pub fn diagnose(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let spec = cfg.diagnose.as_ref().ok_or_else(|| anyhow!("config is missing `diagnose`"))?;
    let grid = cfg.grid()?;
    let eta = cfg.eta()?;
    let loss = cfg.loss()?.per_datum()?;
    let xs = spec.sample_grid.build()?;
    let mut dc = DiagnosticConfig::default();
    if let Some(t) = spec.rel_tol {
        dc.rel_tol = t;
    }
    if let Some(m) = spec.error_margin {
        dc.error_margin = m;
    }
    let rep = partition_function_curve(loss.as_ref(), eta, &grid, &xs, dc)?;
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| vec![atom_label(&grid, i), num(rep.a_values[i]), num(rep.log_a_values[i])])
        .collect();
    ctx.write_csv("partition_curve.csv", &["theta", "A", "log_A"], &rows)?;
    let mut v = base(cfg, "diagnose");
    v["loss"] = json!(loss.name());
    v["eta"] = json!(eta.value());
    v["report"] = serde_json::to_value(&rep)?;
    v["likelihood"] = match extract_likelihood(loss.as_ref(), eta, &grid, &xs, dc) {
        Ok(t) => json!({ "extracted": true, "normalizer": t.normalizer }),
        Err(e) => json!({ "extracted": false, "reason": e.to_string() }),
    };
    Ok(v)
}

#[derive(Serialize)]
struct SolveSummary {
    divergence: String,
    solution: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    final_step_norm: f64,
    kkt_residual: f64,
    /// Total variation from the closed-form Gibbs posterior.
    tv_to_gibbs: f64,
    /// `objective + logZ / η`; zero for KL at the optimum.
    objective_minus_gibbs_value: f64,
}

pub fn variational(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let spec = cfg.variational.clone().unwrap_or_default();
    let prior = cfg.prior()?;
    let eta = cfg.eta()?;
    let (losses, _) = cumulative(cfg, ctx)?;
    let gibbs = gibbs_update(&prior, &losses, eta)?;
    let mut opts = SolverOptions::default();
    if let Some(t) = spec.tol {
        opts.tol = t;
    }
    if let Some(m) = spec.max_iter {
        opts.max_iter = m;
    }
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for div in divergences(spec.divergences.as_ref())? {
        let rep = solve_penalized(&prior, &losses, eta, &div, opts)?;
        for i in 0..prior.len() {
            rows.push(vec![div.name().to_string(), atom_label(prior.grid(), i), num(rep.solution.weight(i))]);
        }
        out.push(SolveSummary {
            divergence: div.name().to_string(),
            solution: rep.solution.weights(),
            objective: rep.objective,
            iterations: rep.iterations,
            converged: rep.converged,
            final_step_norm: rep.final_step_norm,
            kkt_residual: rep.kkt_residual,
            tv_to_gibbs: total_variation(&rep.solution, &gibbs.posterior)?,
            objective_minus_gibbs_value: rep.objective + gibbs.log_normalizer / eta.value(),
        });
    }
    ctx.write_csv("solutions.csv", &["divergence", "theta", "weight"], &rows)?;
    let mut v = base(cfg, "variational");
    v["eta"] = json!(eta.value());
    v["gibbs_posterior"] = json!(gibbs.posterior.weights());
    v["gibbs_value"] = json!(-gibbs.log_normalizer / eta.value());
    v["prior_objective_kl"] = json!(objective(&prior, &losses, eta, &DivergenceSpec::kl(), &prior)?);
    v["solves"] = serde_json::to_value(out)?;
    Ok(v)
}

pub fn additivity(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let spec = cfg.additivity.clone().unwrap_or_default();
    let canonical = vec![0.75, 0.25];
    let uniform = |n: usize| vec![1.0 / n as f64; n];
    let q1 = spec.q1.clone().unwrap_or_else(|| canonical.clone());
    let q2 = spec.q2.clone().unwrap_or_else(|| canonical.clone());
    let pi1 = spec.pi1.clone().unwrap_or_else(|| uniform(q1.len()));
    let pi2 = spec.pi2.clone().unwrap_or_else(|| uniform(q2.len()));
    let line = |n: usize| -> Result<_> {
        Ok(std::sync::Arc::new(ParamGrid::from_scalars(&(0..n).map(|i| i as f64).collect::<Vec<_>>())?))
    };
    let (g1, g2) = (line(q1.len())?, line(q2.len())?);
    let (q1d, p1d) = (Distribution::from_weights(g1.clone(), &q1)?, Distribution::from_weights(g1, &pi1)?);
    let (q2d, p2d) = (Distribution::from_weights(g2.clone(), &q2)?, Distribution::from_weights(g2, &pi2)?);
    let mut table = Vec::new();
    let mut rows = Vec::new();
    for div in divergences(spec.divergences.as_ref())? {
        let gap = product_additivity_gap(&div, &q1d, &p1d, &q2d, &p2d)?;
        let additive = gap.abs() <= 1e-12;
        rows.push(vec![div.name().to_string(), num(gap), additive.to_string()]);
        table.push(json!({ "divergence": div.name(), "gap": gap, "additive": additive }));
    }
    ctx.write_csv("additivity.csv", &["divergence", "gap", "additive"], &rows)?;
    let mut v = base(cfg, "additivity");
    v["instance"] = json!({ "q1": q1, "pi1": pi1, "q2": q2, "pi2": pi2 });
    v["gaps"] = json!(table);
    Ok(v)
}

pub fn evidence_demo(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let spec = cfg.evidence.as_ref().ok_or_else(|| anyhow!("config is missing `evidence`"))?;
    let prior = cfg.prior()?;
    let eta = cfg.eta()?;
    let (losses, _) = cumulative(cfg, ctx)?;
    let pair = shifted_pair_report(&prior, &losses, eta, spec.shift)?;
    let mut rows = Vec::new();
    for (label, r) in [("original", &pair.original), ("shifted", &pair.shifted)] {
        rows.push(vec![label.to_string(), num(r.shift_applied), num(r.log_z), num(r.anchored_log_z)]);
    }
    let mut v = base(cfg, "evidence-demo");
    v["warning"] = json!(WARNING);
    v["shifted_pair"] = serde_json::to_value(&pair)?;
    if let Some(rival) = &spec.rival {
        let g0 = rival.grid.build()?;
        let p0 = rival.prior.build(g0)?;
        let demo = bayes_factor_shift_demo(&prior, &losses, &p0, &rival.losses, eta, spec.shift, rival.shift)?;
        for r in &demo.records {
            rows.push(vec![r.model_id.clone(), num(r.shift_applied), num(r.log_z), num(r.anchored_log_z)]);
        }
        v["bayes_factor"] = serde_json::to_value(&demo)?;
    }
    ctx.write_csv("evidence.csv", &["record", "shift", "log_Z", "anchored_log_Z"], &rows)?;
    Ok(v)
}

pub fn score(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let spec = cfg.score.as_ref().ok_or_else(|| anyhow!("config is missing `score`"))?;
    if spec.models.is_empty() {
        bail!("`score.models` is empty");
    }
    let eta = cfg.eta()?;
    let data = cfg.data(&ctx.config_dir, ctx.seed)?;
    let mut models = Vec::new();
    let mut comparisons = Vec::new();
    for &rule in &spec.rules {
        let r = match rule {
            RuleSpec::Log => ScoringRule::Log,
            RuleSpec::Crps => ScoringRule::Crps,
        };
        let tag = match rule {
            RuleSpec::Log => "log",
            RuleSpec::Crps => "crps",
        };
        let mut traces = Vec::new();
        for m in &spec.models {
            let grid = m.grid.build()?;
            let prior = m.prior.build(grid.clone())?;
            let family = m.family.build(&grid)?;
            let loss = m.loss.per_datum()?;
            let trace = prequential_score(&prior, loss.as_ref(), eta, &family, &data, r)
                .with_context(|| format!("model {}", m.id))?;
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            fs::write(ctx.out.join(format!("trace_{}_{tag}.csv", m.id)), buf)?;
            models.push(json!({
                "model_id": m.id,
                "rule": tag,
                "cumulative": trace.cumulative,
                "per_step": trace.per_step,
                "zero_density_steps": trace.zero_density_steps,
            }));
            traces.push((m.id.clone(), trace));
        }
        for (id, t) in &traces[1..] {
            comparisons.push(json!({
                "rule": tag,
                "model": id,
                "reference": traces[0].0,
                "delta": delta_lpd(t, &traces[0].1)?,
                "higher_is_better": rule == RuleSpec::Log,
            }));
        }
    }
    let mut v = base(cfg, "score");
    v["eta"] = json!(eta.value());
    v["n"] = json!(data.len());
    v["traces"] = json!(models);
    v["comparisons"] = json!(comparisons);
    Ok(v)
}

pub fn calibrate(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let spec = cfg.calibrate.as_ref().ok_or_else(|| anyhow!("config is missing `calibrate`"))?;
    let data = cfg.data(&ctx.config_dir, ctx.seed)?;
    let loss = cfg.loss()?.per_datum()?;
    let mut v = base(cfg, "calibrate");
    v["loss"] = json!(loss.name());
    match spec.method {
        MethodSpec::InfoMatching => {
            let init = spec.init.clone().unwrap_or_else(|| vec![0.0]);
            let rep = info_matching_eta(loss.as_ref(), &data, &init)?;
            v["report"] = serde_json::to_value(&rep)?;
        }
        MethodSpec::Safebayes => {
            let prior = cfg.prior()?;
            let grid: Vec<Temperature<f64>> = spec
                .eta_grid
                .clone()
                .unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0])
                .into_iter()
                .map(Temperature::new)
                .collect::<gbayes::Result<_>>()?;
            let rep = safebayes_select(&prior, loss.as_ref(), &data, &grid)?;
            let rows: Vec<Vec<String>> = rep.criteria.iter().map(|(e, c)| vec![num(e.value()), num(*c)]).collect();
            ctx.write_csv("safebayes.csv", &["eta", "criterion"], &rows)?;
            v["report"] = serde_json::to_value(&rep)?;
        }
    }
    Ok(v)
}

fn moment_model(m: MomentSpec) -> Box<dyn MomentModel<f64>> {
    match m {
        MomentSpec::Mean => Box::new(MeanMoment),
        MomentSpec::MeanVariance => Box::new(MeanVarianceMoment),
    }
}

pub fn quasi(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let spec = cfg.quasi.clone().unwrap_or_default();
    let data = cfg.data(&ctx.config_dir, ctx.seed)?;
    let prior = cfg.prior()?;
    let eta = cfg.eta()?;
    let grid = prior.grid().clone();
    let moments = moment_model(spec.moment);
    let mut atoms = Vec::new();
    let mut el_loss = Vec::new();
    let mut rows = Vec::new();
    for i in 0..grid.len() {
        let theta = grid.atom(i);
        let el = el_at(moments.as_ref(), &data, theta).ok().filter(|s| s.converged);
        let et = et_at(moments.as_ref(), &data, theta).ok().filter(|s| s.converged);
        let l = el.as_ref().map_or(f64::INFINITY, |s| -spec.scale * s.criterion);
        el_loss.push(l);
        rows.push(vec![
            atom_label(&grid, i),
            el.as_ref().map_or("".into(), |s| num(s.criterion)),
            et.as_ref().map_or("".into(), |s| num(s.criterion)),
        ]);
        atoms.push(json!({
            "theta": theta,
            "el": el.map(|s| json!({ "log_R": s.criterion, "lambda": s.multiplier, "weights": s.weights })),
            "et": et.map(|s| json!({ "criterion": s.criterion, "tau": s.multiplier, "weights": s.weights })),
        }));
    }
    let post = constrained_gibbs_update(&prior, &el_loss, eta)?;
    let conventions = convention_offset_check(&data, moments.as_ref(), &prior, eta)?;
    for (row, w) in rows.iter_mut().zip(post.posterior.weights()) {
        row.push(num(w));
    }
    ctx.write_csv("quasi.csv", &["theta", "el_log_R", "et_criterion", "posterior"], &rows)?;
    let mut v = base(cfg, "quasi");
    v["eta"] = json!(eta.value());
    v["n"] = json!(data.len());
    v["atoms"] = json!(atoms);
    v["el_posterior"] = json!(post.posterior.weights());
    v["infeasible_atoms"] = json!((0..grid.len()).filter(|&i| el_loss[i].is_infinite()).collect::<Vec<_>>());
    v["conventions"] = serde_json::to_value(&conventions)?;
    v["warning"] = json!(WARNING);
    Ok(v)
}

pub fn vnm(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let spec = cfg.vnm.as_ref().ok_or_else(|| anyhow!("config is missing `vnm`"))?;
    let grid = cfg.grid()?;
    let rule = vnm_optimal_rule(grid.clone(), &spec.utility)?;
    let start = cfg.prior()?;
    let ascent = maximize_linear_utility(&start, &spec.utility, 1e-12, 10_000)?;
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| vec![atom_label(&grid, i), num(spec.utility[i]), num(ascent.solution.weight(i))])
        .collect();
    ctx.write_csv("vnm.csv", &["theta", "utility", "ascent_weight"], &rows)?;
    let mut v = base(cfg, "vnm");
    v["argmax"] = json!(rule.argmax);
    v["rule"] = json!(rule.rule.weights());
    v["value"] = json!(rule.value);
    v["ascent"] = json!({
        "solution": ascent.solution.weights(),
        "value": ascent.objective,
        "iterations": ascent.iterations,
        "converged": ascent.converged,
        "duality_gap": ascent.kkt_residual,
    });
    Ok(v)
}

/// Loss, then the separability check, then a calibrated update.
pub fn recipe(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Value> {
    let loss = cfg.loss()?.per_datum()?;
    let grid = cfg.grid()?;
    let prior = cfg.prior()?;
    let data = cfg.data(&ctx.config_dir, ctx.seed)?;
    let mut v = base(cfg, "recipe");
    v["loss"] = json!(loss.name());
    let check = match &cfg.diagnose {
        Some(spec) => {
            let xs = spec.sample_grid.build()?;
            let mut dc = DiagnosticConfig::default();
            if let Some(t) = spec.rel_tol {
                dc.rel_tol = t;
            }
            if let Some(m) = spec.error_margin {
                dc.error_margin = m;
            }
            let eta0 = cfg.eta.map(Temperature::new).transpose()?.unwrap_or(Temperature::new(1.0)?);
            let rep = partition_function_curve(loss.as_ref(), eta0, &grid, &xs, dc)?;
            json!({ "eta": eta0.value(), "verdict": rep.verdict, "max_rel_variation": rep.max_rel_variation, "caveat": rep.caveat })
        }
        None => json!({ "verdict": Verdict::Inconclusive, "reason": "no `diagnose.sample_grid` supplied" }),
    };
    v["separability"] = check;
    let init = cfg.calibrate.as_ref().and_then(|c| c.init.clone()).unwrap_or_else(|| vec![0.0; grid.dim()]);
    let cal = info_matching_eta(loss.as_ref(), &data, &init)?;
    let eta = cal.eta_hat;
    let losses = gbayes::loss::cumulative_losses(loss.as_ref(), &grid, &data)?;
    let post = gibbs_update(&prior, &losses, eta)?;
    ctx.write_csv("posterior.csv", &["theta", "weight"], &posterior_rows(&post.posterior))?;
    v["calibration"] = serde_json::to_value(&cal)?;
    v["posterior"] = json!(post.posterior.weights());
    v["log_Z"] = json!(post.log_normalizer);
    v["anchored_log_Z"] = json!(post.anchored_log_normalizer);
    v["warning"] = json!(WARNING);
    Ok(v)
}

pub fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
