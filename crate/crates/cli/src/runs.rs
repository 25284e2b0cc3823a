//! Executing a plan: simulations, files and metrics.

use std::collections::BTreeMap;

use serde::Serialize;

use arrival_core::abr::{count_clusters, evolve_abr_ensemble, run_truncated, AbrRun, AbrSpec, SurvivalPoint};
use arrival_core::bohm::{run_ensemble, sample_trajectories, DetectionRecord, EnsembleSpec, Screens};
use arrival_core::output::{
    write_events, write_histogram, write_survival, write_survival_detail, write_trajectories, OutputDir,
    RunLabels, Source,
};
use arrival_core::semiclassical::run_semiclassical;
use arrival_core::stats::{
    factorization_test, histogram_visibility, kept_times, ks_two_sample, mean_sd, sliced_conditional_visibility,
    FactorizationTest, JointDistribution, KsResult, DEFAULT_BINS,
};
use arrival_core::{ExperimentConfig, Result};

use crate::plan::{Command, Plan, PlannedRun};

/// Permutation replicates behind the factorization ratio.
const NULL_REPLICATES: usize = 50;
/// Left-time slices averaged in the conditional visibility.
const CONDITIONAL_SLICES: usize = 10;

pub fn execute(plan: &Plan, workers: usize, dir: &mut OutputDir) -> Result<()> {
    let mut metrics = Vec::new();
    for run in &plan.runs {
        log::info!("{:?} {}: {} events", plan.command, run.tag, run.config.n_events);
        let m = match plan.command {
            Command::Run => serde_json::to_value(intrinsic(run, workers, plan.trajectories, dir)?)?,
            Command::Semi => serde_json::to_value(semiclassical(run, workers, dir)?)?,
            Command::Abr => serde_json::to_value(abr(run, workers, plan.trajectories, dir)?)?,
        };
        metrics.push(m);
    }
    dir.write_json("metrics.json", &serde_json::json!({ "command": plan.command, "runs": metrics }))
}

fn labels(cfg: &ExperimentConfig, source: Source) -> RunLabels {
    RunLabels {
        source,
        eta: cfg.eta,
        species: cfg.species.clone(),
        seed: cfg.seed,
    }
}

#[derive(Serialize)]
struct Distribution {
    n_events: usize,
    kept: usize,
    lost: BTreeMap<&'static str, usize>,
    mean_t_left_ms: Option<f64>,
    sd_t_left_ms: Option<f64>,
    mean_t_right_ms: Option<f64>,
    sd_t_right_ms: Option<f64>,
    visibility_left: Option<f64>,
    visibility_right: Option<f64>,
    conditional_visibility_right: Option<f64>,
    factorization: Option<FactorizationTest>,
}

fn distribution(records: &[DetectionRecord], seed: u64) -> (Distribution, Option<JointDistribution>) {
    let (tl, tr) = kept_times(records);
    let mut lost = BTreeMap::new();
    for r in records {
        if let Some(l) = r.lost {
            *lost.entry(l.as_str()).or_insert(0) += 1;
        }
    }
    let joint = JointDistribution::build(records, DEFAULT_BINS).ok();
    let stat = |x: &[f64]| (!x.is_empty()).then(|| mean_sd(x));
    let d = Distribution {
        n_events: records.len(),
        kept: tl.len(),
        lost,
        mean_t_left_ms: stat(&tl).map(|s| s.0),
        sd_t_left_ms: stat(&tl).map(|s| s.1),
        mean_t_right_ms: stat(&tr).map(|s| s.0),
        sd_t_right_ms: stat(&tr).map(|s| s.1),
        visibility_left: joint
            .as_ref()
            .and_then(|j| histogram_visibility(&j.marginal_left_histogram()).ok()),
        visibility_right: joint
            .as_ref()
            .and_then(|j| histogram_visibility(&j.marginal_right_histogram()).ok()),
        conditional_visibility_right: joint
            .as_ref()
            .and_then(|j| sliced_conditional_visibility(j, CONDITIONAL_SLICES).ok()),
        factorization: (tl.len() > 1)
            .then(|| factorization_test(&tl, &tr, DEFAULT_BINS, NULL_REPLICATES, seed).ok())
            .flatten(),
    };
    (d, joint)
}

#[derive(Serialize)]
struct IntrinsicMetrics {
    tag: String,
    collapse: bool,
    #[serde(flatten)]
    distribution: Distribution,
}

fn bohmian(run: &PlannedRun, workers: usize) -> Result<(EnsembleSpec, Vec<DetectionRecord>)> {
    let mut spec = EnsembleSpec::from_config(&run.config, workers)?;
    spec.progress_every = (spec.n_events / 10).max(1);
    let records = run_ensemble(&spec)?;
    Ok((spec, records))
}

fn intrinsic(run: &PlannedRun, workers: usize, trajectories: usize, dir: &mut OutputDir) -> Result<IntrinsicMetrics> {
    let cfg = &run.config;
    let (spec, records) = bohmian(run, workers)?;
    let tag = &run.tag;
    dir.write(&format!("events_{tag}.csv"), |w| write_events(w, &records, &labels(cfg, Source::Bohmian)))?;
    let (distribution, joint) = distribution(&records, cfg.seed);
    if let Some(j) = joint {
        dir.write(&format!("hist_left_{tag}.csv"), |w| write_histogram(w, &j.marginal_left_histogram()))?;
        dir.write(&format!("hist_right_{tag}.csv"), |w| write_histogram(w, &j.marginal_right_histogram()))?;
    }
    if trajectories > 0 {
        let tr = sample_trajectories(&spec, trajectories);
        let ids: Vec<u64> = (0..tr.len() as u64).collect();
        dir.write(&format!("trajectories_{tag}.csv"), |w| write_trajectories(w, &ids, &tr))?;
    }
    Ok(IntrinsicMetrics {
        tag: tag.clone(),
        collapse: cfg.collapse_enabled,
        distribution,
    })
}

#[derive(Serialize)]
struct Comparison {
    tag: String,
    y_left_m: f64,
    ks_left: Option<KsResult>,
    ks_right: Option<KsResult>,
    bohmian: Distribution,
    semiclassical: Distribution,
}

fn semiclassical(run: &PlannedRun, workers: usize, dir: &mut OutputDir) -> Result<Comparison> {
    let cfg = &run.config;
    let (spec, bohm) = bohmian(run, workers)?;
    let screens = Screens::from_setup(&spec.setup);
    let semi = run_semiclassical(&spec.setup, &screens, cfg.n_events, cfg.seed, workers)?;
    let tag = &run.tag;
    dir.write(&format!("events_bohmian_{tag}.csv"), |w| write_events(w, &bohm, &labels(cfg, Source::Bohmian)))?;
    dir.write(&format!("events_semiclassical_{tag}.csv"), |w| {
        write_events(w, &semi, &labels(cfg, Source::Semiclassical))
    })?;
    let (bl, br) = kept_times(&bohm);
    let (sl, sr) = kept_times(&semi);
    Ok(Comparison {
        tag: tag.clone(),
        y_left_m: cfg.y_left,
        ks_left: ks_two_sample(&sl, &bl).ok(),
        ks_right: ks_two_sample(&sr, &br).ok(),
        bohmian: distribution(&bohm, cfg.seed).0,
        semiclassical: distribution(&semi, cfg.seed).0,
    })
}

#[derive(Serialize)]
struct AbrMetrics {
    tag: String,
    /// absent for the run without back-action
    kappa_over_kappa0: Option<f64>,
    kappa0_per_m: f64,
    fall_time_ms: f64,
    survival_at_3_fall_times: Option<SurvivalPoint>,
    outward_violations: usize,
    detections: usize,
    arrival_clusters: usize,
    far_wall_amplitude: f64,
    norm_defect: f64,
    #[serde(flatten)]
    distribution: Distribution,
}

fn abr(run: &PlannedRun, workers: usize, trajectories: usize, dir: &mut OutputDir) -> Result<Vec<AbrMetrics>> {
    let cfg = &run.config;
    let tag = &run.tag;
    let mut out = Vec::new();
    let kappas: Vec<Option<f64>> = if cfg.abr.backaction {
        cfg.abr.kappa.iter().map(|&k| Some(k)).collect()
    } else {
        vec![None]
    };
    for k in kappas {
        let mut spec = AbrSpec::from_config(cfg, k.unwrap_or(1.0), workers)?;
        spec.record_trajectories = trajectories;
        let (result, name, source) = match k {
            Some(k) => {
                log::info!("kappa = {k} kappa0");
                (evolve_abr_ensemble(&spec)?, format!("{tag}_k{k:.3}"), Source::Abr)
            }
            None => (run_truncated(&spec, cfg)?, format!("{tag}_truncated"), Source::Truncated),
        };
        dir.write(&format!("events_{name}.csv"), |w| write_events(w, &result.records, &labels(cfg, source)))?;
        dir.write(&format!("survival_{name}.csv"), |w| write_survival(w, &result.survival, k))?;
        if k.is_some() {
            dir.write(&format!("survival_detail_{name}.csv"), |w| {
                write_survival_detail(w, &result.survival, k)
            })?;
        }
        if !result.trajectories.is_empty() {
            let ids: Vec<u64> = (0..result.trajectories.len() as u64).collect();
            dir.write(&format!("trajectories_{name}.csv"), |w| {
                write_trajectories(w, &ids, &result.trajectories)
            })?;
        }
        out.push(abr_metrics(tag, k, &spec, &result, cfg.seed));
    }
    Ok(out)
}

fn abr_metrics(tag: &str, k: Option<f64>, spec: &AbrSpec, run: &AbrRun, seed: u64) -> AbrMetrics {
    let t3 = 3.0 * spec.fall_time;
    let arrivals: Vec<f64> = run
        .records
        .iter()
        .flat_map(|r| [r.t_left(), r.t_right()])
        .flatten()
        .collect();
    AbrMetrics {
        tag: tag.to_string(),
        kappa_over_kappa0: k,
        kappa0_per_m: spec.kappa0 * 1e6,
        fall_time_ms: spec.fall_time,
        survival_at_3_fall_times: run.survival.iter().find(|p| p.t >= t3 - 1e-9).copied(),
        outward_violations: run.outward_violations,
        detections: run.detections,
        arrival_clusters: count_clusters(&arrivals, spec.fall_time / 20.0, (spec.n_events / 200).max(5)),
        far_wall_amplitude: run.far_amplitude,
        norm_defect: run.norm_defect,
        distribution: distribution(&run.records, seed).0,
    }
}
