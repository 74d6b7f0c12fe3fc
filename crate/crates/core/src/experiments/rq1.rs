//! Closed-loop behavioral comparison against the pseudo-real reference, and
//! the ground-truth perception ablation.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::report::{fmt, mean_std, Report, Trace};
use super::{Campaign, MIN_REFERENCE_SUCCESSES};
use crate::ads::{AdsChoice, PerceptionMode};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, mann_whitney_u, run_path};
use crate::mixing::Modality;
use crate::plant::GapProfile;
use crate::runtime::{run_closed_loop, RunLog};
use crate::world::Scenario;

/// Two failures count as the same failure when they share the outcome and
/// end within this distance, meters.
pub const AGREEMENT_RADIUS: f64 = 0.5;

fn end_point(log: &RunLog, scenario: &Scenario) -> [f64; 2] {
    log.ticks.last().map_or(scenario.start.xy(), |r| r.real.xy())
}

/// Whether `log` reproduces the reference's outcome: both succeed, or both
/// fail the same way at roughly the same place.
pub fn failure_agreement(log: &RunLog, reference: &RunLog, scenario: &Scenario) -> bool {
    match (log.outcome.is_failure(), reference.outcome.is_failure()) {
        (false, false) => true,
        (true, true) => {
            let (a, b) = (end_point(log, scenario), end_point(reference, scenario));
            log.outcome == reference.outcome && (a[0] - b[0]).hypot(a[1] - b[1]) <= AGREEMENT_RADIUS
        }
        _ => false,
    }
}

fn run_one(campaign: &Campaign, scenario: &Scenario, modality: Modality, ads: &AdsChoice, gap: &GapProfile, seed: u64) -> Result<RunLog> {
    run_closed_loop(scenario, modality, ads, gap, seed, campaign.max_duration, &campaign.run).inspect_err(|e| {
        log::error!("{} {} {} seed {seed}: {e}", scenario.name, modality, ads.label());
    })
}

/// Reference runs on the pseudo-real modality: seeds in order until at
/// least `repetitions` runs of which four did not fail, or until the seeds
/// run out. Runs are launched in parallel batches; the stopping rule is
/// applied in seed order, so the result does not depend on batch size.
fn reference_runs(campaign: &Campaign, scenario: &Scenario, ads: &AdsChoice, gap: &GapProfile, errors: &mut usize) -> Result<Vec<(u64, RunLog)>> {
    let mut out: Vec<(u64, RunLog)> = Vec::new();
    let mut next = 0;
    let done = |out: &[(u64, RunLog)]| {
        out.len() >= campaign.repetitions && out.iter().filter(|r| !r.1.outcome.is_failure()).count() >= MIN_REFERENCE_SUCCESSES
    };
    while next < campaign.seeds.len() && !done(&out) {
        let batch = &campaign.seeds[next..(next + rayon::current_num_threads().max(1)).min(campaign.seeds.len())];
        let logs: Vec<Result<RunLog>> = batch.par_iter().map(|&s| run_one(campaign, scenario, Modality::RW, ads, gap, s)).collect();
        for (&seed, log) in batch.iter().zip(logs) {
            next += 1;
            match log {
                Ok(l) => out.push((seed, l)),
                Err(_) => *errors += 1,
            }
            if done(&out) {
                break;
            }
        }
    }
    if out.iter().all(|r| r.1.outcome.is_failure()) {
        return Err(Error::Campaign(format!(
            "no successful reference run on {} with {}",
            scenario.name,
            ads.label()
        )));
    }
    Ok(out)
}

const RQ1_COLUMNS: [&str; 15] = [
    "scenario", "ads", "modality", "seed", "outcome", "frechet_to_rw", "completion_pct",
    "completion_delta", "crashes", "out_of_road", "failure", "agrees_with_rw", "end_x", "end_y", "duration",
];

fn push_run(report: &mut Report, scenario: &Scenario, ads: &AdsChoice, modality: Modality, seed: u64, log: &Result<RunLog>, reference: &RunLog) -> Result<()> {
    let head = vec![scenario.name.clone(), ads.label(), modality.as_str().to_string(), seed.to_string()];
    let tail = match log {
        Ok(l) => {
            let m = evaluate_run(l, reference, scenario)?;
            let end = end_point(l, scenario);
            let mut trace = Trace::new(format!("{} {} {} seed {seed}", scenario.name, ads.label(), modality), modality, run_path(l, scenario));
            trace.failure = l.outcome.is_failure().then_some(end);
            report.traces.push(trace);
            vec![
                l.outcome.to_string(),
                fmt(m.frechet_to_reference),
                fmt(m.completion_pct),
                fmt(m.completion_delta_vs_reference),
                m.crashes.to_string(),
                m.out_of_road.to_string(),
                u8::from(m.failure).to_string(),
                u8::from(failure_agreement(l, reference, scenario)).to_string(),
                fmt(end[0]),
                fmt(end[1]),
                fmt(l.ticks.last().map_or(0.0, |r| r.t)),
            ]
        }
        Err(e) => {
            let mut v = vec![format!("error: {e}")];
            v.extend(std::iter::repeat_n(String::new(), 10));
            v
        }
    };
    report.row(head.into_iter().chain(tail).collect());
    Ok(())
}

/// Table-style aggregate per modality: trajectory and completion deltas,
/// lane departures, crashes, failure rate and failure agreement.
fn summarize(report: &mut Report, label: &str, order: &[Modality]) {
    let col = |n: &str| report.column(n);
    let (cm, cf, cc, co, cr, cx, ca) = (col("modality"), col("frechet_to_rw"), col("completion_delta"), col("out_of_road"), col("crashes"), col("failure"), col("agrees_with_rw"));
    let (cs, cd) = (col("scenario"), col("ads"));
    let mut frechets: BTreeMap<Modality, Vec<f64>> = BTreeMap::new();
    let mut lines = Vec::new();
    for &m in order {
        let rows: Vec<&Vec<String>> = report.rows.iter().filter(|r| r[cm] == m.as_str() && format!("{} {}", r[cs], r[cd]) == label).collect();
        let num = |c: usize| -> Vec<f64> { rows.iter().filter_map(|r| r[c].parse().ok()).collect() };
        let f = num(cf);
        let (fm, fs) = mean_std(&f);
        let (dm, ds) = mean_std(&num(cc));
        let sum = |c: usize| num(c).iter().sum::<f64>();
        lines.push(format!(
            "{label} {}: frechet {} ± {} m, completion delta {} ± {} pp, out_of_road {}, crashes {}, failure rate {}/{}, agreement {}/{}",
            m.as_str(), fmt(fm), fmt(fs), fmt(dm), fmt(ds), sum(co), sum(cr), sum(cx), rows.len(), sum(ca), rows.len()
        ));
        frechets.insert(m, f);
    }
    if let (Some(mr), Some(sil)) = (frechets.get(&Modality::MR), frechets.get(&Modality::SIL)) {
        if let Ok(t) = mann_whitney_u(mr, sil) {
            lines.push(format!("{label} frechet MR vs SIL: U = {}, p = {}", fmt(t.u), fmt(t.p_two_sided)));
        }
    }
    report.summary.extend(lines);
}

/// Reference runs on the pseudo-real modality, then every other selected
/// modality over exactly the reference seeds, scored against the
/// same-seed reference.
pub fn run_rq1(campaign: &Campaign, gap: &GapProfile) -> Result<Vec<Report>> {
    let mut reports = Vec::new();
    let others: Vec<Modality> = campaign.modalities.iter().copied().filter(|m| *m != Modality::RW).collect();
    let mut order = vec![Modality::RW];
    order.extend(&others);
    for scenario in campaign.scenarios()? {
        let mut report = Report::new(&format!("rq1_{}", scenario.name), &RQ1_COLUMNS);
        report.obstacles = scenario.obstacles.clone();
        let mut errors = 0;
        for ads in campaign.ads_choices()? {
            let reference = reference_runs(campaign, &scenario, &ads, gap, &mut errors)?;
            let jobs: Vec<(Modality, u64)> = others.iter().flat_map(|&m| reference.iter().map(move |r| (m, r.0))).collect();
            let results: Vec<Result<RunLog>> = jobs.par_iter().map(|&(m, s)| run_one(campaign, &scenario, m, &ads, gap, s)).collect();
            for (seed, log) in &reference {
                push_run(&mut report, &scenario, &ads, Modality::RW, *seed, &Ok(log.clone()), log)?;
            }
            for (&(m, seed), log) in jobs.iter().zip(&results) {
                errors += usize::from(log.is_err());
                let reference_log = &reference.iter().find(|r| r.0 == seed).expect("job seeds come from the reference").1;
                push_run(&mut report, &scenario, &ads, m, seed, log, reference_log)?;
            }
            summarize(&mut report, &format!("{} {}", scenario.name, ads.label()), &order);
        }
        report.run_errors = errors;
        reports.push(report);
    }
    Ok(reports)
}

/// Perception and ground-truth modes of the modular stack, each in SIL and
/// on the pseudo-real modality, over the first `repetitions` seeds.
pub fn run_ablation(campaign: &Campaign, gap: &GapProfile) -> Result<Vec<Report>> {
    let seeds = &campaign.seeds[..campaign.repetitions];
    let modes = [PerceptionMode::Perception, PerceptionMode::GroundTruth];
    let cells: Vec<(PerceptionMode, Modality)> = modes.iter().flat_map(|&p| [(p, Modality::SIL), (p, Modality::RW)]).collect();
    let mut reports = Vec::new();
    for scenario in campaign.scenarios()? {
        let jobs: Vec<(PerceptionMode, Modality, u64)> = cells.iter().flat_map(|&(p, m)| seeds.iter().map(move |&s| (p, m, s))).collect();
        let results: Vec<Result<RunLog>> = jobs
            .par_iter()
            .map(|&(p, m, s)| run_one(campaign, &scenario, m, &AdsChoice::Modular { mode: p }, gap, s))
            .collect();
        let mut report = Report::new(
            &format!("ablation_{}", scenario.name),
            &["scenario", "mode", "modality", "seed", "outcome", "failure", "completion_pct", "frechet_to_rw"],
        );
        report.obstacles = scenario.obstacles.clone();
        let mut failures: BTreeMap<(String, Modality), usize> = BTreeMap::new();
        for (&(p, m, s), log) in jobs.iter().zip(&results) {
            let mode = AdsChoice::Modular { mode: p }.label();
            let reference = jobs.iter().zip(&results).find(|(j, _)| j.0 == p && j.1 == Modality::RW && j.2 == s).and_then(|(_, r)| r.as_ref().ok());
            let row = match log {
                Ok(l) => {
                    let metrics = reference.map(|r| evaluate_run(l, r, &scenario)).transpose()?;
                    *failures.entry((mode.clone(), m)).or_default() += usize::from(l.outcome.is_failure());
                    let mut trace = Trace::new(format!("{} {mode} {m} seed {s}", scenario.name), m, run_path(l, &scenario));
                    trace.failure = l.outcome.is_failure().then(|| end_point(l, &scenario));
                    report.traces.push(trace);
                    vec![
                        l.outcome.to_string(),
                        u8::from(l.outcome.is_failure()).to_string(),
                        fmt(crate::metrics::completion_pct(l, &scenario)),
                        metrics.map_or(String::new(), |x| fmt(x.frechet_to_reference)),
                    ]
                }
                Err(e) => {
                    report.run_errors += 1;
                    vec![format!("error: {e}"), String::new(), String::new(), String::new()]
                }
            };
            let head = vec![scenario.name.clone(), mode, m.as_str().to_string(), s.to_string()];
            report.row(head.into_iter().chain(row).collect());
        }
        let count = |mode: &str, m: Modality| failures.get(&(mode.to_string(), m)).copied().unwrap_or(0);
        for mode in ["modular", "modular_gt"] {
            report.summary.push(format!("{} {mode}: SIL failures {}, RW failures {}", scenario.name, count(mode, Modality::SIL), count(mode, Modality::RW)));
        }
        let isolated = count("modular", Modality::SIL) != count("modular", Modality::RW)
            && count("modular_gt", Modality::SIL) == count("modular_gt", Modality::RW);
        report.summary.push(format!("{} perception isolated as failure source: {isolated}", scenario.name));
        reports.push(report);
    }
    Ok(reports)
}
