//! Success/reward/turn metrics, per-worker statistics, the group error
//! matrix and transcript rendering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Actor, EpisodeTrace, Policy, TurnRecord};
use crate::datagen::Goal;
use crate::domain::{GroupId, Ontology, SymptomStatus};
use crate::error::{Error, Result};
use crate::simulator::{EnvAction, EpisodeConfig, EpisodeStatus, SubtaskStatus};

/// Metrics of one evaluation run. Classification baselines only carry a
/// success rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Undiscounted sum of raw extrinsic rewards, averaged over episodes.
    pub average_reward: Option<f64>,
    /// Same with turn `t` weighted by `gamma^t`.
    pub average_discounted_reward: Option<f64>,
    pub average_turns: Option<f64>,
}

impl EvalReport {
    pub fn from_traces(traces: &[EpisodeTrace], gamma: f64) -> Self {
        let n = traces.len();
        let successes = traces.iter().filter(|t| t.is_success()).count();
        let mean = |f: &dyn Fn(&EpisodeTrace) -> f64| {
            if n == 0 {
                0.0
            } else {
                traces.iter().map(f).sum::<f64>() / n as f64
            }
        };
        EvalReport {
            episodes: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            average_reward: Some(mean(&|t| t.total_reward())),
            average_discounted_reward: Some(mean(&|t| t.discounted_reward(gamma))),
            average_turns: Some(mean(&|t| t.num_turns() as f64)),
        }
    }

    pub fn classification(hits: usize, total: usize) -> Self {
        EvalReport {
            episodes: total,
            successes: hits,
            success_rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            average_reward: None,
            average_discounted_reward: None,
            average_turns: None,
        }
    }
}

/// Greedy episodes, one per goal, in goal order.
pub fn run_traces(policy: &Policy, goals: &[Goal], config: &EpisodeConfig, mask_known: bool, jobs: usize) -> Result<Vec<EpisodeTrace>> {
    if jobs <= 1 {
        return goals.iter().map(|g| policy.run_greedy(g, config, mask_known)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| goals.par_iter().map(|g| policy.run_greedy(g, config, mask_known)).collect())
}

pub fn evaluate(policy: &Policy, goals: &[Goal], config: &EpisodeConfig, mask_known: bool, jobs: usize) -> Result<(EvalReport, Vec<EpisodeTrace>)> {
    let traces = run_traces(policy, goals, config, mask_known, jobs)?;
    Ok((EvalReport::from_traces(&traces, config.master_gamma), traces))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, se: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanSe { mean, se: (var / n as f64).sqrt() }
}

/// One row of the overall-performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub runs: usize,
    pub success_rate: MeanSe,
    pub average_reward: Option<MeanSe>,
    pub average_discounted_reward: Option<MeanSe>,
    pub average_turns: Option<MeanSe>,
    pub reports: Vec<EvalReport>,
}

impl Summary {
    pub fn new(model: impl Into<String>, reports: Vec<EvalReport>) -> Self {
        let pick = |f: fn(&EvalReport) -> Option<f64>| -> Option<MeanSe> {
            let vals: Option<Vec<f64>> = reports.iter().map(f).collect();
            vals.filter(|v| !v.is_empty()).map(|v| mean_se(&v))
        };
        Summary {
            model: model.into(),
            runs: reports.len(),
            success_rate: mean_se(&reports.iter().map(|r| r.success_rate).collect::<Vec<_>>()),
            average_reward: pick(|r| r.average_reward),
            average_discounted_reward: pick(|r| r.average_discounted_reward),
            average_turns: pick(|r| r.average_turns),
            reports,
        }
    }
}

fn fmt_mean_se(v: Option<MeanSe>) -> String {
    match v {
        Some(m) => format!("{:.3}±{:.3}", m.mean, m.se),
        None => "-".to_string(),
    }
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.clone()));
        out.push('\n');
    }
    out
}

pub fn render_summaries(rows: &[Summary]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|s| {
            vec![
                s.model.clone(),
                fmt_mean_se(Some(s.success_rate)),
                fmt_mean_se(s.average_reward),
                fmt_mean_se(s.average_turns),
                fmt_mean_se(s.average_discounted_reward),
                s.runs.to_string(),
            ]
        })
        .collect();
    render_table(&["Model", "Success", "Reward", "Turn", "Disc. reward", "Runs"], &body)
}

pub fn summaries_csv(rows: &[Summary]) -> String {
    let mut out = String::from("model,runs,success,success_se,reward,reward_se,turns,turns_se,discounted_reward,discounted_reward_se\n");
    let cell = |v: Option<MeanSe>| match v {
        Some(m) => format!("{},{}", m.mean, m.se),
        None => ",".to_string(),
    };
    for s in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.model,
            s.runs,
            cell(Some(s.success_rate)),
            cell(s.average_reward),
            cell(s.average_turns),
            cell(s.average_discounted_reward)
        ));
    }
    out
}

/// Symptom requests answered True on an implicit symptom, over all requests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCount {
    pub hits: usize,
    pub requests: usize,
}

impl MatchCount {
    pub fn rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.hits as f64 / self.requests as f64
        }
    }
}

pub fn match_rate(traces: &[EpisodeTrace]) -> MatchCount {
    let mut m = MatchCount::default();
    for t in traces.iter().flat_map(|t| &t.turns) {
        if matches!(t.action, EnvAction::Request(_)) {
            m.requests += 1;
            m.hits += t.implicit_hit as usize;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerReport {
    pub group: String,
    pub subtasks: usize,
    pub success_rate: f64,
    pub average_intrinsic_reward: f64,
    pub match_rate: f64,
    pub requests: usize,
    pub hits: usize,
    pub activations_per_episode: f64,
}

pub fn worker_reports(traces: &[EpisodeTrace], ontology: &Ontology) -> Vec<WorkerReport> {
    let h = ontology.num_groups();
    let mut subtasks = vec![0usize; h];
    let mut successes = vec![0usize; h];
    let mut intrinsic = vec![0.0; h];
    let mut matches = vec![MatchCount::default(); h];
    for trace in traces {
        for s in &trace.subtasks {
            subtasks[s.group.0] += 1;
            successes[s.group.0] += (s.status == SubtaskStatus::SuccessHit) as usize;
            intrinsic[s.group.0] += s.intrinsic_reward;
        }
        for t in &trace.turns {
            if let (Actor::Worker(g), EnvAction::Request(_)) = (t.actor, t.action) {
                matches[g.0].requests += 1;
                matches[g.0].hits += t.implicit_hit as usize;
            }
        }
    }
    let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
    (0..h)
        .map(|g| WorkerReport {
            group: ontology.group_name(GroupId(g)).to_string(),
            subtasks: subtasks[g],
            success_rate: ratio(successes[g] as f64, subtasks[g]),
            average_intrinsic_reward: ratio(intrinsic[g], subtasks[g]),
            match_rate: matches[g].rate(),
            requests: matches[g].requests,
            hits: matches[g].hits,
            activations_per_episode: ratio(subtasks[g] as f64, traces.len()),
        })
        .collect()
}

pub fn render_workers(rows: &[WorkerReport]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|w| {
            vec![
                w.group.clone(),
                format!("{:.1}%", 100.0 * w.success_rate),
                format!("{:.3}", w.average_intrinsic_reward),
                format!("{:.2}%", 100.0 * w.match_rate),
                format!("{:.3}", w.activations_per_episode),
            ]
        })
        .collect();
    render_table(&["Group", "Success rate", "Ave intrinsic reward", "Match rate", "Activation times"], &body)
}

/// Wrong diagnoses by (true group, predicted group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMatrix {
    pub groups: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    /// Episodes that ended without a diagnosis, per true group.
    pub undiagnosed: Vec<usize>,
    pub successes: Vec<usize>,
    pub episodes: Vec<usize>,
}

impl ErrorMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Share of wrong diagnoses that stayed within the true group.
    pub fn diagonal_share(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.diagonal() as f64 / total as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for g in &self.groups {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (g, row) in self.groups.iter().zip(&self.counts) {
            out.push_str(g);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn render(&self) -> String {
        let mut header: Vec<&str> = vec!["true \\ predicted"];
        header.extend(self.groups.iter().map(|g| g.as_str()));
        header.push("undiagnosed");
        let body: Vec<Vec<String>> = self
            .groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut row = vec![g.clone()];
                row.extend(self.counts[i].iter().map(|c| c.to_string()));
                row.push(self.undiagnosed[i].to_string());
                row
            })
            .collect();
        render_table(&header, &body)
    }
}

pub fn error_matrix(traces: &[EpisodeTrace], ontology: &Ontology) -> ErrorMatrix {
    let h = ontology.num_groups();
    let mut m = ErrorMatrix {
        groups: ontology.groups().to_vec(),
        counts: vec![vec![0; h]; h],
        undiagnosed: vec![0; h],
        successes: vec![0; h],
        episodes: vec![0; h],
    };
    for t in traces {
        let g = t.group.0;
        m.episodes[g] += 1;
        match (t.status, t.diagnosis) {
            (EpisodeStatus::SuccessDiagnosis, _) => m.successes[g] += 1,
            (EpisodeStatus::WrongDiagnosis, Some(d)) => m.counts[g][ontology.group_of(d).0] += 1,
            _ => m.undiagnosed[g] += 1,
        }
    }
    m
}

fn answer_text(answer: Option<SymptomStatus>) -> &'static str {
    match answer {
        Some(SymptomStatus::True) => "Yes",
        Some(SymptomStatus::False) => "No",
        Some(SymptomStatus::Unknown) | Some(SymptomStatus::NotRequested) => "Not sure",
        None => "Repeated",
    }
}

/// Turn-by-turn table; hierarchical traces get a worker id column.
pub fn export_transcript(trace: &EpisodeTrace, ontology: &Ontology) -> Result<String> {
    render_turns(&trace.turns, ontology)
}

/// Transcript table of a turn list, including one from a live session.
pub fn render_turns(turns: &[TurnRecord], ontology: &Ontology) -> Result<String> {
    if turns.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let hierarchical = turns.iter().any(|t| !matches!(t.actor, Actor::Agent));
    let rows: Vec<Vec<String>> = turns
        .iter()
        .map(|t| {
            let (action, user) = match t.action {
                EnvAction::Request(s) => (format!("Do you have {}?", ontology.symptom_name(s)), answer_text(t.answer).to_string()),
                EnvAction::Inform(d) => (format!("Inform the disease of {}.", ontology.disease_name(d)), "Over".to_string()),
            };
            let mut row = vec![t.turn.to_string()];
            if hierarchical {
                row.push(match t.actor {
                    Actor::Worker(g) => ontology.group_name(g).to_string(),
                    _ => "/".to_string(),
                });
            }
            row.push(action);
            row.push(user);
            row
        })
        .collect();
    let header: &[&str] = if hierarchical {
        &["Dialogue turn", "Worker id", "Agent action", "User action"]
    } else {
        &["Dialogue turn", "Agent action", "User action"]
    };
    Ok(render_table(header, &rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::SubtaskRecord;
    use crate::domain::DiseaseId;
    use crate::simulator::tests::edema_case;

    fn turn(n: usize, actor: Actor, action: EnvAction, answer: Option<SymptomStatus>, hit: bool, reward: f64) -> TurnRecord {
        TurnRecord { turn: n, actor, action, answer, reward, shaped_reward: reward, intrinsic_reward: None, implicit_hit: hit }
    }

    fn inform_trace(disease: usize, truth: usize, group: usize) -> EpisodeTrace {
        let ok = disease == truth;
        EpisodeTrace {
            disease: DiseaseId(truth),
            group: GroupId(group),
            turns: vec![turn(1, Actor::Agent, EnvAction::Inform(DiseaseId(disease)), None, false, if ok { 1.0 } else { -1.0 })],
            subtasks: vec![],
            status: if ok { EpisodeStatus::SuccessDiagnosis } else { EpisodeStatus::WrongDiagnosis },
            diagnosis: Some(DiseaseId(disease)),
        }
    }

    #[test]
    fn oracle_and_wrong_policies() {
        let good: Vec<EpisodeTrace> = (0..10).map(|i| inform_trace(i % 2, i % 2, 0)).collect();
        let r = EvalReport::from_traces(&good, 0.95);
        assert_eq!(r.success_rate, 1.0);
        assert_eq!(r.average_turns, Some(1.0));
        assert_eq!(r.average_reward, Some(1.0));
        assert!((r.average_discounted_reward.unwrap() - 0.95).abs() < 1e-12);
        let bad: Vec<EpisodeTrace> = (0..10).map(|_| inform_trace(1, 0, 0)).collect();
        let r = EvalReport::from_traces(&bad, 0.95);
        assert_eq!(r.success_rate, 0.0);
        assert_eq!(r.average_reward, Some(-1.0));
    }

    #[test]
    fn mean_and_standard_error() {
        let m = mean_se(&[1.0, 2.0, 3.0]);
        assert!((m.mean - 2.0).abs() < 1e-15);
        assert!((m.se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[4.0]).se, 0.0);
    }

    /// A successful dialogue: eight requests, two of them hits, then the
    /// classifier informs.
    fn successful_trace() -> (Ontology, EpisodeTrace) {
        let (onto, goal) = edema_case();
        let g = GroupId(0);
        let asks = ["neck pain", "fever", "vomiting", "neck pain", "fever", "neck pain", "fever", "loss of sensation"];
        let mut turns: Vec<TurnRecord> = asks
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let s = onto.symptom_id(name).unwrap();
                let hit = goal.is_implicit_true(s);
                let answer = if hit { SymptomStatus::True } else { SymptomStatus::False };
                turn(i + 1, Actor::Worker(g), EnvAction::Request(s), Some(answer), hit, 0.0)
            })
            .collect();
        turns.push(turn(9, Actor::Classifier, EnvAction::Inform(goal.disease), None, false, 1.0));
        let trace = EpisodeTrace {
            disease: goal.disease,
            group: g,
            turns,
            subtasks: vec![SubtaskRecord { group: g, turns: 8, status: SubtaskStatus::SuccessHit, intrinsic_reward: 1.0 }],
            status: EpisodeStatus::SuccessDiagnosis,
            diagnosis: Some(goal.disease),
        };
        (onto, trace)
    }

    #[test]
    fn match_rate_examples() {
        let (_, trace) = successful_trace();
        let m = match_rate(&[trace]);
        assert_eq!((m.hits, m.requests), (2, 8));
        assert_eq!(m.rate(), 0.25);
        assert_eq!(match_rate(&[inform_trace(0, 0, 0)]).rate(), 0.0);
    }

    #[test]
    fn transcript_shapes() {
        let (onto, trace) = successful_trace();
        let text = export_transcript(&trace, &onto).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2 + 9);
        assert!(lines.last().unwrap().contains("Inform the disease of Cerebral edema."));
        assert!(lines.last().unwrap().contains("/"));
        assert!(lines.last().unwrap().ends_with("Over"));
        assert!(lines[2].contains("Do you have neck pain?"));

        let flat = inform_trace(1, 0, 0);
        let text = export_transcript(&flat, &onto).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().contains("Inform the disease of Concussion. | Over"));

        let mut empty = flat.clone();
        empty.turns.clear();
        assert!(matches!(export_transcript(&empty, &onto), Err(Error::EmptyTrace)));
    }

    #[test]
    fn error_matrix_reconciles() {
        let (onto, _) = edema_case();
        assert_eq!(error_matrix(&[], &onto).total(), 0);
        let traces: Vec<EpisodeTrace> =
            vec![inform_trace(0, 0, 0), inform_trace(1, 0, 0), inform_trace(0, 1, 0), inform_trace(1, 1, 0)];
        let m = error_matrix(&traces, &onto);
        assert_eq!(m.total(), 2);
        assert_eq!(m.diagonal_share(), 1.0);
        let wrong = traces.iter().filter(|t| t.status == EpisodeStatus::WrongDiagnosis).count();
        assert_eq!(m.total(), wrong);
        for g in 0..m.groups.len() {
            let row: usize = m.counts[g].iter().sum();
            assert_eq!(row + m.successes[g] + m.undiagnosed[g], m.episodes[g]);
        }
        assert!(m.to_csv().starts_with("true\\predicted,6\n6,2"));
    }

    #[test]
    fn worker_report_counts() {
        let (onto, trace) = successful_trace();
        let w = worker_reports(&[trace], &onto);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].requests, 8);
        assert_eq!(w[0].match_rate, 0.25);
        assert_eq!(w[0].activations_per_episode, 1.0);
    }
}
