//! Step-by-step greedy diagnosis driven by outside answers (a person at a
//! terminal, or a caller through the C interface).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{Actor, Policy, TurnRecord};
use crate::domain::{extract_worker_state, DialogueState, DiseaseId, GroupId, MasterAction, SymptomId, SymptomStatus, WorkerAction};
use crate::error::{Error, Result};
use crate::policy::{argmax, flat_action, greedy_masked};
use crate::simulator::{subtask_status, EnvAction, EpisodeConfig, SubtaskStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Ongoing,
    Diagnosed,
    MaxTurnsReached,
    RepeatedAction,
    Aborted,
}

/// What the agent does next.
#[derive(Debug, Clone, PartialEq)]
pub enum Prompt {
    Ask { symptom: SymptomId, actor: Actor },
    /// Final answer with up to three `(disease, score)` candidates; scores
    /// are classifier probabilities, or Q-values for the flat agent.
    Diagnosis { disease: DiseaseId, actor: Actor, top: Vec<(DiseaseId, f64)> },
    Ended(SessionStatus),
}

#[derive(Debug, Clone)]
pub struct DiagnosisSession {
    policy: Arc<Policy>,
    config: EpisodeConfig,
    mask_known: bool,
    state: DialogueState,
    known: Vec<bool>,
    subtask: Option<(GroupId, usize)>,
    pending: Option<(SymptomId, Actor)>,
    status: SessionStatus,
    diagnosis: Option<DiseaseId>,
    turns: Vec<TurnRecord>,
}

fn top3(scores: &[f64]) -> Vec<(DiseaseId, f64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.into_iter().take(3).map(|i| (DiseaseId(i), scores[i])).collect()
}

impl DiagnosisSession {
    /// Opens a session from the self-reported symptoms.
    pub fn new(policy: Arc<Policy>, explicit: &[(SymptomId, SymptomStatus)], config: EpisodeConfig, mask_known: bool) -> Result<Self> {
        let n = policy.ontology().num_symptoms();
        let mut state = DialogueState::empty(n);
        let mut known = vec![false; n];
        for &(s, status) in explicit {
            if s.0 >= n {
                return Err(Error::IndexOutOfRange { index: s.0, len: n });
            }
            state.set(s, status);
            known[s.0] = true;
        }
        Ok(DiagnosisSession {
            policy,
            config,
            mask_known,
            state,
            known,
            subtask: None,
            pending: None,
            status: SessionStatus::Ongoing,
            diagnosis: None,
            turns: Vec::new(),
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn diagnosis(&self) -> Option<DiseaseId> {
        self.diagnosis
    }

    pub fn turn(&self) -> usize {
        self.state.turn
    }

    pub fn state(&self) -> &DialogueState {
        &self.state
    }

    pub fn turns(&self) -> &[TurnRecord] {
        &self.turns
    }

    pub fn abort(&mut self) {
        if self.status == SessionStatus::Ongoing {
            self.status = SessionStatus::Aborted;
            self.pending = None;
        }
    }

    fn finish_turn(&mut self, actor: Actor, action: EnvAction, answer: Option<SymptomStatus>, reward: f64) {
        self.state.turn += 1;
        self.turns.push(TurnRecord {
            turn: self.state.turn,
            actor,
            action,
            answer,
            reward,
            shaped_reward: reward,
            intrinsic_reward: None,
            implicit_hit: false,
        });
    }

    fn repeat(&mut self, actor: Actor, symptom: SymptomId) -> Prompt {
        self.finish_turn(actor, EnvAction::Request(symptom), None, -1.0);
        self.status = SessionStatus::RepeatedAction;
        Prompt::Ended(self.status)
    }

    fn ask(&mut self, symptom: SymptomId, actor: Actor) -> Prompt {
        if self.known[symptom.0] {
            return self.repeat(actor, symptom);
        }
        self.pending = Some((symptom, actor));
        Prompt::Ask { symptom, actor }
    }

    /// Decides the next act. Repeats the pending question until it is
    /// answered.
    pub fn next_prompt(&mut self) -> Result<Prompt> {
        if self.status != SessionStatus::Ongoing {
            return Ok(Prompt::Ended(self.status));
        }
        if let Some((symptom, actor)) = self.pending {
            return Ok(Prompt::Ask { symptom, actor });
        }
        let policy = Arc::clone(&self.policy);
        let onto = policy.ontology();
        match &*policy {
            Policy::Hierarchical(hier) => {
                let group = match self.subtask {
                    Some((g, _)) => g,
                    None => {
                        let q = hier.master.q_values(self.state.as_slice())?;
                        match MasterAction::from_index(argmax(&q), onto.num_groups()).expect("master width") {
                            MasterAction::InvokeClassifier => {
                                let (probs, disease) = hier.classifier.classify(self.state.as_slice())?;
                                self.finish_turn(Actor::Classifier, EnvAction::Inform(disease), None, 0.0);
                                self.status = SessionStatus::Diagnosed;
                                self.diagnosis = Some(disease);
                                return Ok(Prompt::Diagnosis { disease, actor: Actor::Classifier, top: top3(&probs) });
                            }
                            MasterAction::InvokeWorker(g) => {
                                self.subtask = Some((g, 0));
                                g
                            }
                        }
                    }
                };
                let ws = extract_worker_state(&self.state, group, onto)?;
                let q = hier.workers[group.0].q_values(&ws)?;
                let slot = if self.mask_known {
                    let allowed: Vec<bool> = onto.group_symptoms(group).iter().map(|s| !self.known[s.0]).collect();
                    greedy_masked(&q, &allowed)
                } else {
                    argmax(&q)
                };
                let act = WorkerAction::from_slot(onto, group, slot)?;
                Ok(self.ask(act.symptom, Actor::Worker(group)))
            }
            Policy::Flat(flat) => {
                let (ns, nd) = (onto.num_symptoms(), onto.num_diseases());
                let q = flat.agent.q_values(self.state.as_slice())?;
                let a = if self.mask_known {
                    let allowed: Vec<bool> = (0..ns + nd).map(|i| i >= ns || !self.known[i]).collect();
                    greedy_masked(&q, &allowed)
                } else {
                    argmax(&q)
                };
                match flat_action(a, ns, nd)? {
                    EnvAction::Request(s) => Ok(self.ask(s, Actor::Agent)),
                    EnvAction::Inform(disease) => {
                        self.finish_turn(Actor::Agent, EnvAction::Inform(disease), None, 0.0);
                        self.status = SessionStatus::Diagnosed;
                        self.diagnosis = Some(disease);
                        Ok(Prompt::Diagnosis { disease, actor: Actor::Agent, top: top3(&q[ns..]) })
                    }
                }
            }
        }
    }

    /// Records the answer to the pending question.
    pub fn answer(&mut self, status: SymptomStatus) -> Result<()> {
        let Some((symptom, actor)) = self.pending.take() else {
            return Err(Error::InvalidConfig("no question is pending".into()));
        };
        if status == SymptomStatus::NotRequested {
            self.pending = Some((symptom, actor));
            return Err(Error::InvalidConfig("an answer must be true, false or unknown".into()));
        }
        self.state.set(symptom, status);
        self.known[symptom.0] = true;
        let capped = self.state.turn + 1 >= self.config.max_turns;
        self.finish_turn(actor, EnvAction::Request(symptom), Some(status), if capped { -1.0 } else { 0.0 });
        if let Some((g, k)) = self.subtask {
            let k = k + 1;
            let sub = subtask_status(Some(status), false, k, self.config.max_subtask_turns);
            self.subtask = (sub == SubtaskStatus::Ongoing).then_some((g, k));
        }
        if capped {
            self.status = SessionStatus::MaxTurnsReached;
        }
        Ok(())
    }
}
