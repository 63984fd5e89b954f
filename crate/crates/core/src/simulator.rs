//! User simulator, extrinsic rewards, potential-based shaping and the
//! internal critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Goal;
use crate::domain::{count_true, DialogueState, DiseaseId, SymptomId, SymptomStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub max_turns: usize,
    pub max_subtask_turns: usize,
    pub shaping_lambda: f64,
    pub master_gamma: f64,
    pub worker_gamma: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_turns: 20,
            max_subtask_turns: 5,
            shaping_lambda: 1.0,
            master_gamma: 0.95,
            worker_gamma: 0.95,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if self.max_turns == 0 || self.max_subtask_turns == 0 {
            return Err(Error::InvalidConfig("turn limits must be at least 1".into()));
        }
        if !(self.shaping_lambda >= 0.0) {
            return Err(Error::InvalidConfig("shaping_lambda must be non-negative".into()));
        }
        if !unit.contains(&self.master_gamma) || !unit.contains(&self.worker_gamma) {
            return Err(Error::InvalidConfig("discount factors must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpisodeStatus {
    Ongoing,
    SuccessDiagnosis,
    WrongDiagnosis,
    MaxTurnsReached,
    RepeatedAction,
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Ongoing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubtaskStatus {
    Ongoing,
    SuccessHit,
    FailRepeat,
    FailBudget,
}

/// A user-visible system act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvAction {
    Request(SymptomId),
    Inform(DiseaseId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Unshaped extrinsic reward.
    pub reward: f64,
    pub status: EpisodeStatus,
    /// User answer to a request; `None` for informs and repeated requests.
    pub answer: Option<SymptomStatus>,
    pub repeated: bool,
}

pub fn answer(symptom: SymptomId, goal: &Goal) -> SymptomStatus {
    goal.answer(symptom)
}

/// One dialogue with a simulated user.
///
/// A request counts as repeated when the symptom's status is already part of
/// the dialogue state (asked before, or given as an explicit symptom).
#[derive(Debug, Clone)]
pub struct Dialogue<'g> {
    goal: &'g Goal,
    state: DialogueState,
    known: Vec<bool>,
    status: EpisodeStatus,
    max_turns: usize,
}

impl<'g> Dialogue<'g> {
    /// Starts a dialogue: explicit symptoms are written into the state.
    pub fn start(goal: &'g Goal, num_symptoms: usize, max_turns: usize) -> Self {
        let mut state = DialogueState::empty(num_symptoms);
        let mut known = vec![false; num_symptoms];
        for &(s, status) in &goal.explicit {
            state.set(s, status);
            known[s.0] = true;
        }
        Dialogue { goal, state, known, status: EpisodeStatus::Ongoing, max_turns }
    }

    pub fn state(&self) -> &DialogueState {
        &self.state
    }

    pub fn goal(&self) -> &'g Goal {
        self.goal
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    pub fn turn(&self) -> usize {
        self.state.turn
    }

    pub fn is_known(&self, s: SymptomId) -> bool {
        self.known[s.0]
    }

    pub fn step(&mut self, action: EnvAction) -> Result<StepOutcome> {
        if self.status.is_terminal() {
            return Err(Error::EpisodeTerminated);
        }
        self.state.turn += 1;
        let outcome = match action {
            EnvAction::Inform(d) => {
                let success = d == self.goal.disease;
                self.status = if success {
                    EpisodeStatus::SuccessDiagnosis
                } else {
                    EpisodeStatus::WrongDiagnosis
                };
                StepOutcome {
                    reward: if success { 1.0 } else { -1.0 },
                    status: self.status,
                    answer: None,
                    repeated: false,
                }
            }
            EnvAction::Request(s) if self.known[s.0] => {
                self.status = EpisodeStatus::RepeatedAction;
                StepOutcome { reward: -1.0, status: self.status, answer: None, repeated: true }
            }
            EnvAction::Request(s) => {
                let reply = self.goal.answer(s);
                self.state.set(s, reply);
                self.known[s.0] = true;
                let mut reward = 0.0;
                if self.state.turn >= self.max_turns {
                    self.status = EpisodeStatus::MaxTurnsReached;
                    reward = -1.0;
                }
                StepOutcome { reward, status: self.status, answer: Some(reply), repeated: false }
            }
        };
        Ok(outcome)
    }
}

/// Uniformly samples a goal and opens a dialogue on it.
pub fn reset<'g, R: Rng + ?Sized>(
    goals: &'g [Goal],
    num_symptoms: usize,
    max_turns: usize,
    rng: &mut R,
) -> Result<Dialogue<'g>> {
    if goals.is_empty() {
        return Err(Error::EmptyGoalSource);
    }
    let goal = &goals[rng.gen_range(0..goals.len())];
    Ok(Dialogue::start(goal, num_symptoms, max_turns))
}

/// `lambda * #true blocks` for non-terminal states, zero for terminal ones.
pub fn potential(state: &DialogueState, terminal: bool, lambda: f64) -> f64 {
    if terminal {
        0.0
    } else {
        lambda * count_true(state) as f64
    }
}

/// Auxiliary reward `gamma * phi(s') - phi(s)`.
pub fn shaping(phi: f64, phi_next: f64, gamma: f64) -> f64 {
    gamma * phi_next - phi
}

/// Shaped reward for one transition `s -> s'`.
pub fn shaped_reward(
    reward: f64,
    state: &DialogueState,
    next: &DialogueState,
    next_terminal: bool,
    lambda: f64,
    gamma: f64,
) -> f64 {
    reward + shaping(potential(state, false, lambda), potential(next, next_terminal, lambda), gamma)
}

/// Internal critic reward for one worker request.
pub fn intrinsic_reward(answer: Option<SymptomStatus>, repeated: bool, subtask_turn: usize, max_subtask_turns: usize) -> f64 {
    match subtask_status(answer, repeated, subtask_turn, max_subtask_turns) {
        SubtaskStatus::SuccessHit => 1.0,
        SubtaskStatus::FailRepeat | SubtaskStatus::FailBudget => -1.0,
        SubtaskStatus::Ongoing => 0.0,
    }
}

/// Subtask termination after the `subtask_turn`-th request (1-based).
/// A hit on the last allowed turn still counts as a success.
pub fn subtask_status(
    answer: Option<SymptomStatus>,
    repeated: bool,
    subtask_turn: usize,
    max_subtask_turns: usize,
) -> SubtaskStatus {
    if repeated {
        SubtaskStatus::FailRepeat
    } else if answer == Some(SymptomStatus::True) {
        SubtaskStatus::SuccessHit
    } else if subtask_turn >= max_subtask_turns {
        SubtaskStatus::FailBudget
    } else {
        SubtaskStatus::Ongoing
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::datagen::UserGoal;
    use crate::domain::{GroupSpec, Ontology};
    use crate::rng::{stream, Stream};
    use std::collections::BTreeMap;

    pub(crate) fn edema_case() -> (Ontology, Goal) {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let symptoms = s(&[
            "headache", "focal weakness", "diminished vision", "vomiting", "loss of sensation", "fever", "neck pain",
        ]);
        let onto = Ontology::new(
            s(&["Cerebral edema", "Concussion"]),
            symptoms.clone(),
            vec![GroupSpec { id: "6".into(), diseases: s(&["Cerebral edema", "Concussion"]), symptoms }],
        )
        .unwrap();
        let mut implicit: BTreeMap<String, SymptomStatus> = ["focal weakness", "diminished vision", "vomiting", "loss of sensation"]
            .iter()
            .map(|n| (n.to_string(), SymptomStatus::True))
            .collect();
        implicit.insert("fever".into(), SymptomStatus::False);
        let user = UserGoal {
            disease: "Cerebral edema".into(),
            group: "6".into(),
            explicit: [("headache".to_string(), SymptomStatus::True)].into(),
            implicit,
        };
        let goal = Goal::resolve(&user, &onto).unwrap();
        (onto, goal)
    }

    #[test]
    fn answers_follow_goal() {
        let (onto, goal) = edema_case();
        assert_eq!(answer(onto.symptom_id("vomiting").unwrap(), &goal), SymptomStatus::True);
        assert_eq!(answer(onto.symptom_id("neck pain").unwrap(), &goal), SymptomStatus::Unknown);
        assert_eq!(answer(onto.symptom_id("fever").unwrap(), &goal), SymptomStatus::False);
    }

    #[test]
    fn reset_initializes_explicit_symptoms() {
        let (onto, goal) = edema_case();
        let goals = vec![goal];
        let d = reset(&goals, onto.num_symptoms(), 20, &mut stream(0, Stream::Rollout, 0)).unwrap();
        assert_eq!(d.state().count_true(), 1);
        assert_eq!(d.turn(), 0);
        assert!(matches!(reset(&[], 3, 20, &mut stream(0, Stream::Rollout, 0)), Err(Error::EmptyGoalSource)));
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let cpt = crate::datagen::ConditionalProbabilityTable::toy();
        let ds = crate::datagen::generate_dataset(&cpt, 5, 2).unwrap();
        let goals = Goal::resolve_all(&ds.goals, cpt.ontology()).unwrap();
        let draw = |seed| {
            let mut rng = stream(seed, Stream::Rollout, 0);
            (0..20)
                .map(|_| reset(&goals, 39, 20, &mut rng).unwrap().goal().disease)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn multiple_explicit_symptoms() {
        let (onto, mut goal) = edema_case();
        goal.explicit.push((onto.symptom_id("vomiting").unwrap(), SymptomStatus::True));
        let d = Dialogue::start(&goal, onto.num_symptoms(), 20);
        assert_eq!(d.state().count_true(), 2);
    }

    #[test]
    fn step_rewards_and_termination() {
        let (onto, goal) = edema_case();
        let n = onto.num_symptoms();
        let mut d = Dialogue::start(&goal, n, 20);
        let out = d.step(EnvAction::Request(onto.symptom_id("neck pain").unwrap())).unwrap();
        assert_eq!((out.reward, out.status), (0.0, EpisodeStatus::Ongoing));
        assert_eq!(out.answer, Some(SymptomStatus::Unknown));
        let out = d.step(EnvAction::Inform(DiseaseId(0))).unwrap();
        assert_eq!((out.reward, out.status), (1.0, EpisodeStatus::SuccessDiagnosis));
        assert!(matches!(d.step(EnvAction::Inform(DiseaseId(0))), Err(Error::EpisodeTerminated)));

        let mut d = Dialogue::start(&goal, n, 20);
        let out = d.step(EnvAction::Inform(DiseaseId(1))).unwrap();
        assert_eq!((out.reward, out.status), (-1.0, EpisodeStatus::WrongDiagnosis));

        // explicit symptom and second ask both count as repeats
        let mut d = Dialogue::start(&goal, n, 20);
        let out = d.step(EnvAction::Request(onto.symptom_id("headache").unwrap())).unwrap();
        assert!(out.repeated);
        assert_eq!((out.reward, out.status), (-1.0, EpisodeStatus::RepeatedAction));
        let mut d = Dialogue::start(&goal, n, 20);
        let fever = onto.symptom_id("fever").unwrap();
        d.step(EnvAction::Request(fever)).unwrap();
        let before = d.state().clone();
        let out = d.step(EnvAction::Request(fever)).unwrap();
        assert_eq!(out.status, EpisodeStatus::RepeatedAction);
        assert_eq!(d.state().as_slice(), before.as_slice());
    }

    #[test]
    fn max_turns_terminates_with_penalty() {
        let (onto, goal) = edema_case();
        let mut d = Dialogue::start(&goal, onto.num_symptoms(), 3);
        for name in ["neck pain", "fever"] {
            let out = d.step(EnvAction::Request(onto.symptom_id(name).unwrap())).unwrap();
            assert_eq!(out.status, EpisodeStatus::Ongoing);
        }
        let out = d.step(EnvAction::Request(onto.symptom_id("vomiting").unwrap())).unwrap();
        assert_eq!((out.reward, out.status), (-1.0, EpisodeStatus::MaxTurnsReached));
        assert_eq!(d.turn(), 3);
    }

    #[test]
    fn potential_and_shaping_examples() {
        let mut s = DialogueState::empty(4);
        s.set(SymptomId(0), SymptomStatus::True);
        s.set(SymptomId(1), SymptomStatus::True);
        assert_eq!(potential(&s, true, 1.0), 0.0);
        assert_eq!(potential(&s, false, 1.0), 2.0);
        s.set(SymptomId(2), SymptomStatus::True);
        assert_eq!(potential(&s, false, 0.5), 1.5);
        assert!((shaping(1.0, 1.0, 0.95) - -0.05).abs() < 1e-15);
        assert!((shaping(1.0, 2.0, 0.95) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn critic_examples() {
        use SymptomStatus::*;
        assert_eq!(intrinsic_reward(Some(True), false, 1, 5), 1.0);
        assert_eq!(intrinsic_reward(None, true, 2, 5), -1.0);
        assert_eq!(intrinsic_reward(Some(Unknown), false, 2, 5), 0.0);
        assert_eq!(intrinsic_reward(Some(False), false, 5, 5), -1.0);
        assert_eq!(subtask_status(Some(True), false, 1, 5), SubtaskStatus::SuccessHit);
        assert_eq!(subtask_status(Some(False), false, 5, 5), SubtaskStatus::FailBudget);
        assert_eq!(subtask_status(Some(False), false, 2, 5), SubtaskStatus::Ongoing);
        assert_eq!(subtask_status(None, true, 1, 5), SubtaskStatus::FailRepeat);
        assert_eq!(subtask_status(Some(True), false, 5, 5), SubtaskStatus::SuccessHit);
    }

    #[test]
    fn config_validation() {
        assert!(EpisodeConfig::default().validate().is_ok());
        let bad = EpisodeConfig { master_gamma: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = EpisodeConfig { max_subtask_turns: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
