//! Ontology, symptom statuses and dialogue-state vectors.
//!
//! Every vector index in the crate is derived from the declaration order of
//! the ontology file: symptom `j` owns the 3-block `[3j, 3j+3)` of a
//! [`DialogueState`], disease `k` is classifier output `k`, and group `i` is
//! master action `i` (the classifier is master action `h`).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Width of one per-symptom status block.
pub const BLOCK: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymptomId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiseaseId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId(pub usize);

/// Answer status of a single symptom within a dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymptomStatus {
    True,
    False,
    Unknown,
    NotRequested,
}

impl SymptomStatus {
    pub const ALL: [SymptomStatus; 4] = [
        SymptomStatus::True,
        SymptomStatus::False,
        SymptomStatus::Unknown,
        SymptomStatus::NotRequested,
    ];

    /// Label used by dataset files (`"True"`, `"False"`, `"UNK"`).
    pub fn label(self) -> &'static str {
        match self {
            SymptomStatus::True => "True",
            SymptomStatus::False => "False",
            SymptomStatus::Unknown => "UNK",
            SymptomStatus::NotRequested => "NotRequested",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "True" | "true" => Some(SymptomStatus::True),
            "False" | "false" => Some(SymptomStatus::False),
            "UNK" | "Unknown" | "unknown" => Some(SymptomStatus::Unknown),
            _ => None,
        }
    }
}

/// One-hot encoding of a status. `True` must sit at index 0 because the
/// shaping potential counts `[1,0,0]` blocks; `False`/`Unknown` order is a
/// fixed convention.
pub fn encode_status(status: SymptomStatus) -> [f64; BLOCK] {
    match status {
        SymptomStatus::True => [1.0, 0.0, 0.0],
        SymptomStatus::False => [0.0, 1.0, 0.0],
        SymptomStatus::Unknown => [0.0, 0.0, 1.0],
        SymptomStatus::NotRequested => [0.0, 0.0, 0.0],
    }
}

/// Inverse of [`encode_status`]; `None` for blocks that are not valid codes.
pub fn decode_status(block: &[f64]) -> Option<SymptomStatus> {
    SymptomStatus::ALL
        .into_iter()
        .find(|&s| encode_status(s).as_slice() == block)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupFile {
    #[serde(deserialize_with = "string_or_number")]
    id: String,
    diseases: Vec<String>,
    symptoms: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OntologyFile {
    diseases: Vec<String>,
    symptoms: Vec<String>,
    groups: Vec<GroupFile>,
}

fn string_or_number<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<String, D::Error> {
    match serde_json::Value::deserialize(de)? {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!(
            "group id must be a string or number, got {other}"
        ))),
    }
}

/// The universe of diseases, symptoms and disease groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Ontology {
    diseases: Vec<String>,
    symptoms: Vec<String>,
    groups: Vec<String>,
    disease_group: Vec<GroupId>,
    group_diseases: Vec<Vec<DiseaseId>>,
    group_symptoms: Vec<Vec<SymptomId>>,
    disease_index: HashMap<String, DiseaseId>,
    symptom_index: HashMap<String, SymptomId>,
    group_index: HashMap<String, GroupId>,
}

/// Declarative description of one group, used to build an [`Ontology`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub id: String,
    pub diseases: Vec<String>,
    pub symptoms: Vec<String>,
}

impl Ontology {
    pub fn new(diseases: Vec<String>, symptoms: Vec<String>, groups: Vec<GroupSpec>) -> Result<Self> {
        let disease_index: HashMap<String, DiseaseId> = index_names(&diseases, "disease")?;
        let symptom_index: HashMap<String, SymptomId> = index_names(&symptoms, "symptom")?;
        let group_names: Vec<String> = groups.iter().map(|g| g.id.clone()).collect();
        let group_index: HashMap<String, GroupId> = index_names(&group_names, "group")?;

        let mut disease_group: Vec<Option<GroupId>> = vec![None; diseases.len()];
        let mut group_diseases = Vec::with_capacity(groups.len());
        let mut group_symptoms = Vec::with_capacity(groups.len());
        for (gi, group) in groups.iter().enumerate() {
            let mut members = Vec::with_capacity(group.diseases.len());
            for name in &group.diseases {
                let d = *disease_index
                    .get(name)
                    .ok_or_else(|| Error::UnknownDisease(name.clone()))?;
                if let Some(prev) = disease_group[d.0] {
                    return Err(Error::InvalidOntology(format!(
                        "disease `{name}` belongs to both `{}` and `{}`",
                        group_names[prev.0], group.id
                    )));
                }
                disease_group[d.0] = Some(GroupId(gi));
                members.push(d);
            }
            let mut subset = Vec::with_capacity(group.symptoms.len());
            for name in &group.symptoms {
                let s = *symptom_index
                    .get(name)
                    .ok_or_else(|| Error::UnknownSymptom(name.clone()))?;
                if subset.contains(&s) {
                    return Err(Error::InvalidOntology(format!(
                        "symptom `{name}` listed twice in group `{}`",
                        group.id
                    )));
                }
                subset.push(s);
            }
            group_diseases.push(members);
            group_symptoms.push(subset);
        }
        let disease_group = disease_group
            .into_iter()
            .enumerate()
            .map(|(d, g)| {
                g.ok_or_else(|| {
                    Error::InvalidOntology(format!("disease `{}` has no group", diseases[d]))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Ontology {
            diseases,
            symptoms,
            groups: group_names,
            disease_group,
            group_diseases,
            group_symptoms,
            disease_index,
            symptom_index,
            group_index,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: OntologyFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidOntology(e.to_string()))?;
        Self::from_file_repr(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: OntologyFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file_repr(file)
    }

    fn from_file_repr(file: OntologyFile) -> Result<Self> {
        let groups = file
            .groups
            .into_iter()
            .map(|g| GroupSpec { id: g.id, diseases: g.diseases, symptoms: g.symptoms })
            .collect();
        Ontology::new(file.diseases, file.symptoms, groups)
    }

    pub fn to_json_string(&self) -> String {
        let file = OntologyFile {
            diseases: self.diseases.clone(),
            symptoms: self.symptoms.clone(),
            groups: (0..self.groups.len())
                .map(|g| GroupFile {
                    id: self.groups[g].clone(),
                    diseases: self.group_diseases[g]
                        .iter()
                        .map(|d| self.diseases[d.0].clone())
                        .collect(),
                    symptoms: self.group_symptoms[g]
                        .iter()
                        .map(|s| self.symptoms[s.0].clone())
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("ontology serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn num_diseases(&self) -> usize {
        self.diseases.len()
    }

    pub fn num_symptoms(&self) -> usize {
        self.symptoms.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Length of a full dialogue-state vector.
    pub fn state_width(&self) -> usize {
        BLOCK * self.symptoms.len()
    }

    pub fn diseases(&self) -> &[String] {
        &self.diseases
    }

    pub fn symptoms(&self) -> &[String] {
        &self.symptoms
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn disease_name(&self, d: DiseaseId) -> &str {
        &self.diseases[d.0]
    }

    pub fn symptom_name(&self, s: SymptomId) -> &str {
        &self.symptoms[s.0]
    }

    pub fn group_name(&self, g: GroupId) -> &str {
        &self.groups[g.0]
    }

    pub fn disease_id(&self, name: &str) -> Result<DiseaseId> {
        self.disease_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownDisease(name.to_string()))
    }

    pub fn symptom_id(&self, name: &str) -> Result<SymptomId> {
        self.symptom_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSymptom(name.to_string()))
    }

    pub fn group_id(&self, name: &str) -> Result<GroupId> {
        self.group_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))
    }

    pub fn group_of(&self, d: DiseaseId) -> GroupId {
        self.disease_group[d.0]
    }

    pub fn group_diseases(&self, g: GroupId) -> &[DiseaseId] {
        &self.group_diseases[g.0]
    }

    /// The ordered symptom subset `S_i` owned by group `g`.
    pub fn group_symptoms(&self, g: GroupId) -> &[SymptomId] {
        &self.group_symptoms[g.0]
    }

    fn check_group(&self, g: GroupId) -> Result<()> {
        if g.0 < self.groups.len() {
            Ok(())
        } else {
            Err(Error::UnknownGroup(format!("#{}", g.0)))
        }
    }
}

fn index_names<T: From<usize>>(names: &[String], what: &str) -> Result<HashMap<String, T>> {
    let mut index = HashMap::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        if index.insert(name.clone(), T::from(i)).is_some() {
            return Err(Error::InvalidOntology(format!("duplicate {what} `{name}`")));
        }
    }
    Ok(index)
}

impl From<usize> for SymptomId {
    fn from(v: usize) -> Self {
        SymptomId(v)
    }
}

impl From<usize> for DiseaseId {
    fn from(v: usize) -> Self {
        DiseaseId(v)
    }
}

impl From<usize> for GroupId {
    fn from(v: usize) -> Self {
        GroupId(v)
    }
}

/// Concatenated per-symptom status blocks plus the dialogue turn counter.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueState {
    blocks: Vec<f64>,
    pub turn: usize,
}

impl DialogueState {
    /// All-not-requested state for `num_symptoms` symptoms.
    pub fn empty(num_symptoms: usize) -> Self {
        DialogueState { blocks: vec![0.0; BLOCK * num_symptoms], turn: 0 }
    }

    /// Wraps a raw vector, checking that every block is a valid code.
    pub fn from_vec(blocks: Vec<f64>, turn: usize) -> Result<Self> {
        if !blocks.len().is_multiple_of(BLOCK) {
            return Err(Error::ShapeMismatch {
                expected: blocks.len() - blocks.len() % BLOCK,
                actual: blocks.len(),
            });
        }
        if let Some(bad) = blocks.chunks(BLOCK).position(|b| decode_status(b).is_none()) {
            return Err(Error::InvalidOntology(format!("block {bad} is not a status code")));
        }
        Ok(DialogueState { blocks, turn })
    }

    pub fn num_symptoms(&self) -> usize {
        self.blocks.len() / BLOCK
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.blocks
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.blocks
    }

    pub fn block(&self, s: SymptomId) -> &[f64] {
        &self.blocks[BLOCK * s.0..BLOCK * (s.0 + 1)]
    }

    pub fn status(&self, s: SymptomId) -> SymptomStatus {
        decode_status(self.block(s)).expect("state blocks are always valid codes")
    }

    pub fn set(&mut self, s: SymptomId, status: SymptomStatus) {
        self.blocks[BLOCK * s.0..BLOCK * (s.0 + 1)].copy_from_slice(&encode_status(status));
    }

    /// Number of blocks equal to `[1,0,0]`.
    pub fn count_true(&self) -> usize {
        count_true(self)
    }
}

/// Builds a state from named answers; absent symptoms stay not-requested.
pub fn build_state(
    answers: &BTreeMap<String, SymptomStatus>,
    ontology: &Ontology,
) -> Result<DialogueState> {
    let mut state = DialogueState::empty(ontology.num_symptoms());
    for (name, &status) in answers {
        let s = ontology.symptom_id(name)?;
        state.set(s, status);
    }
    Ok(state)
}

/// Gathers the blocks of group `g`'s symptoms, in `S_g` order.
pub fn extract_worker_state(
    state: &DialogueState,
    group: GroupId,
    ontology: &Ontology,
) -> Result<Vec<f64>> {
    ontology.check_group(group)?;
    let subset = ontology.group_symptoms(group);
    let mut out = Vec::with_capacity(BLOCK * subset.len());
    for &s in subset {
        out.extend_from_slice(state.block(s));
    }
    Ok(out)
}

pub fn count_true(state: &DialogueState) -> usize {
    state
        .blocks
        .chunks_exact(BLOCK)
        .filter(|b| b[0] == 1.0 && b[1] == 0.0 && b[2] == 0.0)
        .count()
}

/// Action of the high-level policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MasterAction {
    InvokeWorker(GroupId),
    InvokeClassifier,
}

impl MasterAction {
    /// Master Q-network output index: workers first, classifier last.
    pub fn index(self, num_groups: usize) -> usize {
        match self {
            MasterAction::InvokeWorker(g) => g.0,
            MasterAction::InvokeClassifier => num_groups,
        }
    }

    pub fn from_index(index: usize, num_groups: usize) -> Option<Self> {
        match index.cmp(&num_groups) {
            std::cmp::Ordering::Less => Some(MasterAction::InvokeWorker(GroupId(index))),
            std::cmp::Ordering::Equal => Some(MasterAction::InvokeClassifier),
            std::cmp::Ordering::Greater => None,
        }
    }
}

/// `request(symptom)` issued by one worker; `slot` indexes that worker's `S_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkerAction {
    pub group: GroupId,
    pub slot: usize,
    pub symptom: SymptomId,
}

impl WorkerAction {
    pub fn from_slot(ontology: &Ontology, group: GroupId, slot: usize) -> Result<Self> {
        ontology.check_group(group)?;
        let subset = ontology.group_symptoms(group);
        let symptom = *subset
            .get(slot)
            .ok_or(Error::IndexOutOfRange { index: slot, len: subset.len() })?;
        Ok(WorkerAction { group, slot, symptom })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_ontology() -> Ontology {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Ontology::new(
            names(&["d1", "d2", "d3"]),
            names(&["s1", "s2", "s3", "s4"]),
            vec![
                GroupSpec { id: "a".into(), diseases: names(&["d1", "d2"]), symptoms: names(&["s1", "s2", "s3"]) },
                GroupSpec { id: "b".into(), diseases: names(&["d3"]), symptoms: names(&["s2", "s4"]) },
            ],
        )
        .unwrap()
    }

    #[test]
    fn status_codes() {
        assert_eq!(encode_status(SymptomStatus::True), [1.0, 0.0, 0.0]);
        assert_eq!(encode_status(SymptomStatus::NotRequested), [0.0, 0.0, 0.0]);
        assert_eq!(encode_status(SymptomStatus::False), [0.0, 1.0, 0.0]);
        assert_eq!(encode_status(SymptomStatus::Unknown), [0.0, 0.0, 1.0]);
        for a in SymptomStatus::ALL {
            for b in SymptomStatus::ALL {
                assert_eq!(a == b, encode_status(a) == encode_status(b));
            }
            assert_eq!(decode_status(&encode_status(a)), Some(a));
        }
    }

    #[test]
    fn build_state_examples() {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let onto = Ontology::new(
            names(&["d"]),
            names(&["s1", "s2"]),
            vec![GroupSpec { id: "g".into(), diseases: names(&["d"]), symptoms: names(&["s1", "s2"]) }],
        )
        .unwrap();
        let empty = build_state(&BTreeMap::new(), &onto).unwrap();
        assert_eq!(empty.as_slice(), &[0.0; 6]);

        let mut m = BTreeMap::new();
        m.insert("s1".to_string(), SymptomStatus::True);
        assert_eq!(build_state(&m, &onto).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        m.insert("s2".to_string(), SymptomStatus::Unknown);
        let got = build_state(&m, &onto).unwrap();
        // index arithmetic: symptom j, status code c -> position 3j + c
        let pos = |j: usize, c: usize| 3 * j + c;
        let mut oracle = vec![0.0; 6];
        oracle[pos(0, 0)] = 1.0;
        oracle[pos(1, 2)] = 1.0;
        assert_eq!(got.as_slice(), oracle.as_slice());
        assert_eq!(got.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);

        m.insert("nope".to_string(), SymptomStatus::True);
        match build_state(&m, &onto) {
            Err(Error::UnknownSymptom(name)) => assert_eq!(name, "nope"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extraction_examples() {
        let onto = small_ontology();
        let mut state = DialogueState::empty(4);
        state.set(SymptomId(0), SymptomStatus::True);
        state.set(SymptomId(1), SymptomStatus::False);
        state.set(SymptomId(2), SymptomStatus::Unknown);
        state.set(SymptomId(3), SymptomStatus::True);
        let b = extract_worker_state(&state, GroupId(1), &onto).unwrap();
        // re-gather by index lookup: blocks B and D
        let v = state.as_slice();
        let oracle: Vec<f64> = [1usize, 3].iter().flat_map(|&j| v[3 * j..3 * j + 3].to_vec()).collect();
        assert_eq!(b, oracle);
        assert!(matches!(
            extract_worker_state(&state, GroupId(7), &onto),
            Err(Error::UnknownGroup(_))
        ));
    }

    #[test]
    fn extraction_identity_and_empty_subsets() {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let onto = Ontology::new(
            names(&["d1", "d2"]),
            names(&["s1", "s2"]),
            vec![
                GroupSpec { id: "all".into(), diseases: names(&["d1"]), symptoms: names(&["s1", "s2"]) },
                GroupSpec { id: "none".into(), diseases: names(&["d2"]), symptoms: vec![] },
            ],
        )
        .unwrap();
        let mut state = DialogueState::empty(2);
        state.set(SymptomId(1), SymptomStatus::False);
        assert_eq!(extract_worker_state(&state, GroupId(0), &onto).unwrap(), state.as_slice());
        assert!(extract_worker_state(&state, GroupId(1), &onto).unwrap().is_empty());
    }

    #[test]
    fn count_true_examples() {
        let mut state = DialogueState::empty(4);
        assert_eq!(count_true(&state), 0);
        state.set(SymptomId(2), SymptomStatus::True);
        assert_eq!(count_true(&state), 1);
        let statuses = [SymptomStatus::True, SymptomStatus::False, SymptomStatus::Unknown, SymptomStatus::True];
        for (j, s) in statuses.iter().enumerate() {
            state.set(SymptomId(j), *s);
        }
        let scan = state.as_slice().chunks(3).filter(|b| *b == [1.0, 0.0, 0.0]).count();
        assert_eq!(scan, 2);
        assert_eq!(count_true(&state), 2);
    }

    #[test]
    fn ontology_validation() {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let orphan = Ontology::new(
            names(&["d1", "d2"]),
            names(&["s1"]),
            vec![GroupSpec { id: "g".into(), diseases: names(&["d1"]), symptoms: names(&["s1"]) }],
        );
        assert!(matches!(orphan, Err(Error::InvalidOntology(_))));
        let twice = Ontology::new(
            names(&["d1"]),
            names(&["s1"]),
            vec![
                GroupSpec { id: "g".into(), diseases: names(&["d1"]), symptoms: names(&["s1"]) },
                GroupSpec { id: "h".into(), diseases: names(&["d1"]), symptoms: names(&["s1"]) },
            ],
        );
        assert!(matches!(twice, Err(Error::InvalidOntology(_))));
        let stray = Ontology::new(
            names(&["d1"]),
            names(&["s1"]),
            vec![GroupSpec { id: "g".into(), diseases: names(&["d1"]), symptoms: names(&["s9"]) }],
        );
        assert!(matches!(stray, Err(Error::UnknownSymptom(_))));
    }

    #[test]
    fn json_roundtrip_with_numeric_group_ids() {
        let text = r#"{"diseases":["a","b"],"symptoms":["x","y"],
            "groups":[{"id":6,"diseases":["a"],"symptoms":["x"]},{"id":"7","diseases":["b"],"symptoms":["x","y"]}]}"#;
        let onto = Ontology::from_json_str(text).unwrap();
        assert_eq!(onto.groups(), &["6".to_string(), "7".to_string()]);
        let again = Ontology::from_json_str(&onto.to_json_string()).unwrap();
        assert_eq!(onto, again);
    }

    #[test]
    fn master_action_indexing() {
        assert_eq!(MasterAction::InvokeClassifier.index(3), 3);
        assert_eq!(MasterAction::from_index(1, 3), Some(MasterAction::InvokeWorker(GroupId(1))));
        assert_eq!(MasterAction::from_index(3, 3), Some(MasterAction::InvokeClassifier));
        assert_eq!(MasterAction::from_index(4, 3), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn status() -> impl Strategy<Value = SymptomStatus> {
            prop::sample::select(SymptomStatus::ALL.to_vec())
        }

        proptest! {
            #[test]
            fn blocks_are_zero_or_one_hot(statuses in prop::collection::vec(status(), 4)) {
                let mut state = DialogueState::empty(4);
                for (j, s) in statuses.iter().enumerate() {
                    state.set(SymptomId(j), *s);
                }
                for b in state.as_slice().chunks(3) {
                    let sum: f64 = b.iter().sum();
                    prop_assert!(sum == 0.0 || sum == 1.0);
                    prop_assert!(b.iter().all(|&v| v == 0.0 || v == 1.0));
                }
                let trues = statuses.iter().filter(|s| **s == SymptomStatus::True).count();
                prop_assert_eq!(count_true(&state), trues);
            }

            #[test]
            fn extract_then_scatter_restores_subset(statuses in prop::collection::vec(status(), 4)) {
                let onto = small_ontology();
                let mut state = DialogueState::empty(4);
                for (j, s) in statuses.iter().enumerate() {
                    state.set(SymptomId(j), *s);
                }
                for g in 0..onto.num_groups() {
                    let g = GroupId(g);
                    let extracted = extract_worker_state(&state, g, &onto).unwrap();
                    let mut scattered = DialogueState::empty(4);
                    for (k, &s) in onto.group_symptoms(g).iter().enumerate() {
                        let status = decode_status(&extracted[3 * k..3 * k + 3]).unwrap();
                        scattered.set(s, status);
                    }
                    for &s in onto.group_symptoms(g) {
                        prop_assert_eq!(scattered.block(s), state.block(s));
                    }
                }
            }
        }
    }
}
