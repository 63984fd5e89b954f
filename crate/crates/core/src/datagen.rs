//! Synthetic user-goal generation and dataset files.
//!
//! A dataset file holds one JSON record per line:
//!
//! ```text
//! {"disease_tag":"Cerebral edema","group_id":"6",
//!  "explicit_symptoms":{"headache":"True"},
//!  "implicit_symptoms":{"vomiting":"True","fever":"False"},"split":"train"}
//! ```
//!
//! `split` is optional. Records with several explicit symptoms and `"UNK"`
//! labels (real-world style) are accepted as well.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DiseaseId, GroupId, GroupSpec, Ontology, SymptomId, SymptomStatus};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Default number of redraws when a disease samples no true symptom.
pub const DEFAULT_RETRY_BUDGET: usize = 100;

/// The bundled toy table (3 groups, 4 diseases each).
pub const TOY_TABLE_JSON: &str = include_str!("../data/toy_table.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableFile {
    groups: Vec<TableGroup>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableGroup {
    id: String,
    diseases: Vec<TableDisease>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableDisease {
    name: String,
    symptoms: BTreeMap<String, f64>,
}

/// Per-disease probabilities that each related symptom is present.
#[derive(Debug, Clone)]
pub struct ConditionalProbabilityTable {
    ontology: Ontology,
    rows: Vec<Vec<(SymptomId, f64)>>,
}

impl ConditionalProbabilityTable {
    /// Builds a table over an existing ontology.
    pub fn new(ontology: Ontology, rows: BTreeMap<String, BTreeMap<String, f64>>) -> Result<Self> {
        let mut table = vec![Vec::new(); ontology.num_diseases()];
        for (disease, symptoms) in rows {
            let d = ontology.disease_id(&disease)?;
            for (symptom, p) in symptoms {
                let s = ontology.symptom_id(&symptom)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidTable(format!(
                        "P({symptom} | {disease}) = {p} is outside [0, 1]"
                    )));
                }
                table[d.0].push((s, p));
            }
        }
        Ok(ConditionalProbabilityTable { ontology, rows: table })
    }

    /// Parses the table file format; the ontology is derived from it with
    /// each group's symptom subset being the union of its diseases' symptoms.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidTable(e.to_string()))?;
        Self::from_file_repr(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TableFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file_repr(file)
    }

    pub fn toy() -> Self {
        Self::from_json_str(TOY_TABLE_JSON).expect("bundled toy table is valid")
    }

    fn from_file_repr(file: TableFile) -> Result<Self> {
        let mut diseases = Vec::new();
        let mut symptoms: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut groups = Vec::new();
        let mut rows = BTreeMap::new();
        for group in file.groups {
            let mut group_symptoms: Vec<String> = Vec::new();
            let mut group_diseases = Vec::new();
            for disease in group.diseases {
                for name in disease.symptoms.keys() {
                    if seen.insert(name.clone()) {
                        symptoms.push(name.clone());
                    }
                    if !group_symptoms.contains(name) {
                        group_symptoms.push(name.clone());
                    }
                }
                diseases.push(disease.name.clone());
                group_diseases.push(disease.name.clone());
                if rows.insert(disease.name.clone(), disease.symptoms).is_some() {
                    return Err(Error::InvalidTable(format!("disease `{}` listed twice", disease.name)));
                }
            }
            groups.push(GroupSpec { id: group.id, diseases: group_diseases, symptoms: group_symptoms });
        }
        let ontology = Ontology::new(diseases, symptoms, groups)?;
        Self::new(ontology, rows)
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    /// Related symptoms of `d` with their probabilities.
    pub fn row(&self, d: DiseaseId) -> &[(SymptomId, f64)] {
        &self.rows[d.0]
    }
}

/// One patient record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserGoal {
    pub disease: String,
    pub group: String,
    pub explicit: BTreeMap<String, SymptomStatus>,
    pub implicit: BTreeMap<String, SymptomStatus>,
}

impl UserGoal {
    pub fn implicit_true(&self) -> usize {
        self.implicit.values().filter(|s| **s == SymptomStatus::True).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    disease_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group_id: Option<serde_json::Value>,
    #[serde(default)]
    explicit_symptoms: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    implicit_symptoms: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

fn parse_label(value: &serde_json::Value) -> Option<SymptomStatus> {
    match value {
        serde_json::Value::String(s) => SymptomStatus::from_label(s),
        serde_json::Value::Bool(true) => Some(SymptomStatus::True),
        serde_json::Value::Bool(false) => Some(SymptomStatus::False),
        _ => None,
    }
}

fn labels(map: &BTreeMap<String, SymptomStatus>) -> BTreeMap<String, serde_json::Value> {
    map.iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.label().to_string())))
        .collect()
}

/// A list of user goals with optional train/test labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub goals: Vec<UserGoal>,
    pub split: Option<Vec<Split>>,
}

impl Dataset {
    pub fn new(goals: Vec<UserGoal>) -> Self {
        Dataset { goals, split: None }
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    /// Goals carrying the given split label (empty when unsplit).
    pub fn part(&self, which: Split) -> Vec<&UserGoal> {
        match &self.split {
            None => Vec::new(),
            Some(labels) => self
                .goals
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == which)
                .map(|(g, _)| g)
                .collect(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, goal) in self.goals.iter().enumerate() {
            let record = Record {
                disease_tag: goal.disease.clone(),
                group_id: Some(serde_json::Value::String(goal.group.clone())),
                explicit_symptoms: labels(&goal.explicit),
                implicit_symptoms: labels(&goal.implicit),
                split: self.split.as_ref().map(|s| s[i]),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Loads a dataset file. Blank lines are skipped; record indices in
    /// errors are 1-based line numbers.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file)).map_err(|e| match e {
            Error::MalformedRecord { .. } => e,
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    fn read(reader: impl BufRead) -> Result<Self> {
        let mut goals = Vec::new();
        let mut split = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let index = i + 1;
            let line = line.map_err(|e| Error::io("<dataset>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedRecord { index, reason: e.to_string() })?;
            let convert = |map: &BTreeMap<String, serde_json::Value>| {
                map.iter()
                    .map(|(k, v)| {
                        parse_label(v).map(|s| (k.clone(), s)).ok_or_else(|| Error::MalformedRecord {
                            index,
                            reason: format!("bad label {v} for `{k}`"),
                        })
                    })
                    .collect::<Result<BTreeMap<_, _>>>()
            };
            let explicit = convert(&record.explicit_symptoms)?;
            let implicit = convert(&record.implicit_symptoms)?;
            if let Some(dup) = explicit.keys().find(|k| implicit.contains_key(*k)) {
                return Err(Error::MalformedRecord {
                    index,
                    reason: format!("`{dup}` is both explicit and implicit"),
                });
            }
            let group = match record.group_id {
                None | Some(serde_json::Value::Null) => record.disease_tag.clone(),
                Some(serde_json::Value::String(s)) => s,
                Some(serde_json::Value::Number(n)) => n.to_string(),
                Some(other) => {
                    return Err(Error::MalformedRecord { index, reason: format!("bad group_id {other}") })
                }
            };
            goals.push(UserGoal { disease: record.disease_tag, group, explicit, implicit });
            split.push(record.split);
        }
        let split = if split.iter().all(Option::is_some) && !split.is_empty() {
            Some(split.into_iter().map(Option::unwrap).collect())
        } else if split.iter().all(Option::is_none) {
            None
        } else {
            return Err(Error::MalformedRecord {
                index: split.iter().position(Option::is_none).unwrap_or(0) + 1,
                reason: "split labels must be present on all records or none".into(),
            });
        };
        Ok(Dataset { goals, split })
    }
}

/// Draws one goal for `disease`: each related symptom is true with its table
/// probability; one true symptom becomes explicit, the remaining ones are
/// implicit-true and the false draws are kept as implicit-false.
pub fn sample_user_goal<R: Rng + ?Sized>(
    disease: DiseaseId,
    cpt: &ConditionalProbabilityTable,
    rng: &mut R,
    retry_budget: usize,
) -> Result<UserGoal> {
    let onto = cpt.ontology();
    if disease.0 >= onto.num_diseases() {
        return Err(Error::UnknownDisease(format!("#{}", disease.0)));
    }
    let row = cpt.row(disease);
    for _ in 0..retry_budget {
        let draws: Vec<(SymptomId, bool)> = row.iter().map(|&(s, p)| (s, rng.gen::<f64>() < p)).collect();
        let trues: Vec<SymptomId> = draws.iter().filter(|(_, t)| *t).map(|(s, _)| *s).collect();
        let Some(&explicit) = trues.choose(rng) else {
            continue;
        };
        let mut goal = UserGoal {
            disease: onto.disease_name(disease).to_string(),
            group: onto.group_name(onto.group_of(disease)).to_string(),
            explicit: BTreeMap::new(),
            implicit: BTreeMap::new(),
        };
        goal.explicit.insert(onto.symptom_name(explicit).to_string(), SymptomStatus::True);
        for (s, t) in draws {
            if s == explicit {
                continue;
            }
            let status = if t { SymptomStatus::True } else { SymptomStatus::False };
            goal.implicit.insert(onto.symptom_name(s).to_string(), status);
        }
        return Ok(goal);
    }
    Err(Error::RetryBudgetExhausted {
        disease: onto.disease_name(disease).to_string(),
        attempts: retry_budget,
    })
}

/// `goals_per_disease` goals for every disease, in disease order. Disease `d`
/// draws from its own sub-stream of `seed`, so the result is a pure function
/// of `(table, count, seed)`.
pub fn generate_dataset(
    cpt: &ConditionalProbabilityTable,
    goals_per_disease: usize,
    seed: u64,
) -> Result<Dataset> {
    if goals_per_disease == 0 {
        return Err(Error::InvalidConfig("goals_per_disease must be at least 1".into()));
    }
    let per_disease: Vec<Vec<UserGoal>> = (0..cpt.ontology().num_diseases())
        .into_par_iter()
        .map(|d| {
            let mut rng = rng::stream(seed, Stream::Datagen, d as u64);
            (0..goals_per_disease)
                .map(|_| sample_user_goal(DiseaseId(d), cpt, &mut rng, DEFAULT_RETRY_BUDGET))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Dataset::new(per_disease.into_iter().flatten().collect()))
}

/// Stratified split: each disease contributes `ratio` of its goals to the
/// training part (largest-remainder rounding, so both every disease and the
/// overall total are within one goal of the exact proportion).
pub fn split_train_test<R: Rng + ?Sized>(dataset: &Dataset, ratio: f64, rng: &mut R) -> Result<Dataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let mut by_disease: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for (i, g) in dataset.goals.iter().enumerate() {
        let entry = by_disease.entry(&g.disease).or_default();
        if entry.is_empty() {
            order.push(&g.disease);
        }
        entry.push(i);
    }
    let total = dataset.len();
    let target = (ratio * total as f64).round() as usize;
    let mut quotas: Vec<(usize, f64)> = order
        .iter()
        .map(|d| {
            let exact = ratio * by_disease[d].len() as f64;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = quotas.iter().map(|q| q.0).sum();
    let mut ranked: Vec<usize> = (0..quotas.len()).collect();
    ranked.sort_by(|&a, &b| quotas[b].1.partial_cmp(&quotas[a].1).unwrap().then(a.cmp(&b)));
    for &k in ranked.iter().cycle().take(ranked.len()) {
        if assigned >= target {
            break;
        }
        if quotas[k].1 > 0.0 {
            quotas[k].0 += 1;
            assigned += 1;
        }
    }

    let mut labels = vec![Split::Test; total];
    for (k, d) in order.iter().enumerate() {
        let mut members = by_disease[d].clone();
        members.shuffle(rng);
        for &i in &members[..quotas[k].0] {
            labels[i] = Split::Train;
        }
    }
    Ok(Dataset { goals: dataset.goals.clone(), split: Some(labels) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub goals: usize,
    pub diseases: usize,
    pub avg_explicit: f64,
    pub avg_implicit_true: f64,
    pub symptoms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub groups: Vec<GroupStats>,
    pub total: GroupStats,
}

fn group_stats<'a>(name: &str, goals: impl Iterator<Item = &'a UserGoal>) -> GroupStats {
    let mut count = 0usize;
    let mut explicit = 0usize;
    let mut implicit = 0usize;
    let mut diseases = BTreeSet::new();
    let mut symptoms = BTreeSet::new();
    for g in goals {
        count += 1;
        explicit += g.explicit.len();
        implicit += g.implicit_true();
        diseases.insert(g.disease.as_str());
        symptoms.extend(g.explicit.keys().map(String::as_str));
        symptoms.extend(g.implicit.keys().map(String::as_str));
    }
    let denom = count.max(1) as f64;
    GroupStats {
        group: name.to_string(),
        goals: count,
        diseases: diseases.len(),
        avg_explicit: explicit as f64 / denom,
        avg_implicit_true: implicit as f64 / denom,
        symptoms: symptoms.len(),
    }
}

/// Per-group and overall counts. Groups are listed in order of first
/// appearance; groups without goals never appear.
pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut order: Vec<&str> = Vec::new();
    for g in &dataset.goals {
        if !order.contains(&g.group.as_str()) {
            order.push(&g.group);
        }
    }
    let groups = order
        .iter()
        .map(|name| group_stats(name, dataset.goals.iter().filter(|g| g.group == *name)))
        .collect();
    DatasetStats { groups, total: group_stats("Total", dataset.goals.iter()) }
}

impl DatasetStats {
    /// Aligned text table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let header = ["group", "# goals", "# diseases", "ave. # ex. sym.", "ave. # im. sym.", "# sym."];
        let mut rows: Vec<[String; 6]> = Vec::new();
        for g in self.groups.iter().chain(std::iter::once(&self.total)) {
            rows.push([
                g.group.clone(),
                g.goals.to_string(),
                g.diseases.to_string(),
                format!("{:.2}", g.avg_explicit),
                format!("{:.2}", g.avg_implicit_true),
                g.symptoms.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..6)
            .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap())
            .collect();
        let line = |cells: &[&str]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
        };
        let _ = writeln!(out, "{}", line(&header));
        let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        for r in &rows {
            let cells: Vec<&str> = r.iter().map(String::as_str).collect();
            let _ = writeln!(out, "{}", line(&cells));
        }
        out
    }
}

/// A goal resolved against an ontology, ready for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub disease: DiseaseId,
    pub group: GroupId,
    pub explicit: Vec<(SymptomId, SymptomStatus)>,
    pub implicit: Vec<(SymptomId, SymptomStatus)>,
    answers: Vec<SymptomStatus>,
    implicit_true: Vec<bool>,
}

impl Goal {
    pub fn resolve(goal: &UserGoal, ontology: &Ontology) -> Result<Self> {
        let disease = ontology.disease_id(&goal.disease)?;
        let group = ontology.group_of(disease);
        if ontology.group_name(group) != goal.group {
            return Err(Error::InvalidOntology(format!(
                "goal of `{}` says group `{}`, ontology says `{}`",
                goal.disease,
                goal.group,
                ontology.group_name(group)
            )));
        }
        let mut answers = vec![SymptomStatus::Unknown; ontology.num_symptoms()];
        let mut implicit_true = vec![false; ontology.num_symptoms()];
        let mut explicit = Vec::with_capacity(goal.explicit.len());
        for (name, &status) in &goal.explicit {
            let s = ontology.symptom_id(name)?;
            explicit.push((s, status));
            answers[s.0] = status;
        }
        explicit.sort_by_key(|(s, _)| *s);
        let mut implicit = Vec::with_capacity(goal.implicit.len());
        for (name, &status) in &goal.implicit {
            let s = ontology.symptom_id(name)?;
            implicit.push((s, status));
            answers[s.0] = status;
            implicit_true[s.0] = status == SymptomStatus::True;
        }
        implicit.sort_by_key(|(s, _)| *s);
        Ok(Goal { disease, group, explicit, implicit, answers, implicit_true })
    }

    pub fn resolve_all<'a>(goals: impl IntoIterator<Item = &'a UserGoal>, ontology: &Ontology) -> Result<Vec<Goal>> {
        goals.into_iter().map(|g| Goal::resolve(g, ontology)).collect()
    }

    /// What the patient says when asked about `s`.
    pub fn answer(&self, s: SymptomId) -> SymptomStatus {
        self.answers[s.0]
    }

    pub fn is_implicit_true(&self, s: SymptomId) -> bool {
        self.implicit_true[s.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn one_disease_table(probs: &[f64]) -> ConditionalProbabilityTable {
        let symptoms: BTreeMap<String, f64> =
            probs.iter().enumerate().map(|(i, p)| (format!("s{i}"), *p)).collect();
        let file = TableFile {
            groups: vec![TableGroup {
                id: "g".into(),
                diseases: vec![TableDisease { name: "d".into(), symptoms }],
            }],
        };
        ConditionalProbabilityTable::from_json_str(&serde_json::to_string(&file).unwrap()).unwrap()
    }

    #[test]
    fn certain_single_symptom() {
        let cpt = one_disease_table(&[1.0]);
        let goal = sample_user_goal(DiseaseId(0), &cpt, &mut stream(1, Stream::Datagen, 0), 100).unwrap();
        assert_eq!(goal.explicit.len(), 1);
        assert_eq!(goal.explicit["s0"], SymptomStatus::True);
        assert_eq!(goal.implicit_true(), 0);
    }

    #[test]
    fn impossible_goal_is_rejected() {
        let cpt = one_disease_table(&[0.0, 0.0]);
        match sample_user_goal(DiseaseId(0), &cpt, &mut stream(1, Stream::Datagen, 0), 100) {
            Err(Error::RetryBudgetExhausted { disease, attempts }) => {
                assert_eq!(disease, "d");
                assert_eq!(attempts, 100);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn true_frequencies_match_table() {
        let cpt = one_disease_table(&[0.5, 0.5, 0.5, 0.5]);
        let mut rng = stream(3, Stream::Datagen, 0);
        let n = 100_000;
        let mut hits = [0usize; 4];
        for _ in 0..n {
            let g = sample_user_goal(DiseaseId(0), &cpt, &mut rng, 100).unwrap();
            for (k, h) in hits.iter_mut().enumerate() {
                let name = format!("s{k}");
                if g.explicit.contains_key(&name) || g.implicit.get(&name) == Some(&SymptomStatus::True) {
                    *h += 1;
                }
            }
        }
        // Zero-true draws are rejected, so each count estimates the
        // conditional rate 0.5 / (1 - 0.5^4) rather than the raw 0.5.
        let expected = 0.5 / (1.0 - 0.5f64.powi(4)) * n as f64;
        for h in hits {
            assert!((h as f64 - expected).abs() <= 0.02 * expected, "count {h} vs {expected}");
        }
    }

    #[test]
    fn single_disease_dataset() {
        let cpt = one_disease_table(&[0.7, 0.3]);
        let ds = generate_dataset(&cpt, 5, 11).unwrap();
        assert_eq!(ds.len(), 5);
        assert!(ds.goals.iter().all(|g| g.disease == "d"));
        assert!(matches!(generate_dataset(&cpt, 0, 11), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let cpt = ConditionalProbabilityTable::toy();
        let a = generate_dataset(&cpt, 20, 7).unwrap().to_jsonl();
        let b = generate_dataset(&cpt, 20, 7).unwrap().to_jsonl();
        assert_eq!(a, b);
        let c = generate_dataset(&cpt, 20, 8).unwrap().to_jsonl();
        assert_ne!(a, c);
    }

    #[test]
    fn jsonl_roundtrip_and_rd_records() {
        let cpt = ConditionalProbabilityTable::toy();
        let ds = generate_dataset(&cpt, 3, 1).unwrap();
        let ds = split_train_test(&ds, 0.8, &mut stream(1, Stream::Split, 0)).unwrap();
        assert_eq!(Dataset::from_jsonl(&ds.to_jsonl()).unwrap(), ds);

        let rd = r#"{"disease_tag":"URI","explicit_symptoms":{"cough":"True","fever":"False"},"implicit_symptoms":{"runny nose":"UNK","sneeze":true}}"#;
        let parsed = Dataset::from_jsonl(rd).unwrap();
        let g = &parsed.goals[0];
        assert_eq!(g.group, "URI");
        assert_eq!(g.explicit.len(), 2);
        assert_eq!(g.implicit["runny nose"], SymptomStatus::Unknown);
        assert_eq!(g.implicit["sneeze"], SymptomStatus::True);
        assert!(parsed.split.is_none());
    }

    #[test]
    fn malformed_records_report_line() {
        let text = "{\"disease_tag\":\"a\"}\n\n{\"disease_tag\":\"b\",\"implicit_symptoms\":{\"x\":\"maybe\"}}\n";
        match Dataset::from_jsonl(text) {
            Err(Error::MalformedRecord { index, .. }) => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
        match Dataset::from_jsonl("not json") {
            Err(Error::MalformedRecord { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn goals_for(counts: &[usize]) -> Dataset {
        let goals = counts
            .iter()
            .enumerate()
            .flat_map(|(d, &n)| {
                (0..n).map(move |_| UserGoal {
                    disease: format!("d{d}"),
                    group: "g".into(),
                    explicit: BTreeMap::new(),
                    implicit: BTreeMap::new(),
                })
            })
            .collect();
        Dataset::new(goals)
    }

    #[test]
    fn split_examples() {
        let ds = goals_for(&[10]);
        let split = split_train_test(&ds, 0.8, &mut stream(0, Stream::Split, 0)).unwrap();
        assert_eq!(split.part(Split::Train).len(), 8);
        assert_eq!(split.part(Split::Test).len(), 2);

        let ds = goals_for(&[25, 25, 25, 25]);
        let split = split_train_test(&ds, 0.8, &mut stream(0, Stream::Split, 0)).unwrap();
        for d in 0..4 {
            let name = format!("d{d}");
            let train = split.part(Split::Train).iter().filter(|g| g.disease == name).count();
            assert!((train as f64 - 20.0).abs() <= 1.0);
        }
        assert!(split_train_test(&ds, 1.0, &mut stream(0, Stream::Split, 0)).is_err());
    }

    #[test]
    fn stats_examples() {
        let goal = UserGoal {
            disease: "Cerebral edema".into(),
            group: "6".into(),
            explicit: [("headache".to_string(), SymptomStatus::True)].into(),
            implicit: ["focal weakness", "diminished vision", "vomiting", "loss of sensation"]
                .iter()
                .map(|s| (s.to_string(), SymptomStatus::True))
                .collect(),
        };
        let stats = dataset_stats(&Dataset::new(vec![goal]));
        assert_eq!(stats.groups.len(), 1);
        assert_eq!(stats.total.avg_implicit_true, 4.0);
        assert_eq!(stats.total.symptoms, 5);
        assert!(stats.render().contains("Total"));
    }

    #[test]
    fn stats_match_recount() {
        let cpt = ConditionalProbabilityTable::toy();
        let ds = generate_dataset(&cpt, 40, 5).unwrap();
        let stats = dataset_stats(&ds);
        let onto = cpt.ontology();
        assert_eq!(stats.groups.len(), onto.num_groups());
        for gs in &stats.groups {
            let mut n = 0;
            let mut im = 0;
            for g in ds.goals.iter().filter(|g| g.group == gs.group) {
                n += 1;
                im += g.implicit.values().filter(|v| **v == SymptomStatus::True).count();
            }
            assert_eq!(gs.goals, n);
            assert!((gs.avg_implicit_true - im as f64 / n as f64).abs() < 1e-12);
            assert_eq!(gs.diseases, 4);
        }
        assert_eq!(stats.total.goals, 40 * onto.num_diseases());
        assert!(ds.goals.iter().all(|g| g.explicit.len() == 1
            && g.explicit.values().all(|v| *v == SymptomStatus::True)
            && g.explicit.keys().all(|k| !g.implicit.contains_key(k))));
    }

    #[test]
    fn resolved_goal_answers() {
        let cpt = ConditionalProbabilityTable::toy();
        let onto = cpt.ontology();
        let ds = generate_dataset(&cpt, 2, 3).unwrap();
        let goal = Goal::resolve(&ds.goals[0], onto).unwrap();
        let (s, st) = goal.explicit[0];
        assert_eq!(st, SymptomStatus::True);
        assert_eq!(goal.answer(s), SymptomStatus::True);
        for (name, status) in &ds.goals[0].implicit {
            let id = onto.symptom_id(name).unwrap();
            assert_eq!(goal.answer(id), *status);
        }
    }
}
