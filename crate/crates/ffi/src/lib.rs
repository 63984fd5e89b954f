//! C interface to the symcheck engine.
//!
//! Every fallible call returns a [`SymcheckStatus`]; on failure the message
//! is available from [`symcheck_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings handed
//! out by the library are released with [`symcheck_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use symcheck::agent::{Actor, Policy};
use symcheck::datagen::{generate_dataset, split_train_test, ConditionalProbabilityTable, Dataset, Goal, Split};
use symcheck::domain::{DiseaseId, SymptomId, SymptomStatus};
use symcheck::evaluation::{evaluate, render_turns};
use symcheck::rng::{stream, Stream};
use symcheck::session::{DiagnosisSession, Prompt, SessionStatus};
use symcheck::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymcheckStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// An argument was out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// A file was read but its content is malformed.
    Parse = 4,
    /// A checkpoint directory is missing parts or inconsistent.
    Checkpoint = 5,
    /// The call does not fit the session's current state.
    InvalidState = 6,
    /// A panic was caught at the boundary.
    Internal = 7,
}

/// A patient's answer to a symptom question.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymcheckAnswer {
    Yes = 0,
    No = 1,
    NotSure = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymcheckPromptKind {
    /// The agent asks about `symptom`.
    Ask = 0,
    /// The agent informs `disease`; the session is over.
    Diagnosis = 1,
    /// The session ended without a diagnosis; see `status`.
    Ended = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymcheckSessionStatus {
    Ongoing = 0,
    Diagnosed = 1,
    MaxTurnsReached = 2,
    RepeatedAction = 3,
    Aborted = 4,
}

/// The agent's next act.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SymcheckPrompt {
    pub kind: SymcheckPromptKind,
    pub status: SymcheckSessionStatus,
    /// Symptom index, valid for `Ask`.
    pub symptom: usize,
    /// Group of the asking worker, or -1 for the flat agent.
    pub group: i64,
    /// Disease index, valid for `Diagnosis`.
    pub disease: usize,
    /// Up to three ranked candidates, valid for `Diagnosis`.
    pub top_count: usize,
    pub top_diseases: [usize; 3],
    /// Classifier probabilities, or Q-values for the flat agent.
    pub top_scores: [f64; 3],
}

/// Metrics of a greedy evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SymcheckEvalReport {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub average_reward: f64,
    pub average_turns: f64,
}

/// A loaded policy checkpoint.
pub struct SymcheckPolicy {
    inner: Arc<Policy>,
}

/// One diagnosis dialogue with outside answers.
pub struct SymcheckSession {
    inner: DiagnosisSession,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(error: &Error) -> SymcheckStatus {
    match error {
        Error::Io { .. } => SymcheckStatus::Io,
        Error::Json { .. } | Error::MalformedRecord { .. } | Error::InvalidTable(_) | Error::InvalidOntology(_) => {
            SymcheckStatus::Parse
        }
        Error::Checkpoint { .. } | Error::ShapeMismatch { .. } => SymcheckStatus::Checkpoint,
        _ => SymcheckStatus::InvalidArgument,
    }
}

struct Fail(SymcheckStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SymcheckStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SymcheckStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal error");
            SymcheckStatus::Internal
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(SymcheckStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(SymcheckStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

fn into_c_string(text: String) -> Result<*mut c_char, Fail> {
    CString::new(text)
        .map(CString::into_raw)
        .map_err(|_| Fail(SymcheckStatus::Internal, "string contains a NUL byte".into()))
}

fn session_status(s: SessionStatus) -> SymcheckSessionStatus {
    match s {
        SessionStatus::Ongoing => SymcheckSessionStatus::Ongoing,
        SessionStatus::Diagnosed => SymcheckSessionStatus::Diagnosed,
        SessionStatus::MaxTurnsReached => SymcheckSessionStatus::MaxTurnsReached,
        SessionStatus::RepeatedAction => SymcheckSessionStatus::RepeatedAction,
        SessionStatus::Aborted => SymcheckSessionStatus::Aborted,
    }
}

/// Message of the most recent call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn symcheck_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn symcheck_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn symcheck_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Samples `per_disease` goals per disease from a probability table (the
/// bundled toy table when `table_path` is null), labels a stratified
/// `train_ratio` share as training goals, and writes the dataset and its
/// ontology.
///
/// # Safety
/// Path arguments must be null or valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn symcheck_generate_dataset(
    table_path: *const c_char,
    per_disease: usize,
    seed: u64,
    train_ratio: f64,
    out_path: *const c_char,
    ontology_path: *const c_char,
) -> SymcheckStatus {
    guard(|| {
        let out = path_arg(out_path, "out_path")?;
        let onto_out = path_arg(ontology_path, "ontology_path")?;
        let cpt = if table_path.is_null() {
            ConditionalProbabilityTable::toy()
        } else {
            ConditionalProbabilityTable::load(path_arg(table_path, "table_path")?)?
        };
        let data = generate_dataset(&cpt, per_disease, seed)?;
        let data = split_train_test(&data, train_ratio, &mut stream(seed, Stream::Split, 0))?;
        data.save(&out)?;
        cpt.ontology().save(&onto_out)?;
        Ok(())
    })
}

/// Loads a checkpoint directory.
///
/// # Safety
/// `dir` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symcheck_policy_load(dir: *const c_char, out: *mut *mut SymcheckPolicy) -> SymcheckStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dir = path_arg(dir, "dir")?;
        let (policy, _) = Policy::load(dir)?;
        *out = Box::into_raw(Box::new(SymcheckPolicy { inner: Arc::new(policy) }));
        Ok(())
    })
}

/// Releases a policy. Sessions opened from it stay usable.
///
/// # Safety
/// `policy` must be null or a handle from [`symcheck_policy_load`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn symcheck_policy_free(policy: *mut SymcheckPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Whether the policy is hierarchical (1) or flat (0); -1 on a null handle.
///
/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn symcheck_policy_is_hierarchical(policy: *const SymcheckPolicy) -> i32 {
    match policy.as_ref() {
        Some(p) => matches!(*p.inner, Policy::Hierarchical(_)) as i32,
        None => -1,
    }
}

/// Number of symptoms in the policy's ontology; 0 on a null handle.
///
/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn symcheck_policy_num_symptoms(policy: *const SymcheckPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.inner.ontology().num_symptoms())
}

/// Number of diseases in the policy's ontology; 0 on a null handle.
///
/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn symcheck_policy_num_diseases(policy: *const SymcheckPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.inner.ontology().num_diseases())
}

/// Name of symptom `index`, to be freed with [`symcheck_string_free`].
///
/// # Safety
/// `policy` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symcheck_symptom_name(policy: *const SymcheckPolicy, index: usize, out: *mut *mut c_char) -> SymcheckStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let onto = p.inner.ontology();
        if index >= onto.num_symptoms() {
            return Err(Error::IndexOutOfRange { index, len: onto.num_symptoms() }.into());
        }
        *out = into_c_string(onto.symptom_name(SymptomId(index)).to_string())?;
        Ok(())
    })
}

/// Name of disease `index`, to be freed with [`symcheck_string_free`].
///
/// # Safety
/// `policy` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symcheck_disease_name(policy: *const SymcheckPolicy, index: usize, out: *mut *mut c_char) -> SymcheckStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let onto = p.inner.ontology();
        if index >= onto.num_diseases() {
            return Err(Error::IndexOutOfRange { index, len: onto.num_diseases() }.into());
        }
        *out = into_c_string(onto.disease_name(DiseaseId(index)).to_string())?;
        Ok(())
    })
}

/// Index of the symptom called `name`.
///
/// # Safety
/// `policy` must be a live handle, `name` a valid string, `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn symcheck_symptom_index(policy: *const SymcheckPolicy, name: *const c_char, out: *mut usize) -> SymcheckStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let name = path_arg(name, "name")?;
        *out = p.inner.ontology().symptom_id(&name.to_string_lossy())?.0;
        Ok(())
    })
}

/// Greedy evaluation on a dataset file; `split` is 0 for all goals, 1 for
/// training goals, 2 for test goals.
///
/// # Safety
/// `policy` must be a live handle, `data_path` a valid string, `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symcheck_evaluate(
    policy: *const SymcheckPolicy,
    data_path: *const c_char,
    split: u32,
    mask_known: bool,
    out: *mut SymcheckEvalReport,
) -> SymcheckStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let data = Dataset::load(path_arg(data_path, "data_path")?)?;
        let part: Vec<_> = match split {
            0 => data.goals.iter().collect(),
            1 => data.part(Split::Train),
            2 => data.part(Split::Test),
            _ => return Err(Fail(SymcheckStatus::InvalidArgument, format!("split {split} is not 0, 1 or 2"))),
        };
        if part.is_empty() {
            return Err(Error::EmptyGoalSource.into());
        }
        let goals = Goal::resolve_all(part, p.inner.ontology())?;
        let (report, _) = evaluate(&p.inner, &goals, &Default::default(), mask_known, 1)?;
        *out = SymcheckEvalReport {
            episodes: report.episodes,
            successes: report.successes,
            success_rate: report.success_rate,
            average_reward: report.average_reward.unwrap_or(0.0),
            average_turns: report.average_turns.unwrap_or(0.0),
        };
        Ok(())
    })
}

/// Opens a session. `symptoms[i]` was self-reported with `answers[i]`;
/// both arrays may be null when `count` is 0.
///
/// # Safety
/// `policy` must be a live handle, the arrays must hold `count` elements,
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symcheck_session_new(
    policy: *const SymcheckPolicy,
    symptoms: *const usize,
    answers: *const SymcheckAnswer,
    count: usize,
    mask_known: bool,
    out: *mut *mut SymcheckSession,
) -> SymcheckStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if count > 0 && (symptoms.is_null() || answers.is_null()) {
            return Err(null("symptoms"));
        }
        let explicit: Vec<(SymptomId, SymptomStatus)> = (0..count)
            .map(|i| (SymptomId(*symptoms.add(i)), answer_status(*answers.add(i))))
            .collect();
        let session = DiagnosisSession::new(Arc::clone(&p.inner), &explicit, Default::default(), mask_known)?;
        *out = Box::into_raw(Box::new(SymcheckSession { inner: session }));
        Ok(())
    })
}

fn answer_status(a: SymcheckAnswer) -> SymptomStatus {
    match a {
        SymcheckAnswer::Yes => SymptomStatus::True,
        SymcheckAnswer::No => SymptomStatus::False,
        SymcheckAnswer::NotSure => SymptomStatus::Unknown,
    }
}

/// Releases a session.
///
/// # Safety
/// `session` must be null or a handle from [`symcheck_session_new`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn symcheck_session_free(session: *mut SymcheckSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// The agent's next act. An unanswered question is returned again.
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symcheck_session_next(session: *mut SymcheckSession, out: *mut SymcheckPrompt) -> SymcheckStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let prompt = s.inner.next_prompt()?;
        let mut p = SymcheckPrompt {
            kind: SymcheckPromptKind::Ended,
            status: session_status(s.inner.status()),
            symptom: 0,
            group: -1,
            disease: 0,
            top_count: 0,
            top_diseases: [0; 3],
            top_scores: [0.0; 3],
        };
        match prompt {
            Prompt::Ask { symptom, actor } => {
                p.kind = SymcheckPromptKind::Ask;
                p.symptom = symptom.0;
                if let Actor::Worker(g) = actor {
                    p.group = g.0 as i64;
                }
            }
            Prompt::Diagnosis { disease, top, .. } => {
                p.kind = SymcheckPromptKind::Diagnosis;
                p.disease = disease.0;
                p.top_count = top.len().min(3);
                for (i, (d, score)) in top.into_iter().take(3).enumerate() {
                    p.top_diseases[i] = d.0;
                    p.top_scores[i] = score;
                }
            }
            Prompt::Ended(_) => {}
        }
        *out = p;
        Ok(())
    })
}

/// Answers the pending question.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn symcheck_session_answer(session: *mut SymcheckSession, answer: SymcheckAnswer) -> SymcheckStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        s.inner
            .answer(answer_status(answer))
            .map_err(|e| Fail(SymcheckStatus::InvalidState, e.to_string()))
    })
}

/// Ends the session without a diagnosis.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn symcheck_session_abort(session: *mut SymcheckSession) -> SymcheckStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        s.inner.abort();
        Ok(())
    })
}

/// Number of turns taken so far; 0 on a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn symcheck_session_turns(session: *const SymcheckSession) -> usize {
    session.as_ref().map_or(0, |s| s.inner.turn())
}

/// Transcript table of the turns so far, to be freed with
/// [`symcheck_string_free`].
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn symcheck_session_transcript(session: *const SymcheckSession, out: *mut *mut c_char) -> SymcheckStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = if s.inner.turns().is_empty() {
            String::new()
        } else {
            render_turns(s.inner.turns(), s.inner.policy().ontology())?
        };
        *out = into_c_string(text)?;
        Ok(())
    })
}
