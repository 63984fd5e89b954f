/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SYMCHECK_H
#define SYMCHECK_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * A patient's answer to a symptom question.
 */
typedef enum SymcheckAnswer {
  SYMCHECK_ANSWER_YES = 0,
  SYMCHECK_ANSWER_NO = 1,
  SYMCHECK_ANSWER_NOT_SURE = 2,
} SymcheckAnswer;

typedef enum SymcheckPromptKind {
  /**
   * The agent asks about `symptom`.
   */
  SYMCHECK_PROMPT_KIND_ASK = 0,
  /**
   * The agent informs `disease`; the session is over.
   */
  SYMCHECK_PROMPT_KIND_DIAGNOSIS = 1,
  /**
   * The session ended without a diagnosis; see `status`.
   */
  SYMCHECK_PROMPT_KIND_ENDED = 2,
} SymcheckPromptKind;

typedef enum SymcheckSessionStatus {
  SYMCHECK_SESSION_STATUS_ONGOING = 0,
  SYMCHECK_SESSION_STATUS_DIAGNOSED = 1,
  SYMCHECK_SESSION_STATUS_MAX_TURNS_REACHED = 2,
  SYMCHECK_SESSION_STATUS_REPEATED_ACTION = 3,
  SYMCHECK_SESSION_STATUS_ABORTED = 4,
} SymcheckSessionStatus;

/**
 * Result code of every fallible call.
 */
typedef enum SymcheckStatus {
  SYMCHECK_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  SYMCHECK_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was out of range or not valid UTF-8.
   */
  SYMCHECK_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read or written.
   */
  SYMCHECK_STATUS_IO = 3,
  /**
   * A file was read but its content is malformed.
   */
  SYMCHECK_STATUS_PARSE = 4,
  /**
   * A checkpoint directory is missing parts or inconsistent.
   */
  SYMCHECK_STATUS_CHECKPOINT = 5,
  /**
   * The call does not fit the session's current state.
   */
  SYMCHECK_STATUS_INVALID_STATE = 6,
  /**
   * A panic was caught at the boundary.
   */
  SYMCHECK_STATUS_INTERNAL = 7,
} SymcheckStatus;

/**
 * A loaded policy checkpoint.
 */
typedef struct SymcheckPolicy SymcheckPolicy;

/**
 * One diagnosis dialogue with outside answers.
 */
typedef struct SymcheckSession SymcheckSession;

/**
 * Metrics of a greedy evaluation.
 */
typedef struct SymcheckEvalReport {
  size_t episodes;
  size_t successes;
  double success_rate;
  double average_reward;
  double average_turns;
} SymcheckEvalReport;

/**
 * The agent's next act.
 */
typedef struct SymcheckPrompt {
  enum SymcheckPromptKind kind;
  enum SymcheckSessionStatus status;
  /**
   * Symptom index, valid for `Ask`.
   */
  size_t symptom;
  /**
   * Group of the asking worker, or -1 for the flat agent.
   */
  int64_t group;
  /**
   * Disease index, valid for `Diagnosis`.
   */
  size_t disease;
  /**
   * Up to three ranked candidates, valid for `Diagnosis`.
   */
  size_t top_count;
  size_t top_diseases[3];
  /**
   * Classifier probabilities, or Q-values for the flat agent.
   */
  double top_scores[3];
} SymcheckPrompt;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *symcheck_last_error(void);

/**
 * Library version as a static string.
 */
const char *symcheck_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer returned by this library and not yet freed.
 */
void symcheck_string_free(char *s);

/**
 * Samples `per_disease` goals per disease from a probability table (the
 * bundled toy table when `table_path` is null), labels a stratified
 * `train_ratio` share as training goals, and writes the dataset and its
 * ontology.
 *
 * # Safety
 * Path arguments must be null or valid NUL-terminated strings.
 */
enum SymcheckStatus symcheck_generate_dataset(const char *table_path,
                                              size_t per_disease,
                                              uint64_t seed,
                                              double train_ratio,
                                              const char *out_path,
                                              const char *ontology_path);

/**
 * Loads a checkpoint directory.
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SymcheckStatus symcheck_policy_load(const char *dir, struct SymcheckPolicy **out);

/**
 * Releases a policy. Sessions opened from it stay usable.
 *
 * # Safety
 * `policy` must be null or a handle from [`symcheck_policy_load`] not yet
 * freed.
 */
void symcheck_policy_free(struct SymcheckPolicy *policy);

/**
 * Whether the policy is hierarchical (1) or flat (0); -1 on a null handle.
 *
 * # Safety
 * `policy` must be null or a live handle.
 */
int32_t symcheck_policy_is_hierarchical(const struct SymcheckPolicy *policy);

/**
 * Number of symptoms in the policy's ontology; 0 on a null handle.
 *
 * # Safety
 * `policy` must be null or a live handle.
 */
size_t symcheck_policy_num_symptoms(const struct SymcheckPolicy *policy);

/**
 * Number of diseases in the policy's ontology; 0 on a null handle.
 *
 * # Safety
 * `policy` must be null or a live handle.
 */
size_t symcheck_policy_num_diseases(const struct SymcheckPolicy *policy);

/**
 * Name of symptom `index`, to be freed with [`symcheck_string_free`].
 *
 * # Safety
 * `policy` must be a live handle and `out` a valid pointer.
 */
enum SymcheckStatus symcheck_symptom_name(const struct SymcheckPolicy *policy,
                                          size_t index,
                                          char **out);

/**
 * Name of disease `index`, to be freed with [`symcheck_string_free`].
 *
 * # Safety
 * `policy` must be a live handle and `out` a valid pointer.
 */
enum SymcheckStatus symcheck_disease_name(const struct SymcheckPolicy *policy,
                                          size_t index,
                                          char **out);

/**
 * Index of the symptom called `name`.
 *
 * # Safety
 * `policy` must be a live handle, `name` a valid string, `out` a valid
 * pointer.
 */
enum SymcheckStatus symcheck_symptom_index(const struct SymcheckPolicy *policy,
                                           const char *name,
                                           size_t *out);

/**
 * Greedy evaluation on a dataset file; `split` is 0 for all goals, 1 for
 * training goals, 2 for test goals.
 *
 * # Safety
 * `policy` must be a live handle, `data_path` a valid string, `out` a
 * valid pointer.
 */
enum SymcheckStatus symcheck_evaluate(const struct SymcheckPolicy *policy,
                                      const char *data_path,
                                      uint32_t split,
                                      bool mask_known,
                                      struct SymcheckEvalReport *out);

/**
 * Opens a session. `symptoms[i]` was self-reported with `answers[i]`;
 * both arrays may be null when `count` is 0.
 *
 * # Safety
 * `policy` must be a live handle, the arrays must hold `count` elements,
 * and `out` must be a valid pointer.
 */
enum SymcheckStatus symcheck_session_new(const struct SymcheckPolicy *policy,
                                         const size_t *symptoms,
                                         const enum SymcheckAnswer *answers,
                                         size_t count,
                                         bool mask_known,
                                         struct SymcheckSession **out);

/**
 * Releases a session.
 *
 * # Safety
 * `session` must be null or a handle from [`symcheck_session_new`] not yet
 * freed.
 */
void symcheck_session_free(struct SymcheckSession *session);

/**
 * The agent's next act. An unanswered question is returned again.
 *
 * # Safety
 * `session` must be a live handle and `out` a valid pointer.
 */
enum SymcheckStatus symcheck_session_next(struct SymcheckSession *session,
                                          struct SymcheckPrompt *out);

/**
 * Answers the pending question.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum SymcheckStatus symcheck_session_answer(struct SymcheckSession *session,
                                            enum SymcheckAnswer answer);

/**
 * Ends the session without a diagnosis.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum SymcheckStatus symcheck_session_abort(struct SymcheckSession *session);

/**
 * Number of turns taken so far; 0 on a null handle.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
size_t symcheck_session_turns(const struct SymcheckSession *session);

/**
 * Transcript table of the turns so far, to be freed with
 * [`symcheck_string_free`].
 *
 * # Safety
 * `session` must be a live handle and `out` a valid pointer.
 */
enum SymcheckStatus symcheck_session_transcript(const struct SymcheckSession *session, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYMCHECK_H */
