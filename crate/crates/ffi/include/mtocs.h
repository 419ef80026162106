#ifndef MTOCS_H
#define MTOCS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call. Values are stable.
 */
typedef enum MtocsStatus {
  MTOCS_STATUS_OK = 0,
  MTOCS_STATUS_NULL_ARGUMENT = 1,
  MTOCS_STATUS_INVALID_UTF8 = 2,
  MTOCS_STATUS_BUFFER_TOO_SMALL = 3,
  MTOCS_STATUS_INVALID_JSON = 4,
  MTOCS_STATUS_VALIDATION = 5,
  MTOCS_STATUS_NOT_FOUND = 6,
  MTOCS_STATUS_CONFLICT = 7,
  MTOCS_STATUS_UNAUTHENTICATED = 8,
  MTOCS_STATUS_UNAUTHORIZED = 9,
  MTOCS_STATUS_EXHAUSTED = 10,
  MTOCS_STATUS_ANALYTICS = 11,
  MTOCS_STATUS_BACKEND = 12,
  MTOCS_STATUS_INTERNAL = 13,
  MTOCS_STATUS_PANIC = 14,
} MtocsStatus;

/**
 * Opaque questionnaire handle.
 */
typedef struct MtocsSchema MtocsSchema;

/**
 * Opaque in-memory service handle.
 */
typedef struct MtocsService MtocsService;

/**
 * Rounded Likert summary.
 */
typedef struct MtocsLikert {
  uint64_t count;
  double mean;
  double sd;
} MtocsLikert;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Code of the last error on this thread (e.g. `id_exhausted`), or null.
 * Valid until the next call on the same thread.
 */
const char *mtocs_last_error_code(void);

/**
 * Message of the last error on this thread, or null.
 */
const char *mtocs_last_error_message(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or came from this library and was not freed before.
 */
void mtocs_string_free(char *s);

/**
 * Writes the participant id after `current` (or the first id when
 * `current` is null) into `out`.
 *
 * # Safety
 * `current` is null or a C string; `out` has `out_len` writable bytes.
 */
enum MtocsStatus mtocs_next_participant_id(const char *current, char *out, size_t out_len);

/**
 * Writes the visit id of visit number `seq` (1-999) of a participant.
 *
 * # Safety
 * `participant_id` is a C string; `out` has `out_len` writable bytes.
 */
enum MtocsStatus mtocs_visit_id(const char *participant_id,
                                uint16_t seq,
                                char *out,
                                size_t out_len);

/**
 * Writes the letter template key for a grade slug (`moderate-npdr`) and a
 * language token (`spanish`).
 *
 * # Safety
 * Both inputs are C strings; `out` has `out_len` writable bytes.
 */
enum MtocsStatus mtocs_select_letter(const char *grade,
                                     const char *language,
                                     char *out,
                                     size_t out_len);

/**
 * `100 * part / whole`, rounded half-up to 2 decimals.
 *
 * # Safety
 * `out` is a valid place to store a double.
 */
enum MtocsStatus mtocs_pct(uint64_t part, uint64_t whole, double *out);

/**
 * Count, mean and sample SD of 1-5 responses.
 *
 * # Safety
 * `values` points to `len` bytes; `out` is a valid place to store the result.
 */
enum MtocsStatus mtocs_likert_summary(const uint8_t *values, size_t len, struct MtocsLikert *out);

/**
 * The shipped screening questionnaire.
 */
struct MtocsSchema *mtocs_schema_builtin(void);

/**
 * Parses and checks a questionnaire document.
 *
 * # Safety
 * `json_text` is a C string; `out` is a valid place to store a pointer.
 */
enum MtocsStatus mtocs_schema_from_json(const char *json_text, struct MtocsSchema **out);

/**
 * # Safety
 * `schema` is null or a handle from this library not freed before.
 */
void mtocs_schema_free(struct MtocsSchema *schema);

/**
 * JSON array of question ids shown for an answer set (JSON).
 *
 * # Safety
 * `schema` is a live handle; `answers` a C string; `out` a valid place.
 */
enum MtocsStatus mtocs_schema_visible_questions(const struct MtocsSchema *schema,
                                                const char *answers,
                                                char **out);

/**
 * JSON validation report (`{"violations": [...]}`) for an answer set.
 *
 * # Safety
 * `schema` is a live handle; `answers` a C string; `out` a valid place.
 */
enum MtocsStatus mtocs_schema_validate(const struct MtocsSchema *schema,
                                       const char *answers,
                                       char **out);

/**
 * A service with in-memory storage, the shipped questionnaire and letters,
 * and no accounts.
 */
struct MtocsService *mtocs_service_new_in_memory(void);

/**
 * # Safety
 * `service` is null or a handle from this library not freed before.
 */
void mtocs_service_free(struct MtocsService *service);

/**
 * Adds an account from JSON
 * `{"account_id","username","password","role","organization_id"}`.
 *
 * # Safety
 * `service` is a live handle; `account` a C string.
 */
enum MtocsStatus mtocs_service_add_account(struct MtocsService *service, const char *account);

/**
 * Logs in and returns a session token.
 *
 * # Safety
 * `service` is a live handle; strings are C strings; `out_token` a valid place.
 */
enum MtocsStatus mtocs_service_login(struct MtocsService *service,
                                     const char *username,
                                     const char *password,
                                     char **out_token);

/**
 * Runs one workflow operation as the session's account. `request` is a
 * JSON object with any of `participant_id`, `visit_id`, `org`, `page` and
 * `body`; the result is written to `out` as JSON.
 *
 * Operations: `register_participant`, `get_participant`, `list_visits`,
 * `open_visit`, `edit_survey`, `transition_visit`, `grading_queue`,
 * `grading_detail`, `submit_grading`, `edit_grading`, `pending_reports`,
 * `render_letter`, `mark_sent`, `add_followup`, `list_followups`,
 * `export_csv`.
 *
 * # Safety
 * `service` is a live handle; strings are C strings; `request` may be
 * null; `out` is a valid place.
 */
enum MtocsStatus mtocs_service_call(struct MtocsService *service,
                                    const char *token,
                                    const char *op,
                                    const char *request,
                                    char **out);

/**
 * Stores an image for one eye (`left` or `right`) of a visit and returns
 * its reference as JSON.
 *
 * # Safety
 * `service` is a live handle; strings are C strings; `bytes` points to
 * `len` bytes; `out` is a valid place.
 */
enum MtocsStatus mtocs_service_attach_image(struct MtocsService *service,
                                            const char *token,
                                            const char *visit_id,
                                            const char *eye,
                                            const uint8_t *bytes,
                                            size_t len,
                                            char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTOCS_H */
