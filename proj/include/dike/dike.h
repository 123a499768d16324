#ifndef DIKE_DIKE_H
#define DIKE_DIKE_H

/* C interface to the dike engine. Requests and responses are UTF-8 JSON
 * strings; strings returned through char** belong to the caller and are
 * released with dike_string_free. */

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define DIKE_API __attribute__((visibility("default")))
#else
#define DIKE_API
#endif

/* Mirrors dike::ErrorCode. */
typedef enum dike_status {
  DIKE_OK = 0,
  DIKE_INVALID_ARGUMENT = 1,
  DIKE_UNKNOWN_LABEL,
  DIKE_NON_FINITE_VALUE,
  DIKE_EMPTY_INPUT,
  DIKE_LENGTH_MISMATCH,
  DIKE_ZERO_VECTOR,
  DIKE_UNCOVERED_LEVEL,
  DIKE_LEVEL_OUT_OF_RANGE,
  DIKE_MISSING_FIXTURE,
  DIKE_CASSETTE_CORRUPT,
  DIKE_BACKEND_UNAVAILABLE,
  DIKE_REFUSAL,
  DIKE_CRIT_UNAVAILABLE,
  DIKE_PARSE_ERROR,
  DIKE_SCHEMA_MISMATCH,
  DIKE_STORAGE_UNAVAILABLE,
  DIKE_MISSING_SOURCE,
  DIKE_NOT_FOUND,
  DIKE_CONFLICT,
  DIKE_NOT_READY,
  DIKE_CONFIG,
  DIKE_INTERNAL
} dike_status;

typedef struct dike_engine dike_engine;

/* Filled in by a host backend for one completion. */
typedef struct dike_reply dike_reply;
DIKE_API void dike_reply_set_text(dike_reply* reply, const char* text);
/* Marks the request as declined by the model; never retried. */
DIKE_API void dike_reply_set_refusal(dike_reply* reply, const char* message);

/* request_json: {"role", "stance"?, "contentiousness"?, "prompt", "context": [...]}.
 * Return DIKE_OK after setting text or refusal; any other status is reported
 * as a backend failure. */
typedef dike_status (*dike_backend_fn)(void* user, const char* request_json, dike_reply* reply);

/* Argument-quality score for the SocraSynth variant. */
typedef double (*dike_crit_fn)(void* user, const char* bundle);

typedef struct dike_hooks {
  dike_backend_fn backend; /* replaces the HTTP client in live/record mode */
  void* backend_user;
  dike_crit_fn crit;
  void* crit_user;
} dike_hooks;

DIKE_API const char* dike_version(void);
DIKE_API const char* dike_status_name(dike_status status);

/* config_json: {"data_dir", "provider": "live"|"replay"|"record", "cassette",
 * "port", "policy": "4:7" | {...}, "debate": {...}, "top_m", "api_token",
 * "feature_hints"}. Absent keys fall back to DIKE_* environment variables,
 * then defaults. NULL is the same as "{}". hooks may be NULL. */
DIKE_API dike_status dike_engine_open(const char* config_json, const dike_hooks* hooks,
                                      dike_engine** out);
DIKE_API void dike_engine_close(dike_engine* engine);

/* Runs one operation (see README for the list). *response_json receives the
 * result, or {"error": {...}} when the status is not DIKE_OK. engine may be
 * NULL for "schedule" and "spectra". */
DIKE_API dike_status dike_call(dike_engine* engine, const char* op, const char* request_json,
                               char** response_json);

/* Serves the /v1 HTTP API until dike_stop is called from another thread.
 * port 0 picks a free port; on_bound (may be NULL) receives the port once
 * the socket is listening. static_dir may be NULL. */
DIKE_API dike_status dike_serve(dike_engine* engine, const char* host, int port,
                                const char* static_dir, void (*on_bound)(void* user, int port),
                                void* user);
DIKE_API void dike_stop(dike_engine* engine);

DIKE_API void dike_string_free(char* s);

/* JSON of the most recent error on this thread, or "" if none. Valid until
 * the next call on the same thread. */
DIKE_API const char* dike_last_error(void);

#ifdef __cplusplus
}
#endif

#endif /* DIKE_DIKE_H */
