#ifndef DIALIGN_H
#define DIALIGN_H

#include <stddef.h>

// Result of every fallible call.
typedef enum DialignStatus {
  DIALIGN_STATUS_OK = 0,
  DIALIGN_STATUS_NULL_ARGUMENT = 1,
  DIALIGN_STATUS_INVALID_UTF8 = 2,
  DIALIGN_STATUS_IO = 3,
  DIALIGN_STATUS_INVALID_SCHEMA = 4,
  DIALIGN_STATUS_MALFORMED_JSON = 5,
  DIALIGN_STATUS_SCHEMA_VIOLATION = 6,
  DIALIGN_STATUS_UNKNOWN_LABEL = 7,
  DIALIGN_STATUS_ALIGNMENT = 8,
  DIALIGN_STATUS_OUT_OF_RANGE = 9,
  DIALIGN_STATUS_PANIC = 99,
} DialignStatus;

// A dataset of dialogues.
typedef struct DialignCollection DialignCollection;

// A label schema.
typedef struct DialignSchema DialignSchema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *dialign_last_error_message(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void dialign_string_free(char *s);

// Parses a label-schema config.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum DialignStatus dialign_schema_load(const char *json, struct DialignSchema **out);

// Reads and parses a label-schema config file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DialignStatus dialign_schema_load_file(const char *path, struct DialignSchema **out);

// Number of labels in the schema; 0 for NULL.
//
// # Safety
// `schema` must be NULL or a live handle.
size_t dialign_schema_label_count(const struct DialignSchema *schema);

// # Safety
// `schema` must be NULL or a handle from this library not yet freed.
void dialign_schema_free(struct DialignSchema *schema);

// Parses and validates a dataset file.
//
// # Safety
// `schema` must be a live handle, `json` a NUL-terminated string and `out`
// writable.
enum DialignStatus dialign_collection_parse(const struct DialignSchema *schema,
                                            const char *json,
                                            struct DialignCollection **out);

// Segments raw transcript text into a new dataset named `name`. When
// `schema` is not NULL its recommenders fill in labels; recommender
// failures leave the label out.
//
// # Safety
// `schema` must be NULL or a live handle; `raw` and `name` NUL-terminated
// strings; `out` writable.
enum DialignStatus dialign_segment(const struct DialignSchema *schema,
                                   const char *raw,
                                   const char *name,
                                   struct DialignCollection **out);

// Number of dialogues; 0 for NULL.
//
// # Safety
// `collection` must be NULL or a live handle.
size_t dialign_collection_dialogue_count(const struct DialignCollection *collection);

// Number of turns in the dialogue at position `index`.
//
// # Safety
// `collection` must be a live handle and `out` writable.
enum DialignStatus dialign_collection_turn_count(const struct DialignCollection *collection,
                                                 size_t index,
                                                 size_t *out);

// Canonical JSON text of the dataset. Free the result with
// [`dialign_string_free`].
//
// # Safety
// `collection` must be a live handle and `out` writable.
enum DialignStatus dialign_collection_to_json(const struct DialignCollection *collection,
                                              char **out);

// # Safety
// `collection` must be NULL or a handle from this library not yet freed.
void dialign_collection_free(struct DialignCollection *collection);

// Agreement statistics over `count` annotator copies, as JSON text. Copy
// `i` is attributed to `annotators[i]`. Free the result with
// [`dialign_string_free`].
//
// # Safety
// `collections` and `annotators` must point to `count` live handles and
// NUL-terminated strings respectively; `out` must be writable.
enum DialignStatus dialign_stats_json(const struct DialignSchema *schema,
                                      const struct DialignCollection *const *collections,
                                      const char *const *annotators,
                                      size_t count,
                                      char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIALIGN_H */
