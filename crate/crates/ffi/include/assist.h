#ifndef ASSIST_H
#define ASSIST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AssistStatus {
  ASSIST_STATUS_OK = 0,
  ASSIST_STATUS_NULL_ARGUMENT = 1,
  ASSIST_STATUS_INVALID_UTF8 = 2,
  ASSIST_STATUS_INVALID_ARGUMENT = 3,
  ASSIST_STATUS_NOT_FOUND = 4,
  ASSIST_STATUS_IO = 5,
  ASSIST_STATUS_PARSE = 6,
  ASSIST_STATUS_BACKEND = 7,
  ASSIST_STATUS_PANIC = 8,
} AssistStatus;

// A document index over the built-in hash embedder.
typedef struct AssistIndex AssistIndex;

// A read-only repository snapshot.
typedef struct AssistRepo AssistRepo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static string.
const char *assist_version(void);

// Copy of the calling thread's last error message, or NULL after a success.
char *assist_last_error(void);

// # Safety
// `s` is NULL or a string returned by this library, freed at most once.
void assist_string_free(char *s);

// Opens a local directory as a repository.
//
// # Safety
// `root` and `git_ref` are NUL-terminated strings; `out` is writable.
enum AssistStatus assist_repo_open_local(const char *root,
                                         const char *git_ref,
                                         struct AssistRepo **out);

// # Safety
// `repo` is NULL or a handle from `assist_repo_open_local`, freed at most once.
void assist_repo_free(struct AssistRepo *repo);

// Paths declaring `class_name`, as a JSON array. An unknown class yields `[]`.
//
// # Safety
// `repo` is a live handle; `class_name` is a NUL-terminated string; `out` is writable.
enum AssistStatus assist_repo_find_class(const struct AssistRepo *repo,
                                         const char *class_name,
                                         char **out);

// File text at `path`.
//
// # Safety
// `repo` is a live handle; `path` is a NUL-terminated string; `out` is writable.
enum AssistStatus assist_repo_fetch_file(const struct AssistRepo *repo,
                                         const char *path,
                                         char **out);

// Declared methods and constructors of a Java source, as a JSON array.
//
// # Safety
// `source` is a NUL-terminated string; `out` is writable.
enum AssistStatus assist_java_methods(const char *source, char **out);

// The source without its leading license comment.
//
// # Safety
// `source` is a NUL-terminated string; `out` is writable.
enum AssistStatus assist_java_strip_header(const char *source, char **out);

// Builds an index from the text documents below `dir`.
//
// # Safety
// `dir` is a NUL-terminated string; `out` is writable.
enum AssistStatus assist_index_build_dir(const char *dir, struct AssistIndex **out);

// Loads an index file written by `assist_index_save` or `assist index build`.
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum AssistStatus assist_index_open(const char *path, struct AssistIndex **out);

// # Safety
// `index` is a live handle; `path` is a NUL-terminated string.
enum AssistStatus assist_index_save(const struct AssistIndex *index, const char *path);

// Number of chunks; 0 for a NULL handle.
//
// # Safety
// `index` is NULL or a live handle.
size_t assist_index_len(const struct AssistIndex *index);

// Top-`k` chunks for `text` as a JSON array of `{source, ordinal, score, text}`.
//
// # Safety
// `index` is a live handle; `text` is a NUL-terminated string; `out` is writable.
enum AssistStatus assist_index_query(const struct AssistIndex *index,
                                     const char *text,
                                     size_t k,
                                     char **out);

// # Safety
// `index` is NULL or a live handle, freed at most once.
void assist_index_free(struct AssistIndex *index);

// Renders a defect table over the built-in evaluation matrix.
//
// `sweep` is `sampling` or `model`; `format` is `text` or `csv`.
// `annotations_json` is an annotation file body, or NULL for the bundled
// transcription of that sweep.
//
// # Safety
// String arguments are NULL (where allowed) or NUL-terminated; `out` is writable.
enum AssistStatus assist_defects_render(const char *sweep,
                                        const char *annotations_json,
                                        const char *format,
                                        char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASSIST_H */
