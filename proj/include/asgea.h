#ifndef ASGEA_H
#define ASGEA_H

/* C surface of the entity-alignment library. Every call is synchronous.
 * Functions taking a config accept a JSON document and, on success, store
 * a heap-allocated JSON result in *result_out; release it with
 * asgea_string_free. On failure the result pointer is left untouched and
 * asgea_last_error() describes the problem (thread-local, valid until the
 * next failing call on the same thread). */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  ASGEA_OK = 0,
  ASGEA_ERR_CONFIG = 1,   /* invalid configuration or argument */
  ASGEA_ERR_DATA = 2,     /* bad input data, file, or checkpoint */
  ASGEA_ERR_INTERNAL = 3  /* anything else */
} asgea_status;

const char* asgea_last_error(void);
void asgea_string_free(char* s);

/* Synthetic benchmark generation, subgraph extraction, training,
 * evaluation, explanation, and rule mining. */
asgea_status asgea_gen_synth(const char* config_json, char** result_out);
asgea_status asgea_extract(const char* config_json, char** result_out);
asgea_status asgea_train(const char* config_json, char** result_out);
asgea_status asgea_evaluate(const char* config_json, char** result_out);
asgea_status asgea_explain(const char* config_json, char** result_out);
asgea_status asgea_mine_rules(const char* config_json, char** result_out);

/* Opaque handle over a loaded dataset (KGs, seed/test pairs, features). */
typedef struct asgea_dataset asgea_dataset;
asgea_status asgea_dataset_open(const char* config_json, asgea_dataset** out);
void asgea_dataset_close(asgea_dataset* dataset);
asgea_status asgea_dataset_stats(const asgea_dataset* dataset, char** result_out);

#ifdef __cplusplus
}
#endif

#endif /* ASGEA_H */
