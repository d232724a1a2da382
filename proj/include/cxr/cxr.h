/* Copyright (c) 2026, cxrelay authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the cxrelay core. Every call returns a cxr_status; on
 * failure cxr_last_error() describes it (per thread, valid until the next
 * call). Strings returned through char** are JSON unless noted and must be
 * released with cxr_string_free.
 */
#ifndef CXR_CXR_H
#define CXR_CXR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CXR_API
#elif defined(CXR_BUILDING_LIBRARY)
#define CXR_API __attribute__((visibility("default")))
#else
#define CXR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cxr_status {
    CXR_OK = 0,
    CXR_E_INVALID_ARGUMENT = 1,
    CXR_E_IO = 2,
    CXR_E_FORMAT = 3,
    CXR_E_SHAPE = 4,
    CXR_E_PROTOCOL = 5,
    CXR_E_NOT_FOUND = 6,
    CXR_E_UNAVAILABLE = 7,
    CXR_E_DIVERGED = 8,
    CXR_E_CORRUPT = 9,
    CXR_E_LEAKAGE = 10,
    CXR_E_TIMEOUT = 11,
    CXR_E_INTERNAL = 12
} cxr_status;

CXR_API const char* cxr_version(void);
CXR_API const char* cxr_last_error(void);
CXR_API const char* cxr_status_name(cxr_status status);
CXR_API void cxr_string_free(char* s);

/* ---- models ---------------------------------------------------------- */

typedef struct cxr_model cxr_model;

/* Loads a full (CXRM) or compressed (CXRC) model; both are digest checked. */
CXR_API cxr_status cxr_model_load(const char* path, cxr_model** out);
CXR_API void cxr_model_free(cxr_model* model);
/* version, digest, parent, parameters, stored metrics, compressed flag. */
CXR_API cxr_status cxr_model_info(const cxr_model* model, char** json_out);
/* Preprocesses a raw PGM (gamma, resize) and scores it. */
CXR_API cxr_status cxr_model_predict_pgm(const cxr_model* model, const char* pgm_path, double gamma,
                                         char** json_out);

/* ---- offline jobs ---------------------------------------------------- */

/* Options (JSON): data_dir or synthetic (count), out, seed, epochs,
 * batch_size, learning_rate, optimizer ("adam"|"sgd"), decay, patience,
 * test_fraction, rebalance (target minority share, 0 = off),
 * augment_copies, gamma, resume (CXRM or CXRC path), history_out. */
CXR_API cxr_status cxr_train(const char* options_json, char** report_json);

/* Options (JSON): sparsity, conv_bits, dense_bits, compress_biases,
   per_tensor_sparsity. */
CXR_API cxr_status cxr_compress(const char* in_path, const char* out_path, const char* options_json,
                                char** report_json);

/* Predictions file: one "<label> <p_pneumonia>" or "<id> <label> <p>" per
 * line, label NORMAL/PNEUMONIA or 0/1, '#' comments. */
CXR_API cxr_status cxr_report(const char* predictions_path, char** report_json);

/* Options (JSON): gamma, patch, stride, mode ("overlay"|"map"),
 * preprocessed (input already 128x128 and gamma corrected). */
CXR_API cxr_status cxr_heatmap(const char* model_path, const char* image_path, const char* out_pgm,
                               const char* options_json, char** report_json);

/* Runs a scenario script in `workdir` (created, should be empty). The
 * result holds "events" (the log text), "summary" (key=value text) and the
 * parsed counters. */
CXR_API cxr_status cxr_simulate(const char* script_path, const char* workdir, char** result_json);

/* scans_per_day * (per_scan_kb + overhead_kb) * 7 + updates_per_week * model_mb * 1024 */
CXR_API cxr_status cxr_ledger_weekly_total(double scans_per_day, double per_scan_kb, double overhead_kb,
                                           double updates_per_week, double model_mb, double* kb_out);

/* ---- server ---------------------------------------------------------- */

typedef struct cxr_server cxr_server;

/* Config (JSON): storage_root, port, bind, section ("private"|"public"),
 * retrain_threshold, metric ("f_beta"|"accuracy"), beta, auto_retrain,
 * epochs, seed. Environment overrides apply after the JSON. */
CXR_API cxr_status cxr_server_open(const char* config_json, cxr_server** out);
CXR_API void cxr_server_free(cxr_server* server);
CXR_API cxr_status cxr_server_publish(cxr_server* server, const char* model_path, char** json_out);
/* Labelled directory (NORMAL/, PNEUMONIA/) used as the frozen yardstick. */
CXR_API cxr_status cxr_server_set_holdout(cxr_server* server, const char* dir);
CXR_API cxr_status cxr_server_start(cxr_server* server, uint16_t* port_out);
CXR_API cxr_status cxr_server_stop(cxr_server* server);
CXR_API cxr_status cxr_server_status(cxr_server* server, char** json_out);
CXR_API cxr_status cxr_server_retrain(cxr_server* server, int force, char** json_out);
CXR_API cxr_status cxr_server_export(cxr_server* server, const char* out_dir, char** json_out);

/* ---- edge client ----------------------------------------------------- */

typedef struct cxr_client cxr_client;

/* config_path may be NULL for defaults; overrides_json (may be NULL) holds
 * the same keys as the config file. */
CXR_API cxr_status cxr_client_open(const char* config_path, const char* overrides_json, cxr_client** out);
CXR_API void cxr_client_free(cxr_client* client);
/* Installs a compressed model file without the network. */
CXR_API cxr_status cxr_client_provision(cxr_client* client, const char* cxrc_path);
/* Starts the HTTP API and the sync thread. */
CXR_API cxr_status cxr_client_start(cxr_client* client, uint16_t* http_port_out);
CXR_API cxr_status cxr_client_stop(cxr_client* client);
CXR_API cxr_status cxr_client_status(cxr_client* client, char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* CXR_CXR_H */
