/* C interface to the aid video prediction library.
 *
 * Every function returns an aid_status. On failure, aid_last_error() returns
 * a message describing the most recent error on the calling thread. Handles
 * are opaque and owned by the caller; release them with the matching _free
 * function. Strings returned through char** are released with aid_string_free.
 */
#ifndef AID_AID_H
#define AID_AID_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define AID_API
#else
#define AID_API __attribute__((visibility("default")))
#endif

typedef enum aid_status {
  AID_OK = 0,
  AID_ERR_USAGE = 1,     /* bad argument, unknown name, grammar violation */
  AID_ERR_CONFIG = 2,    /* inconsistent configuration */
  AID_ERR_FORMAT = 3,    /* malformed file */
  AID_ERR_IO = 4,        /* file system failure */
  AID_ERR_NUMERIC = 5,   /* non-finite values during training or sampling */
  AID_ERR_DIMENSION = 6, /* tensor shape mismatch */
  AID_ERR_INTERNAL = 7
} aid_status;

AID_API const char* aid_status_name(aid_status status);
AID_API const char* aid_last_error(void);
AID_API const char* aid_version(void);
AID_API void aid_string_free(char* s);

/* ---- Run configuration ---- */

typedef struct aid_config aid_config;

/* Presets: "desk", "paper-ssv2", "paper-epic", "paper-bridge". */
AID_API aid_status aid_config_preset(const char* name, aid_config** out);
/* Overrides the fields present in a JSON document. Unknown keys fail. */
AID_API aid_status aid_config_apply_json(aid_config* config, const char* json);
AID_API aid_status aid_config_to_json(const aid_config* config, char** out);
AID_API void aid_config_free(aid_config* config);

/* Writes <out_dir>/manifest.json and <out_dir>/videos/ from the data section. */
AID_API aid_status aid_datagen(const aid_config* config, const char* out_dir);

/* ---- Models ---- */

typedef struct aid_model aid_model;
typedef void (*aid_log_fn)(const char* line, void* user);

/* Freshly initialized base-phase model. */
AID_API aid_status aid_model_create(const aid_config* config, aid_model** out);
AID_API aid_status aid_model_load(const char* checkpoint, aid_model** out);
AID_API aid_status aid_model_save(const aid_model* model, const char* checkpoint);
AID_API void aid_model_free(aid_model* model);
/* Applies JSON overrides to training, optimizer, diffusion and ablation
 * settings. Changing the architecture fails with AID_ERR_CONFIG. */
AID_API aid_status aid_model_configure(aid_model* model, const char* json);
/* JSON with phase, parameter counts, trainable fraction and config. */
AID_API aid_status aid_model_info(const aid_model* model, char** out);

/* Trains in the given phase ("base" or "finetune") on the corpus train split,
 * checkpointing to `checkpoint`. A finetune run needs a base or finetune
 * model; a base run needs a base model. `log` may be NULL. */
AID_API aid_status aid_train(aid_model* model, const char* phase, const char* corpus_dir,
                             const char* checkpoint, aid_log_fn log, void* user);

typedef struct aid_predict_options {
  size_t k;                /* reference frames; 0: the model's data.k */
  const char* instruction; /* "move the <color> <shape> <direction>" */
  double s_v, s_t;         /* guidance scales; NaN: the model's defaults */
  size_t steps;            /* sampler steps; 0: the model's default */
  uint64_t seed;
  const char* ablation;    /* NULL or "full" for the complete model */
  int unconditional;       /* nonzero: sample without any condition */
  double fps;              /* GIF frame rate */
} aid_predict_options;

AID_API void aid_predict_options_init(aid_predict_options* options);

/* Reads an AIDV video, predicts, and writes an AIDV file. gif_path and
 * png_path may be NULL. */
AID_API aid_status aid_predict(const aid_model* model, const char* input_video,
                               const aid_predict_options* options, const char* out_video,
                               const char* gif_path, const char* png_path);

typedef struct aid_eval_options {
  const char* ablation; /* NULL or "full" */
  const uint64_t* seeds;
  size_t num_seeds;     /* 0: a single seed 0 */
  size_t limit;         /* 0: every val item */
  double s_v, s_t;      /* NaN: the model's defaults */
  size_t steps;         /* 0: the model's default */
} aid_eval_options;

AID_API void aid_eval_options_init(aid_eval_options* options);

/* Evaluates the val split; writes the metrics JSON to out_json when non-NULL
 * and returns it through report when non-NULL. */
AID_API aid_status aid_eval(const aid_model* model, const char* corpus_dir,
                            const aid_eval_options* options, const char* out_json, char** report);

/* Renders an AIDV video as an animated GIF and/or a PNG frame strip. */
AID_API aid_status aid_render(const char* video, const char* gif_path, const char* png_path,
                              double fps);

#ifdef __cplusplus
}
#endif

#endif /* AID_AID_H */
