#include "aid/aid.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "data/corpus.hpp"
#include "data/video_io.hpp"
#include "media/media.hpp"
#include "pipeline/predict.hpp"
#include "pipeline/trainer.hpp"

struct aid_config {
  aid::pipeline::RunConfig value;
};

struct aid_model {
  aid::pipeline::Model value;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
aid_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return AID_OK;
  } catch (const aid::UsageError& e) {
    g_last_error = e.what();
    return AID_ERR_USAGE;
  } catch (const aid::ConfigError& e) {
    g_last_error = e.what();
    return AID_ERR_CONFIG;
  } catch (const aid::FormatError& e) {
    g_last_error = e.what();
    return AID_ERR_FORMAT;
  } catch (const aid::IoError& e) {
    g_last_error = e.what();
    return AID_ERR_IO;
  } catch (const aid::NumericError& e) {
    g_last_error = e.what();
    return AID_ERR_NUMERIC;
  } catch (const aid::DimensionError& e) {
    g_last_error = e.what();
    return AID_ERR_DIMENSION;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AID_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return AID_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw aid::UsageError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

aid::pipeline::Ablation ablation_of(const char* name) {
  return aid::pipeline::Ablation::from_name(name ? name : "full");
}

// Architecture-defining parts of a config.
std::string architecture_of(const aid::pipeline::RunConfig& c) {
  const auto doc = nlohmann::json::parse(aid::pipeline::to_json(c));
  return nlohmann::json{{"codec", doc["codec"]},
                        {"backbone", doc["backbone"]},
                        {"conditioning", doc["conditioning"]},
                        {"frames", c.data.frames},
                        {"canvas", c.data.canvas}}
      .dump();
}

}  // namespace

extern "C" {

const char* aid_status_name(aid_status status) {
  switch (status) {
    case AID_OK: return "ok";
    case AID_ERR_USAGE: return "usage error";
    case AID_ERR_CONFIG: return "configuration error";
    case AID_ERR_FORMAT: return "format error";
    case AID_ERR_IO: return "I/O error";
    case AID_ERR_NUMERIC: return "numeric error";
    case AID_ERR_DIMENSION: return "dimension error";
    case AID_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* aid_last_error(void) { return g_last_error.c_str(); }
const char* aid_version(void) { return "1.0.0"; }
void aid_string_free(char* s) { std::free(s); }

aid_status aid_config_preset(const char* name, aid_config** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = new aid_config{aid::pipeline::RunConfig::preset(name)};
  });
}

aid_status aid_config_apply_json(aid_config* config, const char* json) {
  return guarded([&] {
    require(config, "config");
    require(json, "json");
    config->value = aid::pipeline::from_json(json, config->value);
  });
}

aid_status aid_config_to_json(const aid_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = dup_string(aid::pipeline::to_json(config->value));
  });
}

void aid_config_free(aid_config* config) { delete config; }

aid_status aid_datagen(const aid_config* config, const char* out_dir) {
  return guarded([&] {
    require(config, "config");
    require(out_dir, "out_dir");
    aid::data::generate_corpus(config->value.data, out_dir);
  });
}

aid_status aid_model_create(const aid_config* config, aid_model** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = new aid_model{aid::pipeline::Model::create(config->value)};
  });
}

aid_status aid_model_load(const char* checkpoint, aid_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = new aid_model{aid::pipeline::load_checkpoint(checkpoint)};
  });
}

aid_status aid_model_save(const aid_model* model, const char* checkpoint) {
  return guarded([&] {
    require(model, "model");
    require(checkpoint, "checkpoint");
    aid::pipeline::save_checkpoint(checkpoint, model->value);
  });
}

void aid_model_free(aid_model* model) { delete model; }

aid_status aid_model_configure(aid_model* model, const char* json) {
  return guarded([&] {
    require(model, "model");
    require(json, "json");
    auto next = aid::pipeline::from_json(json, model->value.config);
    if (architecture_of(next) != architecture_of(model->value.config))
      throw aid::ConfigError("configure: architecture settings cannot change on an existing model");
    model->value.config = next;
  });
}

aid_status aid_model_info(const aid_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    const auto& m = model->value;
    nlohmann::json doc = {
        {"phase", aid::pipeline::to_string(m.phase)},
        {"parameters", m.store.element_count()},
        {"trainable_parameters", m.store.trainable_element_count()},
        {"trainable_fraction", m.trainable_fraction()},
        {"config", nlohmann::json::parse(aid::pipeline::to_json(m.config))},
    };
    *out = dup_string(doc.dump(2));
  });
}

aid_status aid_train(aid_model* model, const char* phase, const char* corpus_dir,
                     const char* checkpoint, aid_log_fn log, void* user) {
  return guarded([&] {
    require(model, "model");
    require(phase, "phase");
    require(corpus_dir, "corpus_dir");
    require(checkpoint, "checkpoint");
    auto& m = model->value;
    const auto target = aid::pipeline::phase_from_string(phase);
    if (target == aid::pipeline::Phase::kBase && m.phase != aid::pipeline::Phase::kBase)
      throw aid::UsageError("train: base training needs a base-phase model");
    m.set_phase(target);
    const auto manifest = aid::data::load_manifest(corpus_dir);
    const auto data = aid::pipeline::load_split(corpus_dir, manifest, "train", m);
    aid::pipeline::TrainOptions opt;
    opt.checkpoint = checkpoint;
    if (log) {
      opt.on_log = [&](const aid::pipeline::TrainProgress& p) {
        char line[256];
        std::snprintf(line, sizeof line, "step %zu/%zu loss %.5f avg %.5f grad %.3f %.1fs", p.step,
                      p.total, p.loss, p.smoothed, p.grad_norm, p.seconds);
        log(line, user);
      };
    }
    const auto result = aid::pipeline::train(m, data, opt);
    if (log) {
      char line[256];
      std::snprintf(line, sizeof line, "done: mean loss first 100 steps %.5f, last 100 steps %.5f",
                    result.first_window, result.last_window);
      log(line, user);
    }
  });
}

void aid_predict_options_init(aid_predict_options* o) {
  if (!o) return;
  *o = aid_predict_options{};
  o->s_v = o->s_t = std::nan("");
  o->fps = 4.0;
}

aid_status aid_predict(const aid_model* model, const char* input_video,
                       const aid_predict_options* options, const char* out_video,
                       const char* gif_path, const char* png_path) {
  return guarded([&] {
    require(model, "model");
    require(input_video, "input_video");
    require(options, "options");
    require(out_video, "out_video");
    const auto& m = model->value;
    if (m.phase == aid::pipeline::Phase::kBase && !options->unconditional)
      throw aid::UsageError("predict: a base checkpoint only supports unconditional sampling");
    aid::pipeline::PredictOptions po;
    po.k = options->k ? options->k : m.config.data.k;
    po.instruction = options->instruction ? options->instruction : "";
    po.scales = m.config.diffusion.guidance;
    if (!std::isnan(options->s_v)) po.scales.s_v = options->s_v;
    if (!std::isnan(options->s_t)) po.scales.s_t = options->s_t;
    po.sampler = m.config.diffusion.sampler;
    if (options->steps) po.sampler.steps = options->steps;
    po.seed = options->seed;
    po.ablation = ablation_of(options->ablation);
    po.unconditional = options->unconditional != 0;
    const auto pred = aid::pipeline::predict(m, aid::data::load_video(input_video), po);
    aid::data::save_video(out_video, pred.video);
    if (gif_path) aid::media::write_gif(gif_path, pred.video, options->fps > 0 ? options->fps : 4.0);
    if (png_path) aid::media::write_png_strip(png_path, pred.video);
  });
}

void aid_eval_options_init(aid_eval_options* o) {
  if (!o) return;
  *o = aid_eval_options{};
  o->s_v = o->s_t = std::nan("");
}

aid_status aid_eval(const aid_model* model, const char* corpus_dir, const aid_eval_options* options,
                    const char* out_json, char** report) {
  return guarded([&] {
    require(model, "model");
    require(corpus_dir, "corpus_dir");
    require(options, "options");
    const auto& m = model->value;
    aid::pipeline::EvalOptions eo;
    eo.ablation = ablation_of(options->ablation);
    if (options->num_seeds) {
      require(options->seeds, "seeds");
      eo.seeds.assign(options->seeds, options->seeds + options->num_seeds);
    }
    eo.limit = options->limit;
    eo.scales = m.config.diffusion.guidance;
    if (!std::isnan(options->s_v)) eo.scales.s_v = options->s_v;
    if (!std::isnan(options->s_t)) eo.scales.s_t = options->s_t;
    eo.sampler = m.config.diffusion.sampler;
    if (options->steps) eo.sampler.steps = options->steps;
    const auto manifest = aid::data::load_manifest(corpus_dir);
    const auto val = aid::pipeline::load_split(corpus_dir, manifest, "val", m);
    const auto text = aid::pipeline::to_json(aid::pipeline::evaluate(m, val, eo));
    if (out_json) {
      std::ofstream os(out_json, std::ios::binary | std::ios::trunc);
      if (!os || !(os << text)) throw aid::IoError(std::string("cannot write '") + out_json + "'");
    }
    if (report) *report = dup_string(text);
  });
}

aid_status aid_render(const char* video, const char* gif_path, const char* png_path, double fps) {
  return guarded([&] {
    require(video, "video");
    if (!gif_path && !png_path) throw aid::UsageError("render: need a GIF or PNG output path");
    const auto v = aid::data::load_video(video);
    if (gif_path) aid::media::write_gif(gif_path, v, fps);
    if (png_path) aid::media::write_png_strip(png_path, v);
  });
}

}  // extern "C"
