// Command-line front end over the C API.
#include <CLI11.hpp>
#include <aid/aid.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  aid_status status;
};

void check(aid_status s) {
  if (s != AID_OK) throw Failure{s};
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CLI::ValidationError("--config", "cannot read '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Sets doc[section][key] when the optional flag was given.
template <typename V>
void put(json& doc, const char* section, const char* key, const std::optional<V>& v) {
  if (v) doc[section][key] = *v;
}

std::string take(char* s) {
  std::string out = s ? s : "";
  aid_string_free(s);
  return out;
}

void print_log(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

struct ConfigHandle {
  aid_config* p = nullptr;
  ~ConfigHandle() { aid_config_free(p); }
};
struct ModelHandle {
  aid_model* p = nullptr;
  ~ModelHandle() { aid_model_free(p); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-guided video prediction on synthetic moving-shape videos"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(aid_version()));

  // datagen
  auto* datagen = app.add_subcommand("datagen", "Generate a synthetic corpus");
  std::string dg_out, dg_config, dg_preset = "desk";
  std::optional<std::size_t> dg_num, dg_frames, dg_k, dg_canvas;
  std::optional<std::uint64_t> dg_seed;
  datagen->add_option("--out", dg_out, "Output directory")->required();
  datagen->add_option("--num", dg_num, "Number of items");
  datagen->add_option("--frames", dg_frames, "Frames per video");
  datagen->add_option("--k", dg_k, "Reference frames per item");
  datagen->add_option("--seed", dg_seed, "Generator seed");
  datagen->add_option("--canvas", dg_canvas, "Canvas size in pixels");
  datagen->add_option("--preset", dg_preset, "Config preset");
  datagen->add_option("--config", dg_config, "JSON run config overriding flags");

  // train
  auto* train = app.add_subcommand("train", "Train the base model or fine-tune the added components");
  std::string tr_corpus, tr_out, tr_phase, tr_init, tr_config, tr_preset = "desk";
  std::optional<std::size_t> tr_steps, tr_batch, tr_every;
  std::optional<std::uint64_t> tr_seed;
  std::optional<double> tr_lr, tr_pt, tr_pv;
  train->add_option("--corpus", tr_corpus, "Corpus directory")->required();
  train->add_option("--out", tr_out, "Checkpoint path")->required();
  train->add_option("--phase", tr_phase, "base or finetune")->required()->check(CLI::IsMember({"base", "finetune"}));
  train->add_option("--init", tr_init, "Starting checkpoint (required for finetune)");
  train->add_option("--steps", tr_steps, "Optimizer steps");
  train->add_option("--batch", tr_batch, "Batch size");
  train->add_option("--seed", tr_seed, "Initialization and sampling seed");
  train->add_option("--lr", tr_lr, "Adam step size");
  train->add_option("--p-drop-t", tr_pt, "Text condition dropout");
  train->add_option("--p-drop-v", tr_pv, "Frame condition dropout");
  train->add_option("--checkpoint-every", tr_every, "Steps between checkpoints");
  train->add_option("--preset", tr_preset, "Config preset for a fresh base model");
  train->add_option("--config", tr_config, "JSON run config overriding flags");

  // predict
  auto* predict = app.add_subcommand("predict", "Predict a video from reference frames and an instruction");
  std::string pr_ckpt, pr_input, pr_out, pr_gif, pr_png, pr_instruction, pr_ablation = "full", pr_config;
  std::size_t pr_k = 0;
  std::optional<double> pr_sv, pr_st;
  std::optional<std::size_t> pr_steps;
  std::uint64_t pr_seed = 0;
  double pr_fps = 4.0;
  bool pr_uncond = false;
  predict->add_option("--ckpt", pr_ckpt, "Checkpoint")->required();
  predict->add_option("--input", pr_input, "Input AIDV video")->required();
  predict->add_option("--out", pr_out, "Output AIDV video")->required();
  predict->add_option("--instruction", pr_instruction, "move the <color> <shape> <direction>");
  predict->add_option("--k", pr_k, "Reference frames (default: the model's)");
  predict->add_option("--s-v", pr_sv, "Frame guidance scale");
  predict->add_option("--s-t", pr_st, "Text guidance scale");
  predict->add_option("--steps", pr_steps, "Sampler steps");
  predict->add_option("--seed", pr_seed, "Noise seed");
  predict->add_option("--ablation", pr_ablation, "Inference ablation");
  predict->add_option("--gif", pr_gif, "Also write an animated GIF");
  predict->add_option("--png", pr_png, "Also write a PNG frame strip");
  predict->add_option("--fps", pr_fps, "GIF frame rate");
  predict->add_flag("--unconditional", pr_uncond, "Sample without any condition");
  predict->add_option("--config", pr_config, "JSON run config overriding flags");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate on the validation split");
  std::string ev_ckpt, ev_corpus, ev_out, ev_ablation = "full", ev_config;
  std::vector<std::uint64_t> ev_seeds{0};
  std::size_t ev_limit = 0;
  std::optional<double> ev_sv, ev_st;
  std::optional<std::size_t> ev_steps;
  eval->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  eval->add_option("--corpus", ev_corpus, "Corpus directory")->required();
  eval->add_option("--out", ev_out, "Metrics JSON path")->required();
  eval->add_option("--ablation", ev_ablation, "Inference ablation");
  eval->add_option("--seeds", ev_seeds, "Sampling seeds")->expected(1, -1);
  eval->add_option("--limit", ev_limit, "Evaluate at most this many items");
  eval->add_option("--s-v", ev_sv, "Frame guidance scale");
  eval->add_option("--s-t", ev_st, "Text guidance scale");
  eval->add_option("--steps", ev_steps, "Sampler steps");
  eval->add_option("--config", ev_config, "JSON run config overriding flags");

  // render
  auto* render = app.add_subcommand("render", "Render an AIDV video as GIF and PNG");
  std::string rd_input, rd_gif, rd_png;
  double rd_fps = 4.0;
  render->add_option("--input", rd_input, "Input AIDV video")->required();
  render->add_option("--gif", rd_gif, "GIF output");
  render->add_option("--png", rd_png, "PNG strip output");
  render->add_option("--fps", rd_fps, "GIF frame rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*datagen) {
      json flags = json::object();
      put(flags, "data", "num", dg_num);
      put(flags, "data", "frames", dg_frames);
      put(flags, "data", "k", dg_k);
      put(flags, "data", "seed", dg_seed);
      put(flags, "data", "canvas", dg_canvas);
      ConfigHandle cfg;
      check(aid_config_preset(dg_preset.c_str(), &cfg.p));
      check(aid_config_apply_json(cfg.p, flags.dump().c_str()));
      if (!dg_config.empty()) check(aid_config_apply_json(cfg.p, read_text(dg_config).c_str()));
      check(aid_datagen(cfg.p, dg_out.c_str()));
      std::printf("wrote corpus to %s\n", dg_out.c_str());
    } else if (*train) {
      json flags = json::object();
      put(flags, "train", "steps", tr_steps);
      put(flags, "train", "batch", tr_batch);
      put(flags, "train", "p_drop_t", tr_pt);
      put(flags, "train", "p_drop_v", tr_pv);
      put(flags, "train", "checkpoint_every", tr_every);
      put(flags, "optimizer", "lr", tr_lr);
      ModelHandle model;
      if (!tr_init.empty()) {
        put(flags, "train", "seed", tr_seed);
        check(aid_model_load(tr_init.c_str(), &model.p));
        check(aid_model_configure(model.p, flags.dump().c_str()));
        if (!tr_config.empty()) check(aid_model_configure(model.p, read_text(tr_config).c_str()));
      } else {
        if (tr_phase == "finetune") throw CLI::ValidationError("--init", "finetune needs a base checkpoint");
        put(flags, "train", "seed", tr_seed);
        // Corpus geometry comes from its manifest.
        std::ifstream mf(tr_corpus + "/manifest.json");
        if (mf) {
          const auto m = json::parse(mf, nullptr, false);
          if (!m.is_discarded() && m.contains("frames") && m.contains("canvas")) {
            flags["data"]["frames"] = m["frames"];
            flags["data"]["canvas"] = m["canvas"];
            if (!m["items"].empty()) flags["data"]["k"] = m["items"][0]["k"];
          }
        }
        ConfigHandle cfg;
        check(aid_config_preset(tr_preset.c_str(), &cfg.p));
        check(aid_config_apply_json(cfg.p, flags.dump().c_str()));
        if (!tr_config.empty()) check(aid_config_apply_json(cfg.p, read_text(tr_config).c_str()));
        check(aid_model_create(cfg.p, &model.p));
      }
      check(aid_train(model.p, tr_phase.c_str(), tr_corpus.c_str(), tr_out.c_str(), print_log, nullptr));
      char* info = nullptr;
      check(aid_model_info(model.p, &info));
      const auto doc = json::parse(take(info));
      std::printf("saved %s checkpoint %s (trainable fraction %.4f)\n",
                  doc["phase"].get<std::string>().c_str(), tr_out.c_str(),
                  doc["trainable_fraction"].get<double>());
    } else if (*predict) {
      ModelHandle model;
      check(aid_model_load(pr_ckpt.c_str(), &model.p));
      json flags = json::object();
      put(flags, "diffusion", "s_v", pr_sv);
      put(flags, "diffusion", "s_t", pr_st);
      put(flags, "diffusion", "steps", pr_steps);
      check(aid_model_configure(model.p, flags.dump().c_str()));
      if (!pr_config.empty()) check(aid_model_configure(model.p, read_text(pr_config).c_str()));
      aid_predict_options opt;
      aid_predict_options_init(&opt);
      opt.k = pr_k;
      opt.instruction = pr_instruction.c_str();
      opt.seed = pr_seed;
      opt.ablation = pr_ablation.c_str();
      opt.unconditional = pr_uncond;
      opt.fps = pr_fps;
      check(aid_predict(model.p, pr_input.c_str(), &opt, pr_out.c_str(),
                        pr_gif.empty() ? nullptr : pr_gif.c_str(),
                        pr_png.empty() ? nullptr : pr_png.c_str()));
      std::printf("wrote %s\n", pr_out.c_str());
    } else if (*eval) {
      ModelHandle model;
      check(aid_model_load(ev_ckpt.c_str(), &model.p));
      json flags = json::object();
      put(flags, "diffusion", "s_v", ev_sv);
      put(flags, "diffusion", "s_t", ev_st);
      put(flags, "diffusion", "steps", ev_steps);
      check(aid_model_configure(model.p, flags.dump().c_str()));
      if (!ev_config.empty()) check(aid_model_configure(model.p, read_text(ev_config).c_str()));
      aid_eval_options opt;
      aid_eval_options_init(&opt);
      opt.ablation = ev_ablation.c_str();
      opt.seeds = ev_seeds.data();
      opt.num_seeds = ev_seeds.size();
      opt.limit = ev_limit;
      char* report = nullptr;
      check(aid_eval(model.p, ev_corpus.c_str(), &opt, ev_out.c_str(), &report));
      const auto doc = json::parse(take(report));
      std::printf("%s: instruction_accuracy %.4f cond_psnr %.2f pred_psnr %.2f (%zu items)\n",
                  doc["ablation"].get<std::string>().c_str(), doc["instruction_accuracy"].get<double>(),
                  doc["cond_psnr"].get<double>(), doc["pred_psnr"].get<double>(),
                  doc["items"].get<std::size_t>());
    } else if (*render) {
      check(aid_render(rd_input.c_str(), rd_gif.empty() ? nullptr : rd_gif.c_str(),
                       rd_png.empty() ? nullptr : rd_png.c_str(), rd_fps));
    }
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", aid_last_error());
    return f.status == AID_ERR_USAGE ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
