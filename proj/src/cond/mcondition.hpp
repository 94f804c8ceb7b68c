#pragma once

#include <string>
#include <vector>

#include "cond/dqformer.hpp"
#include "cond/encoders.hpp"

namespace aid::cond {

// Multimodal embedding [L_t, C] and frame-decomposed embedding [N N_t, C];
// either part may be empty. With both parts empty the condition is null and
// the backbone skips cross-attention.
template <typename T>
struct MCondition {
  nn::BasicTensor<T> multimodal;
  nn::BasicTensor<T> decomposed;
  std::size_t frames = 0;
  std::size_t tokens_per_frame = 0;

  bool null() const { return multimodal.empty() && decomposed.empty(); }
  std::size_t width() const;
  std::size_t total_tokens() const { return multimodal.rows() + decomposed.rows(); }
  // Multimodal rows followed by frame i's decomposed slice; [L_t + N_t, C].
  nn::BasicTensor<T> frame_kv(std::size_t i) const;
};

template <typename T>
MCondition<T> build_mcondition(nn::BasicTensor<T> multimodal, nn::BasicTensor<T> decomposed,
                               std::size_t frames);

// Gradients with respect to both parts, same shapes as the condition.
template <typename T>
struct MConditionGrad {
  nn::BasicTensor<T> multimodal, decomposed;
  // Accumulates the gradient of frame_kv(i) into the matching rows.
  void add_frame(const MCondition<T>& mc, std::size_t i, const nn::BasicTensor<T>& grad_kv);
};

struct ConditionerConfig {
  std::size_t width = 32;
  std::size_t text_len = 16;
  std::size_t vocab = 512;
  std::size_t image = 32;
  std::size_t vis_patch = 8;
  std::size_t frames = 8;
  std::size_t tokens_per_frame = 8;
  std::size_t heads = 2;
  std::size_t depth = 1;
};

// Which parts of the condition are built (ablation switches).
struct ConditionSwitches {
  bool multimodal = true;  // off: "w/o ME"
  bool decomposed = true;  // off: "w/o DE"
  bool states = true;      // off: "w/o LLava", t1 stands in for t2
};

template <typename T>
struct ConditionInputs {
  std::string instruction;          // empty: null text condition
  std::vector<std::string> states;  // empty: no state prompts
  const nn::BasicTensor<T>* first_frame = nullptr;  // [3, H, W]; null: dropped
};

// Text encoder + visual encoder + DQFormer, producing an MCondition.
struct Conditioner {
  ConditionerConfig config;
  TextEncoder text;
  VisualEncoder visual;
  DQFormer dq;

  template <typename T>
  static Conditioner create(nn::ParamStore<T>& store, nn::Rng& rng, ConditionerConfig config);

  template <typename T>
  struct Cache {
    typename TextEncoder::Cache<T> instruction;
    std::vector<typename TextEncoder::Cache<T>> states;
    typename VisualEncoder::Cache<T> visual;
    bool has_visual = false;
    typename DQFormer::MultimodalCache<T> mm;
    typename DQFormer::DecomposedCache<T> de;
    bool has_mm = false, has_de = false, has_states = false;
  };

  // An empty instruction yields the null condition.
  template <typename T>
  MCondition<T> forward(const nn::ParamStore<T>& store, const ConditionInputs<T>& inputs,
                        const ConditionSwitches& switches, Cache<T>& cache) const;
  template <typename T>
  void backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                const MConditionGrad<T>& grad, nn::Grads<T>& grads) const;
};

}  // namespace aid::cond
