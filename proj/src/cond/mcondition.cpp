#include "cond/mcondition.hpp"

namespace aid::cond {

template <typename T>
std::size_t MCondition<T>::width() const {
  return multimodal.empty() ? (decomposed.empty() ? 0 : decomposed.cols()) : multimodal.cols();
}

template <typename T>
nn::BasicTensor<T> MCondition<T>::frame_kv(std::size_t i) const {
  if (i >= frames)
    throw DimensionError("frame_kv: frame " + std::to_string(i) + " out of range for " +
                         std::to_string(frames) + " frames");
  if (decomposed.empty()) return multimodal;
  auto slice = nn::slice_rows(decomposed, i * tokens_per_frame, (i + 1) * tokens_per_frame);
  return nn::concat_rows(multimodal, slice);
}

template <typename T>
MCondition<T> build_mcondition(nn::BasicTensor<T> multimodal, nn::BasicTensor<T> decomposed,
                               std::size_t frames) {
  if (frames == 0) throw DimensionError("build_mcondition: zero frames");
  for (const auto* part : {&multimodal, &decomposed})
    if (!part->empty() && part->rank() != 2)
      throw DimensionError("build_mcondition: parts must be rank 2, got " +
                           nn::shape_str(part->shape()));
  if (!multimodal.empty() && !decomposed.empty() && multimodal.cols() != decomposed.cols())
    throw DimensionError("build_mcondition: width mismatch " + nn::shape_str(multimodal.shape()) +
                         " vs " + nn::shape_str(decomposed.shape()));
  if (decomposed.rows() % frames != 0)
    throw DimensionError("build_mcondition: " + std::to_string(decomposed.rows()) +
                         " decomposed rows do not split into " + std::to_string(frames) +
                         " frames");
  MCondition<T> mc;
  mc.frames = frames;
  mc.tokens_per_frame = decomposed.rows() / frames;
  mc.multimodal = std::move(multimodal);
  mc.decomposed = std::move(decomposed);
  return mc;
}

template <typename T>
void MConditionGrad<T>::add_frame(const MCondition<T>& mc, std::size_t i,
                                  const nn::BasicTensor<T>& grad_kv) {
  const std::size_t C = mc.width(), Lm = mc.multimodal.rows(), Nt = mc.tokens_per_frame;
  if (grad_kv.numel() != (Lm + (mc.decomposed.empty() ? 0 : Nt)) * C)
    throw DimensionError("frame_kv gradient has the wrong size");
  if (Lm > 0) {
    if (multimodal.empty()) multimodal = nn::BasicTensor<T>(mc.multimodal.shape());
    for (std::size_t k = 0; k < Lm * C; ++k) multimodal[k] += grad_kv[k];
  }
  if (!mc.decomposed.empty()) {
    if (decomposed.empty()) decomposed = nn::BasicTensor<T>(mc.decomposed.shape());
    T* dst = decomposed.data() + i * Nt * C;
    for (std::size_t k = 0; k < Nt * C; ++k) dst[k] += grad_kv[Lm * C + k];
  }
}

template <typename T>
Conditioner Conditioner::create(nn::ParamStore<T>& store, nn::Rng& rng, ConditionerConfig config) {
  Conditioner c;
  c.config = config;
  c.text = TextEncoder::create(store, rng, "text_enc",
                               {config.width, config.text_len, config.vocab, config.heads});
  c.visual = VisualEncoder::create(store, rng, "vis_enc",
                                   {config.width, config.vis_patch, config.image, config.heads});
  c.dq = DQFormer::create(store, rng, "dqformer",
                          {config.width, config.frames, config.tokens_per_frame, config.heads,
                           config.depth, 2});
  return c;
}

template <typename T>
MCondition<T> Conditioner::forward(const nn::ParamStore<T>& store,
                                   const ConditionInputs<T>& inputs,
                                   const ConditionSwitches& switches, Cache<T>& cache) const {
  cache = Cache<T>{};
  MCondition<T> mc;
  mc.frames = config.frames;
  mc.tokens_per_frame = config.tokens_per_frame;
  if (inputs.instruction.empty() || (!switches.multimodal && !switches.decomposed)) return mc;

  const auto t1 = text.forward(store, inputs.instruction, cache.instruction);
  if (switches.multimodal) {
    nn::BasicTensor<T> v;
    cache.has_visual = inputs.first_frame != nullptr;
    if (cache.has_visual) v = visual.forward(store, *inputs.first_frame, cache.visual);
    else v = nn::BasicTensor<T>({visual.config.tokens(), config.width});
    mc.multimodal = dq.multimodal(store, t1, v, cache.mm);
    cache.has_mm = true;
  }
  if (switches.decomposed) {
    nn::BasicTensor<T> t2;
    cache.has_states = switches.states && !inputs.states.empty();
    if (cache.has_states) {
      cache.states.resize(inputs.states.size());
      for (std::size_t s = 0; s < inputs.states.size(); ++s)
        t2 = nn::concat_rows(t2, text.forward(store, inputs.states[s], cache.states[s]));
    }
    mc.decomposed = dq.decomposed(store, t1, t2, cache.de);
    cache.has_de = true;
  }
  return mc;
}

template <typename T>
void Conditioner::backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                           const MConditionGrad<T>& grad, nn::Grads<T>& grads) const {
  nn::BasicTensor<T> gt1;
  auto acc = [](nn::BasicTensor<T>& dst, const nn::BasicTensor<T>& src) {
    if (src.empty()) return;
    if (dst.empty()) dst = src;
    else nn::add_inplace(dst, src);
  };
  if (cache.has_mm && !grad.multimodal.empty()) {
    auto [g1, gv] = dq.multimodal_backward(store, cache.mm, grad.multimodal, grads);
    acc(gt1, g1);
    if (cache.has_visual) visual.backward(store, cache.visual, gv, grads);
  }
  if (cache.has_de && !grad.decomposed.empty()) {
    auto [g1, g2] = dq.decomposed_backward(store, cache.de, grad.decomposed, grads);
    acc(gt1, g1);
    if (cache.has_states) {
      const std::size_t L = config.text_len;
      for (std::size_t s = 0; s < cache.states.size(); ++s)
        text.backward(store, cache.states[s], nn::slice_rows(g2, s * L, (s + 1) * L), grads);
    }
  }
  if (!gt1.empty()) text.backward(store, cache.instruction, gt1, grads);
}

template struct MCondition<float>;
template struct MCondition<double>;
template struct MConditionGrad<float>;
template struct MConditionGrad<double>;

#define AID_INSTANTIATE(T)                                                                     \
  template MCondition<T> build_mcondition(nn::BasicTensor<T>, nn::BasicTensor<T>, std::size_t); \
  template Conditioner Conditioner::create(nn::ParamStore<T>&, nn::Rng&, ConditionerConfig);   \
  template MCondition<T> Conditioner::forward(const nn::ParamStore<T>&,                        \
                                              const ConditionInputs<T>&,                       \
                                              const ConditionSwitches&, Cache<T>&) const;      \
  template void Conditioner::backward(const nn::ParamStore<T>&, const Cache<T>&,               \
                                      const MConditionGrad<T>&, nn::Grads<T>&) const;

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::cond
