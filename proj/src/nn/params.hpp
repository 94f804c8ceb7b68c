#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "nn/tensor.hpp"

namespace aid::nn {

using ParamId = std::size_t;

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool frozen = false;
};

// Insertion-ordered named parameters. Iteration order is the order of add().
template <typename T>
class ParamStore {
 public:
  ParamId add(std::string name, BasicTensor<T> value, bool frozen = false);

  std::optional<ParamId> find(std::string_view name) const;
  ParamId id(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name).has_value(); }

  Parameter<T>& operator[](ParamId id) { return params_[id]; }
  const Parameter<T>& operator[](ParamId id) const { return params_[id]; }
  Parameter<T>& at(std::string_view name) { return params_[id(name)]; }
  const Parameter<T>& at(std::string_view name) const { return params_[id(name)]; }
  const BasicTensor<T>& value(ParamId id) const { return params_[id].value; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t element_count() const;
  std::size_t trainable_element_count() const;

  // Frozen iff the name starts with any of the given prefixes.
  void freeze_matching(const std::vector<std::string>& frozen_prefixes);

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>(), p.frozen);
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, ParamId, std::less<>> index_;
};

// Per-evaluation gradient accumulator parallel to a ParamStore. Frozen
// parameters never receive a buffer, so backward passes skip their weight
// gradients entirely.
template <typename T>
class Grads {
 public:
  Grads() = default;
  explicit Grads(const ParamStore<T>& store);

  bool wants(ParamId id) const { return id < wants_.size() && wants_[id]; }
  // Returns the buffer for a trainable parameter, allocating on first use.
  BasicTensor<T>& buffer(ParamId id);
  const BasicTensor<T>* find(ParamId id) const;

  // Adds every allocated buffer into the store's grad tensors, in index order.
  void flush_into(ParamStore<T>& store) const;
  void add(const Grads& other);

 private:
  std::vector<char> wants_;
  std::vector<Shape> shapes_;
  std::vector<BasicTensor<T>> buffers_;
};

// Deterministic random source. Everything seeded derives from this engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

template <typename T>
BasicTensor<T> random_normal(Shape shape, double stddev, Rng& rng);

// Binary layout, per parameter in store order:
//   u32 name length, UTF-8 name, u32 rank, u32 extents[rank], f32 payload (LE).
void write_params(std::ostream& os, const ParamStore<float>& store);
// Reads `count` parameters written by write_params. Frozen flags default false.
ParamStore<float> read_params(std::istream& is, std::size_t count);

void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);
void write_f32(std::ostream& os, std::span<const float> values);
void read_f32(std::istream& is, std::span<float> values);

}  // namespace aid::nn
