#include "nn/params.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace aid::nn {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
ParamId ParamStore<T>::add(std::string name, BasicTensor<T> value, bool frozen) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  const ParamId id = params_.size();
  index_.emplace(name, id);
  BasicTensor<T> grad(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(grad), frozen});
  return id;
}

template <typename T>
std::optional<ParamId> ParamStore<T>::find(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
ParamId ParamStore<T>::id(std::string_view name) const {
  if (auto found = find(name)) return *found;
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.grad.fill(T{0});
}

template <typename T>
std::size_t ParamStore<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
std::size_t ParamStore<T>::trainable_element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!p.frozen) n += p.value.numel();
  return n;
}

template <typename T>
void ParamStore<T>::freeze_matching(const std::vector<std::string>& frozen_prefixes) {
  for (auto& p : params_) {
    p.frozen = false;
    for (const auto& prefix : frozen_prefixes)
      if (p.name.starts_with(prefix)) p.frozen = true;
  }
}

template <typename T>
Grads<T>::Grads(const ParamStore<T>& store)
    : wants_(store.size()), shapes_(store.size()), buffers_(store.size()) {
  for (ParamId i = 0; i < store.size(); ++i) {
    wants_[i] = !store[i].frozen;
    shapes_[i] = store[i].value.shape();
  }
}

template <typename T>
BasicTensor<T>& Grads<T>::buffer(ParamId id) {
  if (!wants(id)) throw ConfigError("gradient requested for frozen parameter");
  auto& b = buffers_[id];
  if (b.numel() == 0 && shape_numel(shapes_[id]) != 0) b = BasicTensor<T>(shapes_[id]);
  return b;
}

template <typename T>
const BasicTensor<T>* Grads<T>::find(ParamId id) const {
  if (id >= buffers_.size() || buffers_[id].numel() == 0) return nullptr;
  return &buffers_[id];
}

template <typename T>
void Grads<T>::flush_into(ParamStore<T>& store) const {
  for (ParamId i = 0; i < buffers_.size(); ++i)
    if (buffers_[i].numel() != 0) add_inplace(store[i].grad, buffers_[i]);
}

template <typename T>
void Grads<T>::add(const Grads& other) {
  for (ParamId i = 0; i < other.buffers_.size(); ++i)
    if (other.buffers_[i].numel() != 0) add_inplace(buffer(i), other.buffers_[i]);
}

template <typename T>
BasicTensor<T> random_normal(Shape shape, double stddev, Rng& rng) {
  BasicTensor<T> out(std::move(shape));
  for (auto& v : out.values()) v = static_cast<T>(stddev * rng.normal());
  return out;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("unexpected end of file");
  return v;
}

void write_f32(std::ostream& os, std::span<const float> values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size_bytes()));
}

void read_f32(std::istream& is, std::span<float> values) {
  if (!is.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes())))
    throw FormatError("unexpected end of file in tensor payload");
}

void write_params(std::ostream& os, const ParamStore<float>& store) {
  for (const auto& p : store) {
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, static_cast<std::uint32_t>(p.value.rank()));
    for (auto e : p.value.shape()) write_u32(os, static_cast<std::uint32_t>(e));
    write_f32(os, p.value.values());
  }
}

ParamStore<float> read_params(std::istream& is, std::size_t count) {
  constexpr std::uint32_t kMaxName = 4096, kMaxRank = 8;
  ParamStore<float> store;
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = read_u32(is);
    if (len == 0 || len > kMaxName) throw FormatError("bad parameter name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("unexpected end of file in name");
    const auto rank = read_u32(is);
    if (rank > kMaxRank) throw FormatError("bad rank for parameter '" + name + "'");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& e : shape) {
      e = read_u32(is);
      numel *= e;
      if (numel > (std::size_t{1} << 31)) throw FormatError("tensor too large: '" + name + "'");
    }
    Tensor value(shape);
    read_f32(is, value.values());
    store.add(std::move(name), std::move(value));
  }
  return store;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Grads<float>;
template class Grads<double>;
template BasicTensor<float> random_normal(Shape, double, Rng&);
template BasicTensor<double> random_normal(Shape, double, Rng&);

}  // namespace aid::nn
