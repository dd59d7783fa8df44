#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>

#include "asgea/tensor.hpp"

namespace asgea::nn {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param(std::string n, int r, int c) : name(std::move(n)), value(r, c), grad(r, c) {}
};

// Ordered parameter registry; iteration order is creation order, which
// fixes checkpoint layout and optimizer determinism.
template <typename T>
class ParamStore {
 public:
  Param<T>* add(const std::string& name, int rows, int cols) {
    if (by_name_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Param<T>>(name, rows, cols));
    by_name_.emplace(name, params_.back().get());
    return params_.back().get();
  }
  Param<T>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.v.begin(), p->grad.v.end(), T(0));
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
  std::unordered_map<std::string, Param<T>*> by_name_;
};

template <typename T>
void xavier_init(Param<T>& p, std::mt19937_64& rng) {
  double limit = std::sqrt(6.0 / (p.value.rows + p.value.cols));
  for (auto& x : p.value.v) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    x = static_cast<T>((2.0 * u - 1.0) * limit);
  }
}

// Two-layer perceptron with ReLU hidden layer.
template <typename T>
struct Mlp {
  Param<T>*W1, *b1, *W2, *b2;

  static Mlp create(ParamStore<T>& store, const std::string& prefix, int in, int hidden, int out) {
    return {store.add(prefix + ".W1", in, hidden), store.add(prefix + ".b1", 1, hidden),
            store.add(prefix + ".W2", hidden, out), store.add(prefix + ".b2", 1, out)};
  }

  void init(std::mt19937_64& rng) {
    xavier_init(*W1, rng);
    xavier_init(*W2, rng);
  }

  typename Tape<T>::Ref apply(Tape<T>& tape, typename Tape<T>::Ref x,
                              typename Tape<T>::Ref w1, typename Tape<T>::Ref bias1,
                              typename Tape<T>::Ref w2, typename Tape<T>::Ref bias2) const {
    auto h = tape.relu(tape.add_bias(tape.matmul(x, w1), bias1));
    return tape.add_bias(tape.matmul(h, w2), bias2);
  }
};

// Standard GRU cell: per-gate input and hidden matrices (d×d) plus one bias
// each. Reset gate applies to the hidden contribution of the candidate.
template <typename T>
struct GruCell {
  Param<T>*Wz, *Uz, *bz, *Wr, *Ur, *br, *Wn, *Un, *bn;

  static GruCell create(ParamStore<T>& store, const std::string& prefix, int d) {
    return {store.add(prefix + ".Wz", d, d), store.add(prefix + ".Uz", d, d),
            store.add(prefix + ".bz", 1, d), store.add(prefix + ".Wr", d, d),
            store.add(prefix + ".Ur", d, d), store.add(prefix + ".br", 1, d),
            store.add(prefix + ".Wn", d, d), store.add(prefix + ".Un", d, d),
            store.add(prefix + ".bn", 1, d)};
  }

  void init(std::mt19937_64& rng) {
    for (Param<T>* m : {Wz, Uz, Wr, Ur, Wn, Un}) xavier_init(*m, rng);
  }
};

// One GRU step over row-batched states: h_prev and x are (n×d).
template <typename T>
typename Tape<T>::Ref gru_step(Tape<T>& tape, const GruCell<T>& cell,
                               const std::unordered_map<const Param<T>*, typename Tape<T>::Ref>& leaves,
                               typename Tape<T>::Ref h_prev, typename Tape<T>::Ref x) {
  auto L = [&](Param<T>* p) { return leaves.at(p); };
  auto z = tape.sigmoid(tape.add_bias(
      tape.add(tape.matmul(x, L(cell.Wz)), tape.matmul(h_prev, L(cell.Uz))), L(cell.bz)));
  auto r = tape.sigmoid(tape.add_bias(
      tape.add(tape.matmul(x, L(cell.Wr)), tape.matmul(h_prev, L(cell.Ur))), L(cell.br)));
  auto n = tape.tanh_(tape.add_bias(
      tape.add(tape.matmul(x, L(cell.Wn)), tape.mul(r, tape.matmul(h_prev, L(cell.Un)))),
      L(cell.bn)));
  return tape.add(tape.mul(tape.one_minus(z), n), tape.mul(z, h_prev));
}

template <typename T>
struct AdamState {
  double lr = 1e-3;
  double weight_decay = 0.0;  // decoupled
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip_norm = 5.0;  // 0 disables
  int64_t step = 0;
  std::unordered_map<const Param<T>*, std::pair<Tensor<T>, Tensor<T>>> moments;
};

// AdamW update over every parameter in the store; gradients are clipped
// by global norm first.
template <typename T>
void adam_step(AdamState<T>& state, ParamStore<T>& store) {
  double sq = 0.0;
  for (const auto& p : store) {
    for (T g : p->grad.v) {
      if (!std::isfinite(static_cast<double>(g)))
        throw DataError("non-finite gradient in parameter " + p->name);
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  T scale = T(1);
  if (state.clip_norm > 0.0) {
    double norm = std::sqrt(sq);
    if (norm > state.clip_norm) scale = static_cast<T>(state.clip_norm / norm);
  }

  ++state.step;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& p : store) {
    auto [it, fresh] = state.moments.try_emplace(
        p.get(), std::make_pair(Tensor<T>(p->value.rows, p->value.cols),
                                Tensor<T>(p->value.rows, p->value.cols)));
    auto& [m, v] = it->second;
    for (size_t i = 0; i < p->value.v.size(); ++i) {
      T g = p->grad.v[i] * scale;
      m.v[i] = static_cast<T>(state.beta1) * m.v[i] + static_cast<T>(1.0 - state.beta1) * g;
      v.v[i] = static_cast<T>(state.beta2) * v.v[i] + static_cast<T>(1.0 - state.beta2) * g * g;
      T mhat = m.v[i] / static_cast<T>(bc1);
      T vhat = v.v[i] / static_cast<T>(bc2);
      p->value.v[i] -= static_cast<T>(state.lr) *
                       (mhat / (std::sqrt(vhat) + static_cast<T>(state.eps)) +
                        static_cast<T>(state.weight_decay) * p->value.v[i]);
    }
  }
}

// Checkpoint format: "ASGC" magic, u32 version, u64 parameter count, then
// per parameter: u32 name length, name bytes, u32 rank, u64 dims,
// little-endian f32 values.
void save_checkpoint_f32(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, std::pair<std::pair<int, int>, std::vector<float>>>>& params);
std::vector<std::pair<std::string, std::pair<std::pair<int, int>, std::vector<float>>>>
load_checkpoint_f32(const std::filesystem::path& path);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& store) {
  std::vector<std::pair<std::string, std::pair<std::pair<int, int>, std::vector<float>>>> out;
  for (const auto& p : store) {
    std::vector<float> data(p->value.v.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(p->value.v[i]);
    out.push_back({p->name, {{p->value.rows, p->value.cols}, std::move(data)}});
  }
  save_checkpoint_f32(path, out);
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParamStore<T>& store) {
  auto entries = load_checkpoint_f32(path);
  for (const auto& [name, payload] : entries) {
    Param<T>* p = store.find(name);
    if (!p) throw DataError("checkpoint parameter not in model: " + name);
    const auto& [shape, data] = payload;
    if (shape.first != p->value.rows || shape.second != p->value.cols)
      throw DataError("checkpoint shape mismatch for " + name);
    for (size_t i = 0; i < data.size(); ++i) p->value.v[i] = static_cast<T>(data[i]);
  }
}

}  // namespace asgea::nn
