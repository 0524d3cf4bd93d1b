#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnsdiff/encoder.hpp"
#include "cnsdiff/rng.hpp"
#include "cnsdiff/tensor.hpp"

namespace cnsdiff {

struct ModelDims {
  int32_t num_users = 0;
  int32_t num_items = 0;
  int d = 64;          // embedding dimension
  int hidden = 64;     // denoiser MLP width
  int time_dim = 16;   // sinusoidal time embedding
  int env_dim = 8;     // learned environment embedding
  int num_envs = 4;
  int K = 3;           // propagation depth

  int net_input_dim() const { return d + time_dim + env_dim; }
};

// Every trainable tensor except the embedding tables: the denoiser MLP, its
// environment embeddings, and the environment-posterior head.
template <typename T>
struct DenseParams {
  Mat<T> w1, w2, w3;          // hidden x in, hidden x hidden, d x hidden
  std::vector<T> b1, b2, b3;
  Mat<T> env_emb;             // num_envs x env_dim
  Mat<T> wq;                  // num_envs x d (posterior head)
  std::vector<T> bq;

  void init_shapes(const ModelDims& m) {
    w1 = Mat<T>(m.hidden, m.net_input_dim());
    w2 = Mat<T>(m.hidden, m.hidden);
    w3 = Mat<T>(m.d, m.hidden);
    b1.assign(m.hidden, T(0));
    b2.assign(m.hidden, T(0));
    b3.assign(m.d, T(0));
    env_emb = Mat<T>(m.num_envs, m.env_dim);
    wq = Mat<T>(m.num_envs, m.d);
    bq.assign(m.num_envs, T(0));
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("denoiser.w1", w1.a);
    f("denoiser.b1", b1);
    f("denoiser.w2", w2.a);
    f("denoiser.b2", b2);
    f("denoiser.w3", w3.a);
    f("denoiser.b3", b3);
    f("denoiser.env_emb", env_emb.a);
    f("posterior.wq", wq.a);
    f("posterior.bq", bq);
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    f("denoiser.w1", w1.a);
    f("denoiser.b1", b1);
    f("denoiser.w2", w2.a);
    f("denoiser.b2", b2);
    f("denoiser.w3", w3.a);
    f("denoiser.b3", b3);
    f("denoiser.env_emb", env_emb.a);
    f("posterior.wq", wq.a);
    f("posterior.bq", bq);
  }

  std::size_t flat_size() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size() +
           env_emb.size() + wq.size() + bq.size();
  }

  void flatten_into(std::vector<T>& out) {
    out.clear();
    out.reserve(flat_size());
    for_each_tensor([&](const char*, std::vector<T>& t) { out.insert(out.end(), t.begin(), t.end()); });
  }

  void add_flat(const std::vector<T>& flat) {
    std::size_t off = 0;
    for_each_tensor([&](const char*, std::vector<T>& t) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += flat[off + i];
      off += t.size();
    });
  }

  void zero() {
    for_each_tensor([](const char*, std::vector<T>& t) { std::fill(t.begin(), t.end(), T(0)); });
  }
};

template <typename T>
struct Model {
  ModelDims dims;
  Mat<T> user_table;  // M x d
  Mat<T> item_table;  // N x d
  DenseParams<T> dense;

  template <typename F>
  void for_each_param(F&& f) {
    f("user_table", user_table.a);
    f("item_table", item_table.a);
    dense.for_each_tensor(f);
  }

  EmbeddingState<T> embedding_view() const {
    EmbeddingState<T> s;
    s.user_table = user_table;
    s.item_table = item_table;
    return s;
  }
};

// Gradients share the container type; a zeroed clone of the model.
template <typename T>
Model<T> zeros_like(const Model<T>& m) {
  Model<T> g;
  g.dims = m.dims;
  g.user_table = Mat<T>(m.user_table.rows, m.user_table.cols);
  g.item_table = Mat<T>(m.item_table.rows, m.item_table.cols);
  g.dense.init_shapes(m.dims);
  return g;
}

template <typename T>
Model<T> init_model(const ModelDims& dims, uint64_t seed) {
  Model<T> m;
  m.dims = dims;
  Rng rng(stream_seed(seed, RngStream::init));
  m.user_table = Mat<T>(dims.num_users, dims.d);
  m.item_table = Mat<T>(dims.num_items, dims.d);
  for (auto& x : m.user_table.a) x = static_cast<T>(rng.gaussian() * 0.01);
  for (auto& x : m.item_table.a) x = static_cast<T>(rng.gaussian() * 0.01);
  m.dense.init_shapes(dims);
  // Xavier-ish fan-in scaling for the MLP, small head, small env embeddings.
  auto fill = [&](Mat<T>& w, double scale) {
    for (auto& x : w.a) x = static_cast<T>(rng.gaussian() * scale);
  };
  fill(m.dense.w1, 1.0 / std::sqrt(static_cast<double>(dims.net_input_dim())));
  fill(m.dense.w2, 1.0 / std::sqrt(static_cast<double>(dims.hidden)));
  fill(m.dense.w3, 1.0 / std::sqrt(static_cast<double>(dims.hidden)));
  fill(m.dense.env_emb, 0.1);
  fill(m.dense.wq, 0.1);
  return m;
}

// Checkpoint: 4-byte little-endian header length, JSON header
// {M, N, d, K, seed, epoch, ...}, then row-major little-endian float32
// tensors: user table, item table, then the dense sections in the order the
// header lists them.
void save_checkpoint(const std::string& path, const Model<float>& model, uint64_t seed,
                     int epoch);
Model<float> load_checkpoint(const std::string& path, uint64_t* seed_out = nullptr,
                             int* epoch_out = nullptr);

}  // namespace cnsdiff
