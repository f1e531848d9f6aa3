// Copyright 2026 The subnav Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "subnav/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace subnav::nn {

Dense Dense::glorot(int out, int in, Rng& rng) {
  Dense d;
  d.w.resize(out, in);
  const double scale = std::sqrt(6.0 / (in + out));
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) d.w(r, c) = rng.uniform(-scale, scale);
  d.b.setZero(out);
  return d;
}

Dense Dense::zeros(int out, int in) {
  Dense d;
  d.w.setZero(out, in);
  d.b.setZero(out);
  return d;
}

Eigen::MatrixXd dense_apply(const Dense& d, const Eigen::MatrixXd& x) {
  return (x * d.w.transpose()).rowwise() + d.b.transpose();
}

Eigen::MatrixXd dense_backward(const Dense& d, const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& gy, DenseGrad& grad) {
  grad.w.noalias() += gy.transpose() * x;
  grad.b.noalias() += gy.colwise().sum().transpose();
  return gy * d.w;
}

Mlp Mlp::make(const std::vector<int>& dims, Rng& rng, bool zero_last) {
  Mlp m;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = (i + 2 == dims.size());
    if (last && zero_last) {
      m.layers.push_back(Dense::zeros(dims[i + 1], dims[i]));
    } else {
      m.layers.push_back(Dense::glorot(dims[i + 1], dims[i], rng));
    }
  }
  return m;
}

Eigen::MatrixXd mlp_apply(const Mlp& m, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd h = x;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    h = dense_apply(m.layers[i], h);
    if (i + 1 < m.layers.size()) h = h.array().tanh().matrix();
  }
  return h;
}

Eigen::MatrixXd mlp_forward(const Mlp& m, const Eigen::MatrixXd& x, MlpCache& cache) {
  cache.inputs.clear();
  cache.inputs.reserve(m.layers.size());
  Eigen::MatrixXd h = x;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    cache.inputs.push_back(h);
    h = dense_apply(m.layers[i], h);
    if (i + 1 < m.layers.size()) h = h.array().tanh().matrix();
  }
  return h;
}

Eigen::MatrixXd mlp_backward(const Mlp& m, const MlpCache& cache,
                             const Eigen::MatrixXd& gy, MlpGrad& grad) {
  Eigen::MatrixXd g = gy;
  for (size_t i = m.layers.size(); i-- > 0;) {
    if (i + 1 < m.layers.size()) {
      // g arrives w.r.t. tanh output a = tanh(pre); cache.inputs[i+1] holds a.
      const Eigen::MatrixXd& a = cache.inputs[i + 1];
      g = (g.array() * (1.0 - a.array().square())).matrix();
    }
    g = dense_backward(m.layers[i], cache.inputs[i], g, grad.layers[i]);
  }
  return g;
}

void collect(const std::string& prefix, Dense& d, std::vector<TensorRef>& out) {
  out.push_back(ref(prefix + ".w", d.w));
  out.push_back(ref(prefix + ".b", d.b));
}

void collect(const std::string& prefix, DenseGrad& d, std::vector<TensorRef>& out) {
  out.push_back(ref(prefix + ".w", d.w));
  out.push_back(ref(prefix + ".b", d.b));
}

void collect(const std::string& prefix, Mlp& m, std::vector<TensorRef>& out) {
  for (size_t i = 0; i < m.layers.size(); ++i)
    collect(prefix + "." + std::to_string(i), m.layers[i], out);
}

void collect(const std::string& prefix, MlpGrad& m, std::vector<TensorRef>& out) {
  for (size_t i = 0; i < m.layers.size(); ++i)
    collect(prefix + "." + std::to_string(i), m.layers[i], out);
}

namespace {

Eigen::Index tensor_size(const TensorRef& t) {
  return t.mat ? t.mat->size() : t.vec->size();
}

double* tensor_data(const TensorRef& t) { return t.mat ? t.mat->data() : t.vec->data(); }

}  // namespace

void SgdMomentum::step(const std::vector<TensorRef>& params,
                       const std::vector<TensorRef>& grads) {
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) velocity_[i].setZero(tensor_size(params[i]));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const Eigen::Index n = tensor_size(params[i]);
    Eigen::Map<Eigen::VectorXd> p(tensor_data(params[i]), n);
    Eigen::Map<const Eigen::VectorXd> g(tensor_data(grads[i]), n);
    velocity_[i] = momentum_ * velocity_[i] - lr_ * g;
    p += velocity_[i];
  }
}

namespace {

constexpr char kMagic[] = "SUBNAVCKPT v1\n";

void write_u64(std::ofstream& out, uint64_t v) {
  uint8_t buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::ifstream& in) {
  uint8_t buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<TensorRef>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic) - 1);
  write_u64(out, tensors.size());
  for (const auto& t : tensors) {
    write_u64(out, t.name.size());
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const Eigen::Index rows = t.mat ? t.mat->rows() : t.vec->size();
    const Eigen::Index cols = t.mat ? t.mat->cols() : 1;
    write_u64(out, static_cast<uint64_t>(rows));
    write_u64(out, static_cast<uint64_t>(cols));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double v = t.mat ? (*t.mat)(r, c) : (*t.vec)(r);
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, 8);
        write_u64(out, bits);
      }
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

std::vector<std::pair<std::string, Eigen::MatrixXd>> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(magic)))
    throw IoError("bad checkpoint magic: " + path);
  const uint64_t count = read_u64(in);
  std::vector<std::pair<std::string, Eigen::MatrixXd>> out;
  out.reserve(count);
  for (uint64_t t = 0; t < count; ++t) {
    const uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint64_t rows = read_u64(in);
    const uint64_t cols = read_u64(in);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (uint64_t r = 0; r < rows; ++r)
      for (uint64_t c = 0; c < cols; ++c) {
        const uint64_t bits = read_u64(in);
        double v;
        std::memcpy(&v, &bits, 8);
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      }
    if (!in) throw IoError("truncated checkpoint: " + path);
    out.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

void load_checkpoint(const std::string& path, const std::vector<TensorRef>& tensors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(magic)))
    throw IoError("bad checkpoint magic: " + path);
  const uint64_t count = read_u64(in);
  if (count != tensors.size())
    throw IoError("checkpoint tensor count mismatch: " + path);
  for (const auto& t : tensors) {
    const uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (name != t.name) throw IoError("checkpoint tensor name mismatch: expected " +
                                      t.name + ", found " + name);
    const uint64_t rows = read_u64(in);
    const uint64_t cols = read_u64(in);
    const Eigen::Index er = t.mat ? t.mat->rows() : t.vec->size();
    const Eigen::Index ec = t.mat ? t.mat->cols() : 1;
    if (rows != static_cast<uint64_t>(er) || cols != static_cast<uint64_t>(ec))
      throw IoError("checkpoint tensor shape mismatch for " + t.name);
    for (uint64_t r = 0; r < rows; ++r)
      for (uint64_t c = 0; c < cols; ++c) {
        const uint64_t bits = read_u64(in);
        double v;
        std::memcpy(&v, &bits, 8);
        if (t.mat)
          (*t.mat)(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        else
          (*t.vec)(static_cast<Eigen::Index>(r)) = v;
      }
    if (!in) throw IoError("truncated checkpoint: " + path);
  }
}

}  // namespace subnav::nn
