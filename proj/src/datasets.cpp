/*
 * Copyright 2026 The REDS Toolkit Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "reds/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

namespace reds {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at,
                   const std::string& path) {
  if (at + 4 > b.size()) fail(ErrorKind::Data, path + ": truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 bool normalize) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (be32(img, 0, images_path) != kImageMagic) {
    fail(ErrorKind::Data, images_path + ": bad image magic");
  }
  if (be32(lab, 0, labels_path) != kLabelMagic) {
    fail(ErrorKind::Data, labels_path + ": bad label magic");
  }
  const std::size_t count = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t nlab = be32(lab, 4, labels_path);
  if (count != nlab) {
    fail(ErrorKind::Data, "image count " + std::to_string(count) +
                              " != label count " + std::to_string(nlab));
  }
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + count * pixels) {
    fail(ErrorKind::Data, images_path + ": truncated pixel data");
  }
  if (lab.size() < 8 + count) fail(ErrorKind::Data, labels_path + ": truncated labels");

  Dataset d;
  d.sample_shape = Shape3{rows, cols, 1};
  std::vector<float> px(count * pixels);
  const float scale = normalize ? 1.0f / 255.0f : 1.0f;
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = img[16 + i] * scale;
  d.samples = Tensor({count, pixels}, std::move(px));
  d.labels.resize(count);
  int max_label = -1;
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = static_cast<std::size_t>(max_label + 1);
  d.train.resize(count);
  std::iota(d.train.begin(), d.train.end(), 0);
  return d;
}

void write_idx(const std::string& images_path, const std::string& labels_path,
               const Dataset& data, bool normalized) {
  const std::size_t count = data.size();
  const std::size_t rows = data.sample_shape.h;
  const std::size_t cols = data.sample_shape.w * data.sample_shape.c;
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) fail(ErrorKind::Data, "cannot write IDX files");
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(count));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (const float v : data.samples.data()) {
    const double raw = normalized ? std::round(v * 255.0) : std::round(v);
    img.put(static_cast<char>(static_cast<unsigned char>(std::clamp(raw, 0.0, 255.0))));
  }
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(count));
  for (const int l : data.labels) {
    if (l < 0 || l > 255) fail(ErrorKind::Data, "label does not fit a byte");
    lab.put(static_cast<char>(l));
  }
}

Dataset synth_blobs(const BlobOptions& o) {
  if (o.classes < 2) fail(ErrorKind::Config, "need at least two classes");
  if (o.per_class == 0) fail(ErrorKind::Config, "need samples per class");
  const std::size_t dims = o.shape.size();
  if (dims == 0) fail(ErrorKind::Config, "empty sample shape");
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> centers(o.classes, std::vector<double>(dims));
  for (auto& c : centers) {
    double norm = 0.0;
    for (auto& v : c) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : c) v *= o.separation / norm;
  }
  Dataset d;
  d.sample_shape = o.shape;
  d.classes = o.classes;
  const std::size_t count = o.classes * o.per_class;
  std::vector<float> x(count * dims);
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = i % o.classes;
    d.labels[i] = static_cast<int>(c);
    for (std::size_t k = 0; k < dims; ++k) {
      x[i * dims + k] = static_cast<float>(centers[c][k] + normal(rng));
    }
  }
  d.samples = Tensor({count, dims}, std::move(x));
  d.train.resize(count);
  std::iota(d.train.begin(), d.train.end(), 0);
  return d;
}

void split_dataset(Dataset& data, std::uint64_t seed, std::array<unsigned, 3> ratio) {
  const unsigned total = ratio[0] + ratio[1] + ratio[2];
  if (total == 0) fail(ErrorKind::Config, "split ratio sums to zero");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  shuffle_indices(idx, rng);
  const std::size_t n = idx.size();
  const std::size_t n_train = n * ratio[0] / total;
  const std::size_t n_val = n * ratio[1] / total;
  data.train.assign(idx.begin(), idx.begin() + n_train);
  data.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  data.test.assign(idx.begin() + n_train + n_val, idx.end());
}

std::array<unsigned, 3> parse_split(const std::string& text) {
  std::array<unsigned, 3> r{};
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ':')) {
    if (i >= 3) fail(ErrorKind::Config, "split needs three parts: " + text);
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      r[i++] = static_cast<unsigned>(v);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "bad split '" + text + "'");
    }
  }
  if (i != 3) fail(ErrorKind::Config, "split needs three parts: " + text);
  return r;
}

Minibatch gather(const Dataset& data, const std::vector<std::size_t>& indices) {
  const std::size_t f = data.samples.cols();
  std::vector<float> x(indices.size() * f);
  std::vector<int> y(indices.size());
  const auto src = data.samples.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t s = indices[i];
    if (s >= data.size()) fail(ErrorKind::Bounds, "sample index out of range");
    std::copy_n(src.begin() + s * f, f, x.begin() + i * f);
    y[i] = data.labels[s];
  }
  return Minibatch{Tensor({indices.size(), f}, std::move(x)), std::move(y)};
}

MinibatchSource batch_stream(const Dataset& data, std::vector<std::size_t> indices,
                             std::size_t batch_size, std::uint64_t seed, bool cycle) {
  if (batch_size == 0) fail(ErrorKind::Config, "batch size must be positive");
  if (indices.empty()) fail(ErrorKind::Data, "no samples to stream");
  struct State {
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    std::mt19937_64 rng;
  };
  auto st = std::make_shared<State>();
  st->order = std::move(indices);
  st->rng.seed(seed);
  shuffle_indices(st->order, st->rng);
  return [&data, st, batch_size, cycle]() -> std::optional<Minibatch> {
    if (st->pos >= st->order.size()) {
      if (!cycle) return std::nullopt;
      shuffle_indices(st->order, st->rng);
      st->pos = 0;
    }
    const std::size_t end = std::min(st->order.size(), st->pos + batch_size);
    std::vector<std::size_t> idx(st->order.begin() + st->pos, st->order.begin() + end);
    st->pos = end;
    return gather(data, idx);
  };
}

std::vector<std::size_t> fewshot_subsample(const Dataset& data,
                                           const std::vector<std::size_t>& pool,
                                           std::size_t per_class,
                                           std::uint64_t seed) {
  std::vector<std::size_t> order = pool;
  std::mt19937_64 rng(seed);
  shuffle_indices(order, rng);
  std::vector<std::size_t> taken(data.classes, 0);
  std::vector<std::size_t> out;
  for (const auto i : order) {
    const auto c = static_cast<std::size_t>(data.labels.at(i));
    if (c < taken.size() && taken[c] < per_class) {
      ++taken[c];
      out.push_back(i);
    }
  }
  for (std::size_t c = 0; c < taken.size(); ++c) {
    if (taken[c] < per_class) {
      fail(ErrorKind::Data, "class " + std::to_string(c) + " has only " +
                                std::to_string(taken[c]) + " samples, need " +
                                std::to_string(per_class));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double accuracy(const ModelGraph& g, const Dataset& data,
                const std::vector<std::size_t>& indices,
                const ForwardOptions& options) {
  if (indices.empty()) return 0.0;
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  for (std::size_t at = 0; at < indices.size(); at += kChunk) {
    const std::vector<std::size_t> part(
        indices.begin() + at, indices.begin() + std::min(indices.size(), at + kChunk));
    const auto batch = gather(data, part);
    const auto pred = predict(g, batch.inputs, options);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace reds
