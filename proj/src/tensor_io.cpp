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

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "reds/tensor.hpp"

namespace reds {
namespace {

static_assert(sizeof(float) == 4);

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {
      static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
      static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    fail(ErrorKind::Data, "truncated tensor header");
  }
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
         (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  put_u32(out, static_cast<std::uint32_t>(t.order()));
  for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (float f : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

Tensor read_tensor(std::istream& in) {
  const std::uint32_t ndim = get_u32(in);
  const std::uint32_t order = get_u32(in);
  if (ndim == 0 || ndim > 8) fail(ErrorKind::Data, "bad tensor rank");
  if (order > 1) fail(ErrorKind::Data, "bad tensor storage order");
  Extents shape(ndim);
  for (auto& e : shape) e = get_u32(in);
  std::vector<float> data(extent_product(shape));
  for (auto& f : data) f = std::bit_cast<float>(get_u32(in));
  return Tensor(std::move(shape), std::move(data),
                static_cast<StorageOrder>(order));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Data, "cannot write " + path);
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot open " + path);
  return read_tensor(in);
}

}  // namespace reds
