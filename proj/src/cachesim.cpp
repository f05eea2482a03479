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

#include "reds/cachesim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "reds/errors.hpp"

namespace reds {
namespace {

bool power_of_two(std::uint64_t v) { return v && !(v & (v - 1)); }

}  // namespace

void CacheConfig::validate() const {
  if (!power_of_two(total_bytes) || !power_of_two(ways) || !power_of_two(line_bytes)) {
    fail(ErrorKind::Config, "cache sizes must be powers of two");
  }
  if (total_bytes % (ways * line_bytes) != 0 || ways * line_bytes > total_bytes) {
    fail(ErrorKind::Config, "cache size must be a multiple of ways x line size");
  }
}

std::string to_string(MatmulMode mode) {
  return mode == MatmulMode::Basic ? "basic" : "optimized";
}

MatmulMode parse_matmul_mode(const std::string& s) {
  if (s == "basic") return MatmulMode::Basic;
  if (s == "optimized") return MatmulMode::Optimized;
  fail(ErrorKind::Config, "unknown matmul mode '" + s + "'");
}

std::size_t sliced_neurons(std::size_t n, double slice) {
  if (!(slice > 0.0) || slice > 1.0) {
    fail(ErrorKind::Config, "slice fraction must lie in (0, 1]");
  }
  const auto k = static_cast<std::size_t>(std::ceil(slice * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<std::uint64_t> trace_matmul(MatmulMode mode, std::size_t m, std::size_t n,
                                        std::size_t b, double slice,
                                        std::size_t elem_bytes,
                                        const TraceOptions& options) {
  if (m == 0 || n == 0 || b == 0) fail(ErrorKind::Config, "matrix dimensions must be positive");
  if (elem_bytes != 1 && elem_bytes != 2 && elem_bytes != 4) {
    fail(ErrorKind::Config, "element width must be 1, 2 or 4 bytes");
  }
  const std::size_t na = sliced_neurons(n, slice);
  const std::uint64_t e = elem_bytes;
  const std::uint64_t x_base = static_cast<std::uint64_t>(m) * n * e;
  std::vector<std::uint64_t> t;
  t.reserve(na * m * b * (options.include_inputs ? 2 : 1));
  auto input = [&](std::size_t i, std::size_t k) {
    if (options.include_inputs) t.push_back(x_base + (i * m + k) * e);
  };
  if (mode == MatmulMode::Basic) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < na; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
          input(i, k);
          t.push_back((k * n + j) * e);
        }
      }
    }
  } else {
    for (std::size_t j = 0; j < na; ++j) {
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
          input(i, k);
          t.push_back((j * m + k) * e);
        }
      }
    }
  }
  return t;
}

TraceStats simulate(const std::vector<std::uint64_t>& trace, const CacheConfig& cfg) {
  cfg.validate();
  const std::uint64_t sets = cfg.sets();
  const std::size_t ways = static_cast<std::size_t>(cfg.ways);
  // Per set: tags ordered most recently used first; UINT64_MAX is invalid.
  std::vector<std::uint64_t> tags(sets * ways, UINT64_MAX);
  TraceStats s;
  for (const std::uint64_t addr : trace) {
    const std::uint64_t line = addr / cfg.line_bytes;
    const std::uint64_t set = line % sets;
    const std::uint64_t tag = line / sets;
    auto* row = tags.data() + set * ways;
    auto* end = row + ways;
    auto* hit = std::find(row, end, tag);
    ++s.accesses;
    if (hit != end) {
      ++s.hits;
      std::rotate(row, hit, hit + 1);
    } else {
      ++s.misses;
      std::rotate(row, end - 1, end);
      row[0] = tag;
    }
  }
  return s;
}

std::vector<BenchRow> bench_report(const BenchSweep& sweep, const CacheConfig& cfg) {
  cfg.validate();
  std::vector<BenchRow> rows;
  for (const auto& [m, n] : sweep.shapes) {
    for (const auto e : sweep.elem_bytes) {
      for (const double slice : sweep.slices) {
        for (const auto mode : {MatmulMode::Basic, MatmulMode::Optimized}) {
          BenchRow r;
          r.mode = mode;
          r.m = m;
          r.n = n;
          r.b = sweep.batch;
          r.elem_bytes = e;
          r.slice = slice;
          r.stats = simulate(trace_matmul(mode, m, n, sweep.batch, slice, e, sweep.trace), cfg);
          r.cost = r.stats.cost(sweep.miss_penalty);
          rows.push_back(r);
        }
      }
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "mode,m,n,b,elem_bytes,slice,accesses,hits,misses,hit_rate,cost\n";
  const auto old = out.precision(6);
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << r.m << ',' << r.n << ',' << r.b << ','
        << r.elem_bytes << ',' << r.slice << ',' << r.stats.accesses << ','
        << r.stats.hits << ',' << r.stats.misses << ',' << r.stats.hit_rate() << ','
        << r.cost << '\n';
  }
  out.precision(old);
}

}  // namespace reds
