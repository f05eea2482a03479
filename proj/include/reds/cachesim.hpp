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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace reds {

/// Set-associative cache with LRU replacement, cold at start.
struct CacheConfig {
  std::uint64_t total_bytes = 16384;
  std::uint64_t ways = 2;
  std::uint64_t line_bytes = 8;

  std::uint64_t sets() const { return total_bytes / (ways * line_bytes); }
  void validate() const;
};

struct TraceStats {
  std::uint64_t accesses = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;

  double hit_rate() const {
    return accesses ? static_cast<double>(hits) / static_cast<double>(accesses) : 0.0;
  }
  std::uint64_t cost(std::uint64_t miss_penalty) const {
    return accesses + miss_penalty * misses;
  }
};

enum class MatmulMode { Basic, Optimized };

std::string to_string(MatmulMode mode);
MatmulMode parse_matmul_mode(const std::string& s);

struct TraceOptions {
  /// Interleave input reads, placed after the weights in memory.
  bool include_inputs = false;
};

/// Byte addresses read by a sliced product of weights W [m x n] with inputs
/// X [m x b], keeping the first ceil(slice * n) neurons. Basic scans a
/// row-major W column by column; Optimized reads a transposed W row by row.
std::vector<std::uint64_t> trace_matmul(MatmulMode mode, std::size_t m,
                                        std::size_t n, std::size_t b,
                                        double slice, std::size_t elem_bytes,
                                        const TraceOptions& options = {});

/// Active neurons for a slice fraction.
std::size_t sliced_neurons(std::size_t n, double slice);

TraceStats simulate(const std::vector<std::uint64_t>& trace, const CacheConfig& cfg);

struct BenchRow {
  MatmulMode mode = MatmulMode::Basic;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t b = 0;
  std::size_t elem_bytes = 0;
  double slice = 1.0;
  TraceStats stats;
  std::uint64_t cost = 0;
};

struct BenchSweep {
  /// (inputs m, neurons n) weight shapes.
  std::vector<std::pair<std::size_t, std::size_t>> shapes{
      {256, 64}, {256, 128}, {256, 256}, {256, 512}};
  std::size_t batch = 4;
  std::vector<std::size_t> elem_bytes{1, 2, 4};
  std::vector<double> slices{0.25, 0.5, 0.75, 1.0};
  std::uint64_t miss_penalty = 10;
  TraceOptions trace;
};

std::vector<BenchRow> bench_report(const BenchSweep& sweep, const CacheConfig& cfg);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace reds
