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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "reds/errors.hpp"

namespace reds {

enum class StorageOrder : std::uint32_t { RowMajor = 0, ColMajor = 1 };

namespace detail {
inline std::atomic<std::uint64_t> element_copies{0};
}  // namespace detail

/// Total number of tensor elements duplicated by copy construction or copy
/// assignment since process start. Views and moves never touch it.
inline std::uint64_t element_copy_count() {
  return detail::element_copies.load(std::memory_order_relaxed);
}

using Extents = std::vector<std::size_t>;

inline std::size_t extent_product(const Extents& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense N-d array with an explicit storage order.
///
/// RowMajor: the last index varies fastest. ColMajor: the first index varies
/// fastest. For a 2-D tensor element (i, j) lives at i*cols + j or
/// j*rows + i respectively.
template <typename Scalar>
class BasicTensor {
 public:
  using value_type = Scalar;

  BasicTensor() = default;

  explicit BasicTensor(Extents shape,
                       StorageOrder order = StorageOrder::RowMajor)
      : shape_(std::move(shape)), order_(order) {
    check_shape();
    data_.assign(extent_product(shape_), Scalar{0});
  }

  BasicTensor(Extents shape, std::vector<Scalar> data,
              StorageOrder order = StorageOrder::RowMajor)
      : shape_(std::move(shape)), order_(order), data_(std::move(data)) {
    check_shape();
    if (data_.size() != extent_product(shape_)) {
      fail(ErrorKind::Shape, "data length " + std::to_string(data_.size()) +
                                 " does not match shape product " +
                                 std::to_string(extent_product(shape_)));
    }
  }

  BasicTensor(const BasicTensor& other)
      : shape_(other.shape_), order_(other.order_), data_(other.data_) {
    detail::element_copies.fetch_add(data_.size(), std::memory_order_relaxed);
  }

  BasicTensor& operator=(const BasicTensor& other) {
    if (this != &other) {
      shape_ = other.shape_;
      order_ = other.order_;
      data_ = other.data_;
      detail::element_copies.fetch_add(data_.size(),
                                       std::memory_order_relaxed);
    }
    return *this;
  }

  BasicTensor(BasicTensor&&) noexcept = default;
  BasicTensor& operator=(BasicTensor&&) noexcept = default;

  const Extents& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t dim) const { return shape_.at(dim); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  StorageOrder order() const { return order_; }

  /// Leading extent (dim 0).
  std::size_t rows() const { return shape_.empty() ? 0 : shape_.front(); }
  /// Trailing extent (last dim).
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<const Scalar> data() const { return data_; }

  /// Moves the storage out, leaving the tensor empty.
  std::vector<Scalar> take_data() && {
    shape_.clear();
    return std::move(data_);
  }

  /// Exclusive mutation handle. Callers must hold the only reference while
  /// writing.
  std::span<Scalar> mutable_data() { return data_; }

  std::size_t offset(std::initializer_list<std::size_t> index) const {
    return offset(std::span<const std::size_t>(index.begin(), index.size()));
  }

  std::size_t offset(std::span<const std::size_t> index) const {
    std::size_t flat = 0;
    if (order_ == StorageOrder::RowMajor) {
      for (std::size_t d = 0; d < shape_.size(); ++d) {
        flat = flat * shape_[d] + index[d];
      }
    } else {
      for (std::size_t d = shape_.size(); d-- > 0;) {
        flat = flat * shape_[d] + index[d];
      }
    }
    return flat;
  }

  /// 2-D element stride pair (row step, col step) in flat storage.
  std::pair<std::size_t, std::size_t> strides2d() const {
    return order_ == StorageOrder::RowMajor
               ? std::pair<std::size_t, std::size_t>{shape_[1], 1}
               : std::pair<std::size_t, std::size_t>{1, shape_[0]};
  }

  Scalar operator()(std::size_t i, std::size_t j) const {
    const auto [rs, cs] = strides2d();
    return data_[i * rs + j * cs];
  }

  Scalar& operator()(std::size_t i, std::size_t j) {
    const auto [rs, cs] = strides2d();
    return data_[i * rs + j * cs];
  }

  template <typename... Index>
  Scalar at(Index... index) const {
    const std::size_t idx[] = {static_cast<std::size_t>(index)...};
    return data_[offset(std::span<const std::size_t>(idx, sizeof...(Index)))];
  }

  template <typename... Index>
  Scalar& at(Index... index) {
    const std::size_t idx[] = {static_cast<std::size_t>(index)...};
    return data_[offset(std::span<const std::size_t>(idx, sizeof...(Index)))];
  }

  /// Same logical contents re-laid-out in the requested order.
  BasicTensor with_order(StorageOrder order) const {
    if (order == order_) return *this;
    BasicTensor out(shape_, order);
    std::vector<std::size_t> idx(shape_.size(), 0);
    for (std::size_t n = 0; n < data_.size(); ++n) {
      out.data_[out.offset(idx)] = data_[offset(idx)];
      for (std::size_t d = shape_.size(); d-- > 0;) {
        if (++idx[d] < shape_[d]) break;
        idx[d] = 0;
      }
    }
    return out;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.order_ == b.order_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    for (auto e : shape_) {
      if (e == 0) fail(ErrorKind::Shape, "tensor extents must be positive");
    }
  }

  Extents shape_;
  StorageOrder order_ = StorageOrder::RowMajor;
  std::vector<Scalar> data_;
};

using Tensor = BasicTensor<float>;

/// Non-owning window onto the leading rows x cols block of a tensor. Rows
/// refer to dim 0 and cols to the last dim, so the same view type restricts
/// dense matrices and filter banks alike.
template <typename Scalar>
class BasicTensorView {
 public:
  BasicTensorView(const BasicTensor<Scalar>& base, std::size_t rows,
                  std::size_t cols)
      : base_(&base), rows_(rows), cols_(cols) {}

  const BasicTensor<Scalar>& base() const { return *base_; }
  std::size_t active_rows() const { return rows_; }
  std::size_t active_cols() const { return cols_; }

  Scalar operator()(std::size_t i, std::size_t j) const {
    return (*base_)(i, j);
  }

  std::size_t flat_index(std::size_t i, std::size_t j) const {
    const auto [rs, cs] = base_->strides2d();
    return i * rs + j * cs;
  }

 private:
  const BasicTensor<Scalar>* base_;
  std::size_t rows_;
  std::size_t cols_;
};

using TensorView = BasicTensorView<float>;

template <typename Scalar>
BasicTensorView<Scalar> slice_view(const BasicTensor<Scalar>& t,
                                   std::size_t rows, std::size_t cols) {
  if (t.rank() < 1) fail(ErrorKind::Bounds, "cannot view an empty tensor");
  if (rows == 0 || rows > t.rows() || cols == 0 || cols > t.cols()) {
    fail(ErrorKind::Bounds, "slice " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " exceeds extents " +
                                std::to_string(t.rows()) + "x" +
                                std::to_string(t.cols()));
  }
  return BasicTensorView<Scalar>(t, rows, cols);
}

template <typename Scalar>
BasicTensorView<Scalar> full_view(const BasicTensor<Scalar>& t) {
  return BasicTensorView<Scalar>(t, t.rows(), t.cols());
}

/// Materialized 2-D transpose; the result keeps the source storage order.
template <typename Scalar>
BasicTensor<Scalar> transpose(const BasicTensor<Scalar>& t) {
  if (t.rank() != 2) fail(ErrorKind::Shape, "transpose needs a 2-D tensor");
  BasicTensor<Scalar> out({t.cols(), t.rows()}, t.order());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out(j, i) = t(i, j);
  }
  return out;
}

/// Probe that ignores everything; the production instantiation.
struct NullProbe {
  void weight_read(std::size_t) {}
  void mac() {}
};

/// Records the flat storage index of every weight read, in order.
struct AccessRecorder {
  std::vector<std::size_t> reads;
  std::uint64_t macs = 0;
  void weight_read(std::size_t flat) { reads.push_back(flat); }
  void mac() { ++macs; }
};

/// Counts multiplies only.
struct MacCounter {
  std::uint64_t macs = 0;
  void weight_read(std::size_t) {}
  void mac() { ++macs; }
};

/// Float products are summed in double; other scalars in their own type.
template <typename Scalar>
using AccumulatorOf = std::conditional_t<std::is_same_v<Scalar, float>, double, Scalar>;

/// result[i][j] = sum_k x[k][i] * w[k][j] for x [m x b] and w [m x n].
/// Loop order: batch, neuron, input; the weight matrix is scanned
/// column-wise, which is the access pattern of a row-major store.
template <typename Scalar, typename Probe = NullProbe>
BasicTensor<Scalar> matmul_basic(const BasicTensorView<Scalar>& x,
                                 const BasicTensorView<Scalar>& w,
                                 Probe&& probe = Probe{}) {
  const std::size_t m = x.active_rows();
  const std::size_t b = x.active_cols();
  const std::size_t n = w.active_cols();
  if (w.active_rows() != m) {
    fail(ErrorKind::Shape, "matmul inner dimensions " + std::to_string(m) +
                               " and " + std::to_string(w.active_rows()) +
                               " differ");
  }
  const auto [xrs, xcs] = x.base().strides2d();
  const auto [wrs, wcs] = w.base().strides2d();
  const auto xd = x.base().data();
  const auto wd = w.base().data();
  BasicTensor<Scalar> out({b, n});
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      AccumulatorOf<Scalar> acc{0};
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t widx = k * wrs + j * wcs;
        probe.weight_read(widx);
        probe.mac();
        acc += AccumulatorOf<Scalar>(xd[k * xrs + i * xcs]) * wd[widx];
      }
      od[i * n + j] = static_cast<Scalar>(acc);
    }
  }
  return out;
}

/// Computes (W^T X)^T with wT [n x m] the transpose of the logical weights,
/// so every logical column of W is read as one contiguous run.
template <typename Scalar, typename Probe = NullProbe>
BasicTensor<Scalar> matmul_optimized(const BasicTensorView<Scalar>& x,
                                     const BasicTensorView<Scalar>& wt,
                                     Probe&& probe = Probe{}) {
  const std::size_t m = x.active_rows();
  const std::size_t b = x.active_cols();
  const std::size_t n = wt.active_rows();
  if (wt.active_cols() != m) {
    fail(ErrorKind::Shape, "matmul inner dimensions " + std::to_string(m) +
                               " and " + std::to_string(wt.active_cols()) +
                               " differ");
  }
  const auto [xrs, xcs] = x.base().strides2d();
  const auto [wrs, wcs] = wt.base().strides2d();
  const auto xd = x.base().data();
  const auto wd = wt.base().data();
  BasicTensor<Scalar> out({b, n});
  auto od = out.mutable_data();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < b; ++i) {
      AccumulatorOf<Scalar> acc{0};
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t widx = j * wrs + k * wcs;
        probe.weight_read(widx);
        probe.mac();
        acc += AccumulatorOf<Scalar>(wd[widx]) * xd[k * xrs + i * xcs];
      }
      od[i * n + j] = static_cast<Scalar>(acc);
    }
  }
  return out;
}

template <typename Scalar, typename Probe = NullProbe>
BasicTensor<Scalar> matmul_basic(const BasicTensor<Scalar>& x,
                                 const BasicTensor<Scalar>& w,
                                 Probe&& probe = Probe{}) {
  if (x.rank() != 2 || w.rank() != 2) {
    fail(ErrorKind::Shape, "matmul operands must be 2-D");
  }
  return matmul_basic(full_view(x), full_view(w), std::forward<Probe>(probe));
}

template <typename Scalar, typename Probe = NullProbe>
BasicTensor<Scalar> matmul_optimized(const BasicTensor<Scalar>& x,
                                     const BasicTensor<Scalar>& wt,
                                     Probe&& probe = Probe{}) {
  if (x.rank() != 2 || wt.rank() != 2) {
    fail(ErrorKind::Shape, "matmul operands must be 2-D");
  }
  return matmul_optimized(full_view(x), full_view(wt),
                          std::forward<Probe>(probe));
}

/// Read-only Eigen view of the active block of a 2-D view.
template <typename Scalar>
auto eigen_block(const BasicTensorView<Scalar>& v) {
  using Stride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto [rs, cs] = v.base().strides2d();
  return Eigen::Map<const Mat, 0, Stride>(
      v.base().data().data(), static_cast<Eigen::Index>(v.active_rows()),
      static_cast<Eigen::Index>(v.active_cols()),
      Stride(static_cast<Eigen::Index>(cs), static_cast<Eigen::Index>(rs)));
}

// Binary blob: u32 ndim, u32 order, ndim x u32 extents, little-endian f32.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace reds
