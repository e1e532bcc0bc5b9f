// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace shiftnl {

/// Dense row-major matrix of doubles. Activations are laid out as
/// [tokens x channels].
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Throws ContractError on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
/// Adds `bias` to every row.
void add_row_bias(Matrix& m, std::span<const double> bias);

enum class ElementKind { kF64, kI32, kI8 };

std::string_view element_kind_name(ElementKind kind);
std::size_t element_size(ElementKind kind);

/// N-dimensional tensor with a floating or integer payload. Integer payloads
/// may carry a scale; `dequantized()` then returns codes * scale.
class Tensor {
 public:
  using Storage = std::variant<std::vector<double>, std::vector<std::int32_t>, std::vector<std::int8_t>>;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);
  Tensor(std::vector<std::size_t> shape, std::vector<std::int32_t> values,
         std::optional<double> scale = std::nullopt);
  Tensor(std::vector<std::size_t> shape, std::vector<std::int8_t> values,
         std::optional<double> scale = std::nullopt);

  static Tensor from_matrix(const Matrix& m);

  ElementKind kind() const;
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t numel() const;
  const std::optional<double>& scale() const { return scale_; }
  const Storage& storage() const { return storage_; }

  /// Element i as a double (codes for integer payloads, unscaled).
  double at(std::size_t i) const;
  /// Values as doubles, multiplied by the scale when one is present.
  std::vector<double> dequantized() const;
  /// Views the tensor as [prod(leading dims) x last dim]. Rank-1 tensors
  /// become a single row.
  Matrix as_matrix() const;

  bool operator==(const Tensor&) const = default;

 private:
  void check_size() const;

  std::vector<std::size_t> shape_;
  Storage storage_;
  std::optional<double> scale_;
};

}  // namespace shiftnl
