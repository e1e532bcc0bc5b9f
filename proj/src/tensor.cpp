// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shiftnl/tensor.hpp"

#include <functional>
#include <numeric>
#include <string>

#include "shiftnl/errors.hpp"

namespace shiftnl {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ContractError("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                        " times " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

void add_row_bias(Matrix& m, std::span<const double> bias) {
  if (bias.size() != m.cols) throw ContractError("add_row_bias: bias length mismatch");
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) += bias[j];
}

std::string_view element_kind_name(ElementKind kind) {
  switch (kind) {
    case ElementKind::kF64: return "f64";
    case ElementKind::kI32: return "i32";
    case ElementKind::kI8: return "i8";
  }
  return "?";
}

std::size_t element_size(ElementKind kind) {
  switch (kind) {
    case ElementKind::kF64: return 8;
    case ElementKind::kI32: return 4;
    case ElementKind::kI8: return 1;
  }
  return 0;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), storage_(std::move(values)) {
  check_size();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<std::int32_t> values,
               std::optional<double> scale)
    : shape_(std::move(shape)), storage_(std::move(values)), scale_(scale) {
  check_size();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<std::int8_t> values,
               std::optional<double> scale)
    : shape_(std::move(shape)), storage_(std::move(values)), scale_(scale) {
  check_size();
}

Tensor Tensor::from_matrix(const Matrix& m) { return Tensor({m.rows, m.cols}, m.data); }

ElementKind Tensor::kind() const { return static_cast<ElementKind>(storage_.index()); }

std::size_t Tensor::numel() const {
  return std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
}

void Tensor::check_size() const {
  const std::size_t stored = std::visit([](const auto& v) { return v.size(); }, storage_);
  if (stored != numel()) {
    throw ContractError("tensor payload has " + std::to_string(stored) + " elements, shape needs " +
                        std::to_string(numel()));
  }
}

double Tensor::at(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); }, storage_);
}

std::vector<double> Tensor::dequantized() const {
  std::vector<double> out(numel());
  const double s = scale_.value_or(1.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale_ ? at(i) * s : at(i);
  return out;
}

Matrix Tensor::as_matrix() const {
  if (shape_.empty()) throw ContractError("as_matrix: rank-0 tensor");
  Matrix m;
  m.cols = shape_.back();
  m.rows = m.cols == 0 ? 0 : numel() / m.cols;
  m.data = dequantized();
  return m;
}

}  // namespace shiftnl
