// Copyright 2026 The NIRM Trajectory Authors
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

#pragma once

// Dense matrix products for the affine primitive and its adjoint.
//
// Every output element accumulates its products in ascending order of the
// contracted index, starting from the existing value of C. Row i of A·B
// therefore depends only on row i of A, bit for bit, whatever the batch size.
// First-order duals are split into value and tangent planes and reuse the
// double kernel.

#include <cstddef>
#include <utility>
#include <vector>

#include "nirm/ad/dual.hpp"

namespace nirm::ad::kernels {

enum class Trans { kNone, kTranspose };

/// Logical (rows, cols) of op(A) where A is stored rows×cols.
inline std::pair<std::size_t, std::size_t> op_dims(std::size_t rows, std::size_t cols, Trans t) {
  return t == Trans::kNone ? std::pair{rows, cols} : std::pair{cols, rows};
}

template <class T>
std::vector<T> transposed(const T* b, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = b[r * cols + c];
  }
  return out;
}

/// C (m×n) += op(A) · op(B). Storage dims are given before transposition.
template <class T>
void gemm_reference(const T* a, std::size_t ar, std::size_t ac, Trans ta, const T* b,
                    std::size_t br, std::size_t bc, Trans tb, T* c) {
  std::vector<T> bt;
  if (tb == Trans::kTranspose) {
    bt = transposed(b, br, bc);
    b = bt.data();
    std::swap(br, bc);
  }
  // b is now k×n row-major. Four output rows share each load of a b row;
  // every element still sums over p in ascending order.
  const std::size_t n = bc;
  const bool trans_a = ta == Trans::kTranspose;
  const std::size_t m = trans_a ? ac : ar;
  const std::size_t k = trans_a ? ar : ac;
  // Element (i, p) of op(A).
  auto a_at = [&](std::size_t i, std::size_t p) -> const T& { return trans_a ? a[p * ac + i] : a[i * ac + p]; };
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* c0 = c + i * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const T a0 = a_at(i, p);
      const T a1 = a_at(i + 1, p);
      const T a2 = a_at(i + 2, p);
      const T a3 = a_at(i + 3, p);
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = bp[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a_at(i, p);
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

inline void gemm(const double* a, std::size_t ar, std::size_t ac, Trans ta, const double* b,
                 std::size_t br, std::size_t bc, Trans tb, double* c) {
  gemm_reference(a, ar, ac, ta, b, br, bc, tb, c);
}

inline bool split(const Dual<double>* x, std::size_t count, std::vector<double>& v,
                  std::vector<double>& d) {
  v.resize(count);
  d.resize(count);
  bool any_tangent = false;
  for (std::size_t i = 0; i < count; ++i) {
    v[i] = x[i].v;
    d[i] = x[i].d;
    any_tangent = any_tangent || x[i].d != 0.0;
  }
  return any_tangent;
}

inline void gemm(const Dual<double>* a, std::size_t ar, std::size_t ac, Trans ta,
                 const Dual<double>* b, std::size_t br, std::size_t bc, Trans tb,
                 Dual<double>* c) {
  std::vector<double> av, ad, bv, bd;
  const bool a_tan = split(a, ar * ac, av, ad);
  const bool b_tan = split(b, br * bc, bv, bd);
  const std::size_t m = op_dims(ar, ac, ta).first;
  const std::size_t n = op_dims(br, bc, tb).second;
  std::vector<double> cv(m * n), cd(m * n);
  for (std::size_t i = 0; i < m * n; ++i) {
    cv[i] = c[i].v;
    cd[i] = c[i].d;
  }
  gemm(av.data(), ar, ac, ta, bv.data(), br, bc, tb, cv.data());
  if (a_tan) gemm(ad.data(), ar, ac, ta, bv.data(), br, bc, tb, cd.data());
  if (b_tan) gemm(av.data(), ar, ac, ta, bd.data(), br, bc, tb, cd.data());
  for (std::size_t i = 0; i < m * n; ++i) c[i] = Dual<double>(cv[i], cd[i]);
}

template <class T>
void gemm(const T* a, std::size_t ar, std::size_t ac, Trans ta, const T* b, std::size_t br,
          std::size_t bc, Trans tb, T* c) {
  gemm_reference(a, ar, ac, ta, b, br, bc, tb, c);
}

}  // namespace nirm::ad::kernels
