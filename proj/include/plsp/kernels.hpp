// Copyright 2026 The PLSP Authors. All Rights Reserved.
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

#include <cstddef>
#include <span>

namespace plsp::kernels {

// Dense GEMM variants used by the forward and backward passes. When `accumulate` is
// set the product is added into `c`, otherwise `c` is overwritten. Every output element
// is reduced by one thread in a fixed order, so results do not depend on thread count.

/// c[m×n] (+)= a[m×k] · b[k×n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
/// c[m×n] (+)= a[m×k] · b[n×k]ᵀ
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
/// c[m×n] (+)= a[k×m]ᵀ · b[k×n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);

/// Row-wise logsumexp of x[rows×cols] into out[rows].
void row_logsumexp(std::span<const double> x, std::span<double> out, std::size_t rows, std::size_t cols);

/// Single-threaded reference versions, kept for testing and benchmarking.
namespace serial {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void row_logsumexp(std::span<const double> x, std::span<double> out, std::size_t rows, std::size_t cols);
}  // namespace serial

/// Caps the OpenMP worker count (no-op without OpenMP).
void set_num_threads(int n);
int num_threads();

/// Reads PLSP_THREADS and applies it when set to a positive integer.
void apply_thread_env();

}  // namespace plsp::kernels
