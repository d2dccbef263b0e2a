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

#include "plsp/kernels.hpp"

#include <cstdlib>
#include <string>
#include <vector>

#include "plsp/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace plsp::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;
}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel if (m * k * n > kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      const double* arow = a.data() + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = arow[p];
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
      }
      double* crow = c.data() + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
      }
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      if (accumulate) {
        c[i * n + j] += s;
      } else {
        c[i * n + j] = s;
      }
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel if (m * k * n > kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double api = a[p * m + i];
        if (api == 0.0) continue;
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += api * brow[j];
      }
      double* crow = c.data() + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
      }
    }
  }
}

void row_logsumexp(std::span<const double> x, std::span<double> out, std::size_t rows, std::size_t cols) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < r; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    out[i] = logsumexp(x.subspan(i * cols, cols));
  }
}

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void row_logsumexp(std::span<const double> x, std::span<double> out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) out[i] = logsumexp(x.subspan(i * cols, cols));
}

}  // namespace serial

void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void apply_thread_env() {
  if (const char* env = std::getenv("PLSP_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) set_num_threads(static_cast<int>(n));
  }
}

}  // namespace plsp::kernels
