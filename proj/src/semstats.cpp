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

#include "plsp/semstats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "plsp/errors.hpp"
#include "plsp/kernels.hpp"

namespace plsp {

void SemanticSpec::validate() const {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be > 0");
  if (!(eig_floor >= 0.0)) throw InvalidArgument("eig_floor must be >= 0");
}

ClassCovStats::ClassCovStats(std::size_t num_labels, std::size_t dim)
    : dim_(dim), counts_(num_labels, 0), means_(num_labels, std::vector<double>(dim, 0.0)), covs_(num_labels, Tensor(dim, dim)) {}

void ClassCovStats::update(const Tensor& features, std::span<const Label> classes) {
  if (features.rows() != classes.size()) throw ShapeError("ClassCovStats::update: feature/class count mismatch");
  if (features.rows() > 0 && features.cols() != dim_) throw ShapeError("ClassCovStats::update: feature dimension mismatch");
  for (Label c : classes) {
    if (c >= counts_.size()) throw InvalidArgument("ClassCovStats::update: class out of range");
  }
  for (Label j = 0; j < counts_.size(); ++j) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == j) rows.push_back(i);
    }
    if (rows.empty()) continue;
    const double mb = static_cast<double>(rows.size());
    std::vector<double> mu_b(dim_, 0.0);
    for (std::size_t i : rows) {
      for (std::size_t k = 0; k < dim_; ++k) mu_b[k] += features(i, k);
    }
    for (double& v : mu_b) v /= mb;
    Tensor cov_b(dim_, dim_);
    for (std::size_t i : rows) {
      for (std::size_t r = 0; r < dim_; ++r) {
        const double dr = features(i, r) - mu_b[r];
        for (std::size_t c = 0; c < dim_; ++c) cov_b(r, c) += dr * (features(i, c) - mu_b[c]);
      }
    }
    for (double& v : cov_b.data()) v /= mb;

    const double m = static_cast<double>(counts_[j]);
    const double total = m + mb;
    auto& mu = means_[j];
    Tensor& cov = covs_[j];
    // Upper triangle, mirrored, so Σ stays exactly symmetric.
    for (std::size_t r = 0; r < dim_; ++r) {
      for (std::size_t c = r; c < dim_; ++c) {
        cov(r, c) = (m * cov(r, c) + mb * cov_b(r, c)) / total +
                    m * mb * (mu[r] - mu_b[r]) * (mu[c] - mu_b[c]) / (total * total);
        cov(c, r) = cov(r, c);
      }
    }
    for (std::size_t k = 0; k < dim_; ++k) mu[k] = (m * mu[k] + mb * mu_b[k]) / total;
    counts_[j] += rows.size();
  }
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double probit_sup_error(double beta) {
  double worst = 0.0;
  for (int i = -8000; i <= 8000; ++i) {
    const double x = i * 1e-3;
    worst = std::max(worst, std::abs(1.0 / (1.0 + std::exp(-x)) - std_normal_cdf(beta * x)));
  }
  return worst;
}

double fit_probit_slope(double lo, double hi, double step) {
  double best = lo;
  double best_err = probit_sup_error(lo);
  const auto steps = static_cast<long>(std::llround((hi - lo) / step));
  for (long s = 1; s <= steps; ++s) {
    const double beta = lo + static_cast<double>(s) * step;
    const double err = probit_sup_error(beta);
    if (err < best_err) {
      best_err = err;
      best = beta;
    }
  }
  return best;
}

Tensor pairwise_quadratic(const Tensor& head, const Tensor& sigma) {
  const std::size_t l = head.rows(), d = head.cols();
  if (sigma.rows() != d || sigma.cols() != d) throw ShapeError("pairwise_quadratic: Σ shape does not match head width");
  Tensor S(l, d), M(l, l), D(l, l);
  kernels::gemm_nn(head.data(), sigma.data(), S.data(), l, d, d);
  kernels::gemm_nt(S.data(), head.data(), M.data(), l, d, l);
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t jp = 0; jp < l; ++jp) D(j, jp) = jp == j ? 0.0 : M(j, j) + M(jp, jp) - 2.0 * M(j, jp);
  }
  return D;
}

SemanticSampler::SemanticSampler(const Tensor& sigma, double lambda, double eig_floor) : dim_(sigma.rows()) {
  if (sigma.rows() != sigma.cols()) throw ShapeError("Σ must be square");
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  double scale = 1.0;
  for (double v : sigma.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t r = 0; r < dim_; ++r) {
    for (std::size_t c = r + 1; c < dim_; ++c) {
      if (std::abs(sigma(r, c) - sigma(c, r)) > 1e-10 * scale) throw InvalidArgument("Σ is not symmetric");
    }
  }
  if (lambda == 0.0) return;
  Eigen::MatrixXd m(dim_, dim_);
  for (std::size_t r = 0; r < dim_; ++r) {
    for (std::size_t c = 0; c < dim_; ++c) m(r, c) = sigma(r, c);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition of Σ failed");
  factor_ = Tensor(dim_, dim_);
  for (std::size_t c = 0; c < dim_; ++c) {
    const double e = std::max(eig.eigenvalues()(static_cast<Eigen::Index>(c)), eig_floor);
    const double s = std::sqrt(lambda * std::max(e, 0.0));
    if (s != 0.0) identity_ = false;
    for (std::size_t r = 0; r < dim_; ++r) {
      factor_(r, c) = eig.eigenvectors()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * s;
    }
  }
}

std::vector<double> SemanticSampler::sample(std::span<const double> a, Rng& rng) const {
  if (a.size() != dim_) throw ShapeError("feature dimension does not match Σ");
  std::vector<double> out(a.begin(), a.end());
  if (identity_) return out;
  std::vector<double> eps(dim_);
  for (double& e : eps) e = standard_normal(rng);
  for (std::size_t r = 0; r < dim_; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) s += factor_(r, c) * eps[c];
    out[r] += s;
  }
  return out;
}

std::vector<double> sample_semantic(std::span<const double> a, const Tensor& sigma, double lambda, Rng& rng,
                                    double eig_floor) {
  return SemanticSampler(sigma, lambda, eig_floor).sample(a, rng);
}

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite input");
  }
}

std::vector<double> head_logits(const Tensor& head, std::span<const double> features) {
  if (features.size() != head.cols()) throw ShapeError("feature dimension does not match head");
  std::vector<double> z(head.rows());
  kernels::serial::gemm_nt(head.data(), features, z, head.rows(), head.cols(), 1);
  return z;
}

}  // namespace

std::vector<double> probit_weak_probs_from_logits(std::span<const double> logits, const Tensor& pair_quad,
                                                  double lambda, double beta) {
  require_finite(logits, "probit_weak_probs");
  const std::size_t l = logits.size();
  if (pair_quad.rows() != l || pair_quad.cols() != l) throw ShapeError("pairwise matrix does not match logits");
  std::vector<double> p(l);
  double total = 0.0;
  for (std::size_t j = 0; j < l; ++j) {
    double denom = -static_cast<double>(l);
    for (std::size_t jp = 0; jp < l; ++jp) {
      const double arg = beta * (logits[j] - logits[jp]) / std::sqrt(1.0 + lambda * beta * beta * pair_quad(j, jp));
      denom += 1.0 / std::clamp(std_normal_cdf(arg), 1e-12, 1.0 - 1e-12);
    }
    p[j] = std::max(1.0 / denom, 0.0);
    total += p[j];
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> probit_weak_probs(const Tensor& frozen_head, std::span<const double> features,
                                      const Tensor& sigma, double lambda, double beta) {
  return probit_weak_probs_from_logits(head_logits(frozen_head, features), pairwise_quadratic(frozen_head, sigma),
                                       lambda, beta);
}

std::vector<double> shifted_log_probs_from_logits(std::span<const double> logits, const Tensor& pair_quad,
                                                  double lambda) {
  require_finite(logits, "shifted_softmax_probs");
  const std::size_t l = logits.size();
  if (pair_quad.rows() != l || pair_quad.cols() != l) throw ShapeError("pairwise matrix does not match logits");
  std::vector<double> out(l), shifted(l);
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t jp = 0; jp < l; ++jp) shifted[jp] = logits[jp] + 0.5 * lambda * pair_quad(j, jp);
    out[j] = logits[j] - logsumexp(shifted);
  }
  return out;
}

ShiftedSoftmax shifted_softmax_probs(const Tensor& head, std::span<const double> features, const Tensor& sigma,
                                     double lambda) {
  ShiftedSoftmax s;
  s.log_probs = shifted_log_probs_from_logits(head_logits(head, features), pairwise_quadratic(head, sigma), lambda);
  s.probs.reserve(s.log_probs.size());
  for (double lp : s.log_probs) s.probs.push_back(std::exp(lp));
  return s;
}

}  // namespace plsp
