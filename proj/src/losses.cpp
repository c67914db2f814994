#include "reid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "reid/distance.hpp"
#include "reid/error.hpp"

namespace reid {

namespace {

void require_labels(const LabeledBatch& batch) {
  if (batch.labels.size() != batch.embeddings.rows()) {
    fail(errc::length_mismatch, std::to_string(batch.labels.size()) + " labels for " +
                                    std::to_string(batch.embeddings.rows()) + " embeddings");
  }
}

void require_margin(double margin) {
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    fail(errc::config_invalid, "margin must be a nonnegative finite real");
  }
}

void require_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    fail(errc::config_invalid, "epsilon must lie in [0, 1)");
  }
}

// Accumulates scale * d D(a,b) / d x into rows a and b of grad, where
// d D(a,b) / d x_a = (x_a - x_b) / D(a,b); subgradient 0 when the points
// coincide.
void add_distance_grad(Matrix& grad, const Matrix& x, std::size_t a, std::size_t b, double dist,
                       double scale) {
  if (dist == 0.0) return;
  const std::size_t d = x.cols();
  const double* xa = x.data() + a * d;
  const double* xb = x.data() + b * d;
  double* ga = grad.data() + a * d;
  double* gb = grad.data() + b * d;
  const double s = scale / dist;
  for (std::size_t c = 0; c < d; ++c) {
    const double diff = xa[c] - xb[c];
    ga[c] += s * diff;
    gb[c] -= s * diff;
  }
}

}  // namespace

LossResult triplet_loss_full(const LabeledBatch& batch, double margin) {
  require_labels(batch);
  require_margin(margin);
  const std::size_t n = batch.embeddings.rows();
  const Matrix dist = pairwise_euclidean(batch.embeddings, batch.embeddings);

  LossResult result;
  result.grad = Matrix(n, batch.embeddings.cols());
  std::size_t valid = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || batch.labels[p] != batch.labels[a]) continue;
      for (std::size_t neg = 0; neg < n; ++neg) {
        if (batch.labels[neg] == batch.labels[a]) continue;
        ++valid;
        const double hinge = margin + dist(a, p) - dist(a, neg);
        if (hinge <= 0.0) continue;
        result.loss += hinge;
        add_distance_grad(result.grad, batch.embeddings, a, p, dist(a, p), 1.0);
        add_distance_grad(result.grad, batch.embeddings, a, neg, dist(a, neg), -1.0);
      }
    }
  }
  if (valid == 0) {
    fail(errc::no_valid_triplet, "batch holds no (anchor, positive, negative) combination");
  }
  return result;
}

std::vector<Triplet> batch_hard_mine(const LabeledBatch& batch) {
  require_labels(batch);
  const std::size_t n = batch.embeddings.rows();

  std::map<std::uint32_t, std::size_t> class_counts;
  for (std::uint32_t y : batch.labels) ++class_counts[y];
  if (class_counts.size() < 2) {
    fail(errc::single_class, "batch-hard mining needs at least two classes");
  }
  for (const auto& [y, count] : class_counts) {
    if (count < 2) {
      fail(errc::singleton_class,
           "class " + std::to_string(y) + " has a single sample, no positive exists");
    }
  }

  const Matrix dist = pairwise_euclidean(batch.embeddings, batch.embeddings);
  std::vector<Triplet> out;
  out.reserve(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t hp = n;
    std::size_t hn = n;
    double worst_pos = -1.0;
    double best_neg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (batch.labels[j] == batch.labels[a]) {
        if (dist(a, j) > worst_pos) {  // strict: ties keep the lowest index
          worst_pos = dist(a, j);
          hp = j;
        }
      } else if (hn == n || dist(a, j) < best_neg) {
        best_neg = dist(a, j);
        hn = j;
      }
    }
    out.push_back({a, hp, hn});
  }
  return out;
}

LossResult triplet_loss_batch_hard(const LabeledBatch& batch, double margin) {
  require_margin(margin);
  const std::vector<Triplet> mined = batch_hard_mine(batch);
  const Matrix dist = pairwise_euclidean(batch.embeddings, batch.embeddings);
  const double inv_n = 1.0 / static_cast<double>(mined.size());

  LossResult result;
  result.grad = Matrix(batch.embeddings.rows(), batch.embeddings.cols());
  for (const Triplet& t : mined) {
    const double hinge = margin + dist(t.anchor, t.positive) - dist(t.anchor, t.negative);
    if (hinge <= 0.0) continue;
    result.loss += hinge * inv_n;
    add_distance_grad(result.grad, batch.embeddings, t.anchor, t.positive,
                      dist(t.anchor, t.positive), inv_n);
    add_distance_grad(result.grad, batch.embeddings, t.anchor, t.negative,
                      dist(t.anchor, t.negative), -inv_n);
  }
  return result;
}

std::vector<double> smooth_targets(std::size_t num_classes, double epsilon, std::size_t y) {
  require_epsilon(epsilon);
  if (y >= num_classes) {
    fail(errc::class_out_of_range, "class " + std::to_string(y) + " with " +
                                       std::to_string(num_classes) + " classes");
  }
  const double n = static_cast<double>(num_classes);
  std::vector<double> q(num_classes, epsilon / n);
  q[y] = 1.0 - (n - 1.0) / n * epsilon;
  return q;
}

ScalarLossResult softmax_ce_smoothed(std::span<const double> logits, std::size_t y,
                                     double epsilon) {
  if (logits.empty()) {
    fail(errc::length_mismatch, "logit vector is empty");
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      fail(errc::non_finite_logit, "logit " + std::to_string(i) + " is not finite");
    }
  }
  const std::vector<double> q = smooth_targets(logits.size(), epsilon, y);

  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum_exp = 0.0;
  for (double l : logits) sum_exp += std::exp(l - peak);
  const double log_norm = peak + std::log(sum_exp);

  ScalarLossResult result;
  result.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    result.loss += q[i] * (log_norm - logits[i]);
    result.grad[i] = std::exp(logits[i] - log_norm) - q[i];
  }
  return result;
}

double trisoft(double triplet_loss, double softmax_loss, const LossParams& params) {
  return params.lambda_triplet * triplet_loss + params.lambda_softmax * softmax_loss;
}

}  // namespace reid
