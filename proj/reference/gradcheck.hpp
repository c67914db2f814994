#pragma once

// Central finite-difference gradient checking plus degeneracy detection.
// Loss surfaces are only piecewise smooth: a finite difference straddling a
// hinge kink, a mining-selection tie, or a zero distance (sqrt kink) is not
// comparable to the one-sided analytic gradient, so such batches must be
// detected and resampled instead of checked.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "reid/losses.hpp"
#include "reid/matrix.hpp"

namespace ref {

// |a - n| / max(1, |a|, |n|): relative for large values, absolute near zero.
inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// Worst guarded relative error between `analytic` and central finite
// differences of `loss`, probing every coordinate of x.
template <typename LossFn>
double max_grad_error(const reid::Matrix& x, const reid::Matrix& analytic, LossFn&& loss,
                      double step = 1e-6) {
  reid::Matrix probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double keep = probe.data()[i];
    probe.data()[i] = keep + step;
    const double up = loss(probe);
    probe.data()[i] = keep - step;
    const double down = loss(probe);
    probe.data()[i] = keep;
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, rel_error(analytic.data()[i], fd));
  }
  return worst;
}

// Same check for a vector-valued input (logits).
template <typename LossFn>
double max_grad_error_vec(const std::vector<double>& x, const std::vector<double>& analytic,
                          LossFn&& loss, double step = 1e-6) {
  std::vector<double> probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + step;
    const double up = loss(probe);
    probe[i] = keep - step;
    const double down = loss(probe);
    probe[i] = keep;
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, rel_error(analytic[i], fd));
  }
  return worst;
}

namespace detail {

inline double point_distance(const reid::Matrix& x, std::size_t i, std::size_t j) {
  double sum = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const double diff = x(i, c) - x(j, c);
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

}  // namespace detail

// True when any valid triplet sits within tol of the hinge kink or either
// of its distances is within tol of zero.
inline bool triplet_full_degenerate(const reid::LabeledBatch& batch, double margin,
                                    double tol = 1e-4) {
  const std::size_t n = batch.embeddings.rows();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || batch.labels[p] != batch.labels[a]) continue;
      const double dap = detail::point_distance(batch.embeddings, a, p);
      if (dap <= tol) return true;
      for (std::size_t neg = 0; neg < n; ++neg) {
        if (batch.labels[neg] == batch.labels[a]) continue;
        const double dan = detail::point_distance(batch.embeddings, a, neg);
        if (dan <= tol) return true;
        if (std::abs(margin + dap - dan) <= tol) return true;
      }
    }
  }
  return false;
}

// True when any anchor's mined hinge is within tol of the kink, its mined
// selection is within tol of a tie, or a mined distance is near zero.
inline bool batch_hard_degenerate(const reid::LabeledBatch& batch, double margin,
                                  double tol = 1e-4) {
  const std::size_t n = batch.embeddings.rows();
  for (std::size_t a = 0; a < n; ++a) {
    double hardest_pos = -1.0;
    double nearest_neg = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = detail::point_distance(batch.embeddings, a, j);
      if (batch.labels[j] == batch.labels[a]) {
        hardest_pos = std::max(hardest_pos, d);
      } else {
        nearest_neg = nearest_neg < 0.0 ? d : std::min(nearest_neg, d);
      }
    }
    if (hardest_pos < 0.0 || nearest_neg < 0.0) return true;  // unminable anchor
    if (hardest_pos <= tol || nearest_neg <= tol) return true;
    if (std::abs(margin + hardest_pos - nearest_neg) <= tol) return true;
    // a runner-up within tol of the selected extreme flips the selection
    // under perturbation
    std::size_t near_pos = 0;
    std::size_t near_neg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = detail::point_distance(batch.embeddings, a, j);
      if (batch.labels[j] == batch.labels[a]) {
        if (std::abs(d - hardest_pos) <= tol) ++near_pos;
      } else {
        if (std::abs(d - nearest_neg) <= tol) ++near_neg;
      }
    }
    if (near_pos > 1 || near_neg > 1) return true;
  }
  return false;
}

}  // namespace ref
