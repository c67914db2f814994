#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reid/matrix.hpp"

namespace reid {

struct LabeledBatch {
  Matrix embeddings;                  // n x d
  std::vector<std::uint32_t> labels;  // n identity labels
};

struct LossParams {
  double margin = 0.3;
  double epsilon = 0.1;
  double lambda_triplet = 10.0;
  double lambda_softmax = 1.0;
  std::size_t num_classes = 2;
};

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d embeddings, same shape as the batch
};

// Hinge loss summed over all valid triplets (a, p, n) with
// y_a == y_p != y_n and a != p: sum of [margin + D(a,p) - D(a,n)]_+ with
// Euclidean D. The gradient uses subgradient 0 at the hinge kink.
LossResult triplet_loss_full(const LabeledBatch& batch, double margin);

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};

// Per anchor: the farthest same-class sample and the nearest other-class
// sample, ties broken by ascending index. Requires at least two classes and
// no singleton class.
std::vector<Triplet> batch_hard_mine(const LabeledBatch& batch);

// Mean over anchors of the hinge on the mined hardest triplets. The
// selection is treated as constant when differentiating.
LossResult triplet_loss_batch_hard(const LabeledBatch& batch, double margin);

// Smoothed target distribution: q_y = 1 - (N-1)/N * epsilon, q_i = epsilon/N
// for i != y.
std::vector<double> smooth_targets(std::size_t num_classes, double epsilon, std::size_t y);

struct ScalarLossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logits
};

// Cross-entropy against the smoothed targets on a numerically stable
// log-softmax; grad = softmax(logits) - q.
ScalarLossResult softmax_ce_smoothed(std::span<const double> logits, std::size_t y,
                                     double epsilon);

// lambda_triplet * triplet_loss + lambda_softmax * softmax_loss.
double trisoft(double triplet_loss, double softmax_loss, const LossParams& params);

}  // namespace reid
