#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "reference.hpp"
#include "reid/error.hpp"
#include "reid/losses.hpp"
#include "reid/rng.hpp"
#include "support.hpp"

using reid::errc;
using reid::Error;
using reid::LabeledBatch;
using reid::Matrix;

namespace {

LabeledBatch line_batch(const std::vector<double>& positions,
                        const std::vector<std::uint32_t>& labels) {
  Matrix emb(positions.size(), 1);
  for (std::size_t i = 0; i < positions.size(); ++i) emb(i, 0) = positions[i];
  return {std::move(emb), labels};
}

LabeledBatch random_batch(unsigned seed, std::size_t n, std::size_t d, std::size_t classes) {
  LabeledBatch batch;
  batch.embeddings = testsupport::random_matrix(seed, n, d);
  batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    batch.labels[i] = static_cast<std::uint32_t>(i % classes);
  return batch;
}

bool all_zero(const Matrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.data()[i] != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("full triplet loss") {
  SUBCASE("well-separated classes give zero loss and zero gradient") {
    Matrix emb(4, 2);
    emb(0, 0) = 0.0;
    emb(0, 1) = 0.0;
    emb(1, 0) = 0.01;
    emb(1, 1) = 0.0;
    emb(2, 0) = 10.0;
    emb(2, 1) = 0.0;
    emb(3, 0) = 10.01;
    emb(3, 1) = 0.0;
    const LabeledBatch batch{emb, {0, 0, 1, 1}};
    const auto result = reid::triplet_loss_full(batch, 0.3);
    CHECK(result.loss == 0.0);
    CHECK(all_zero(result.grad));
  }
  SUBCASE("single active triplet: 0.3 + 0.5 - 0.6 = 0.2") {
    const LabeledBatch batch = line_batch({0.0, 0.5, -0.6}, {0, 0, 1});
    const auto result = reid::triplet_loss_full(batch, 0.3);
    CHECK(result.loss == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("gradient matches central finite differences") {
    unsigned seed = 100;
    LabeledBatch batch = random_batch(seed, 12, 4, 3);
    while (ref::triplet_full_degenerate(batch, 0.3)) batch = random_batch(++seed, 12, 4, 3);
    const auto result = reid::triplet_loss_full(batch, 0.3);
    const double err = ref::max_grad_error(
        batch.embeddings, result.grad, [&](const Matrix& x) {
          return reid::triplet_loss_full({x, batch.labels}, 0.3).loss;
        });
    CHECK(err <= 1e-6);
  }
  SUBCASE("translation invariance") {
    const LabeledBatch batch = random_batch(111, 10, 3, 2);
    const double base = reid::triplet_loss_full(batch, 0.3).loss;
    LabeledBatch shifted = batch;
    for (std::size_t i = 0; i < shifted.embeddings.rows(); ++i)
      for (std::size_t c = 0; c < shifted.embeddings.cols(); ++c)
        shifted.embeddings(i, c) += 17.25;
    const double moved = reid::triplet_loss_full(shifted, 0.3).loss;
    CHECK(std::abs(base - moved) <= 1e-9);
  }
  SUBCASE("a batch without any valid triplet is an error") {
    try {
      reid::triplet_loss_full(line_batch({0.0, 1.0, 2.0}, {0, 1, 2}), 0.3);
      FAIL("expected NoValidTriplet");
    } catch (const Error& e) {
      CHECK(e.code() == errc::no_valid_triplet);
    }
    // a single class has positives but no negative
    CHECK_THROWS_AS(reid::triplet_loss_full(line_batch({0.0, 1.0}, {0, 0}), 0.3), Error);
  }
  SUBCASE("label count must match embedding rows") {
    try {
      reid::triplet_loss_full(line_batch({0.0, 1.0, 2.0}, {0, 0}), 0.3);
      FAIL("expected LengthMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == errc::length_mismatch);
    }
  }
}

TEST_CASE("batch-hard mining") {
  SUBCASE("four points on a line") {
    const LabeledBatch batch = line_batch({0.0, 1.0, 5.0, 6.0}, {0, 0, 1, 1});
    const auto mined = reid::batch_hard_mine(batch);
    REQUIRE(mined.size() == 4);
    CHECK(mined[0].anchor == 0);
    CHECK(mined[0].positive == 1);
    CHECK(mined[0].negative == 2);
    CHECK(mined[1].positive == 0);
    CHECK(mined[1].negative == 2);
    CHECK(mined[2].positive == 3);
    CHECK(mined[2].negative == 1);
    CHECK(mined[3].positive == 2);
    CHECK(mined[3].negative == 1);
  }
  SUBCASE("ties select the lowest index") {
    // class 0 collapsed to one point (all positive distances equal), class 1
    // duplicated at 5 (all negative distances equal)
    Matrix emb(5, 1);
    emb(0, 0) = 0.0;
    emb(1, 0) = 0.0;
    emb(2, 0) = 0.0;
    emb(3, 0) = 5.0;
    emb(4, 0) = 5.0;
    const LabeledBatch batch{emb, {0, 0, 0, 1, 1}};
    const auto mined = reid::batch_hard_mine(batch);
    CHECK(mined[0].positive == 1);  // indices 1,2 tie at distance 0
    CHECK(mined[1].positive == 0);
    CHECK(mined[2].positive == 0);
    CHECK(mined[0].negative == 3);  // indices 3,4 tie at distance 5
    CHECK(mined[3].negative == 0);
    CHECK(mined[3].positive == 4);
  }
  SUBCASE("matches the exhaustive oracle on a seeded batch") {
    const LabeledBatch batch = random_batch(120, 16, 5, 4);
    const auto fast = reid::batch_hard_mine(batch);
    const auto slow = ref::batch_hard_mine(batch);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(fast[i].anchor == slow[i].anchor);
      CHECK(fast[i].positive == slow[i].positive);
      CHECK(fast[i].negative == slow[i].negative);
    }
  }
  SUBCASE("exhaustive agreement holds across batch sizes up to 32") {
    for (unsigned seed = 130; seed < 134; ++seed) {
      const std::size_t n = 8 + (seed % 4) * 8;  // 8..32
      const LabeledBatch batch = random_batch(seed, n, 4, 4);
      const auto fast = reid::batch_hard_mine(batch);
      const auto slow = ref::batch_hard_mine(batch);
      REQUIRE(fast.size() == slow.size());
      for (std::size_t i = 0; i < fast.size(); ++i) {
        CHECK(fast[i].positive == slow[i].positive);
        CHECK(fast[i].negative == slow[i].negative);
      }
    }
  }
  SUBCASE("a single class cannot be mined") {
    try {
      reid::batch_hard_mine(line_batch({0.0, 1.0, 2.0}, {3, 3, 3}));
      FAIL("expected SingleClass");
    } catch (const Error& e) {
      CHECK(e.code() == errc::single_class);
    }
  }
  SUBCASE("a singleton class cannot be mined and is named") {
    try {
      reid::batch_hard_mine(line_batch({0.0, 1.0, 2.0}, {0, 0, 9}));
      FAIL("expected SingletonClass");
    } catch (const Error& e) {
      CHECK(e.code() == errc::singleton_class);
      CHECK(std::string(e.what()).find('9') != std::string::npos);
    }
  }
}

TEST_CASE("batch-hard triplet loss") {
  SUBCASE("line instance has every hinge inactive") {
    const LabeledBatch batch = line_batch({0.0, 1.0, 5.0, 6.0}, {0, 0, 1, 1});
    const auto result = reid::triplet_loss_batch_hard(batch, 0.3);
    CHECK(result.loss == 0.0);
    CHECK(all_zero(result.grad));
  }
  SUBCASE("hand-computed active instance") {
    // anchors at 2 and 3 are active: (0.3+2-1) + (0.3+7-1), mean over 4
    const LabeledBatch batch = line_batch({0.0, 2.0, 3.0, 10.0}, {0, 0, 1, 1});
    const auto result = reid::triplet_loss_batch_hard(batch, 0.3);
    CHECK(result.loss == doctest::Approx(1.9).epsilon(1e-12));
  }
  SUBCASE("gradient matches central finite differences") {
    unsigned seed = 140;
    LabeledBatch batch = random_batch(seed, 16, 4, 4);
    while (ref::batch_hard_degenerate(batch, 0.3)) batch = random_batch(++seed, 16, 4, 4);
    const auto result = reid::triplet_loss_batch_hard(batch, 0.3);
    const double err = ref::max_grad_error(
        batch.embeddings, result.grad, [&](const Matrix& x) {
          return reid::triplet_loss_batch_hard({x, batch.labels}, 0.3).loss;
        });
    CHECK(err <= 1e-6);
  }
}

TEST_CASE("smoothed targets") {
  SUBCASE("epsilon 0 is one-hot") {
    const auto q = reid::smooth_targets(5, 0.0, 2);
    CHECK(q == std::vector<double>{0.0, 0.0, 1.0, 0.0, 0.0});
  }
  SUBCASE("N=4, epsilon=0.1, y=0") {
    const auto q = reid::smooth_targets(4, 0.1, 0);
    REQUIRE(q.size() == 4);
    CHECK(q[0] == doctest::Approx(0.925).epsilon(1e-15));
    CHECK(q[1] == doctest::Approx(0.025).epsilon(1e-15));
    CHECK(q[2] == doctest::Approx(0.025).epsilon(1e-15));
    CHECK(q[3] == doctest::Approx(0.025).epsilon(1e-15));
  }
  SUBCASE("always a probability vector") {
    const std::size_t sizes[] = {2, 3, 10, 751, 1000};
    const double epsilons[] = {0.0, 0.05, 0.1, 0.5, 0.99};
    for (std::size_t n : sizes) {
      for (double eps : epsilons) {
        const auto q = reid::smooth_targets(n, eps, n / 2);
        double sum = 0.0;
        for (double v : q) {
          CHECK(v >= 0.0);
          sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
      }
    }
  }
  SUBCASE("target class out of range") {
    try {
      reid::smooth_targets(4, 0.1, 4);
      FAIL("expected ClassOutOfRange");
    } catch (const Error& e) {
      CHECK(e.code() == errc::class_out_of_range);
    }
  }
}

TEST_CASE("label-smoothed softmax cross-entropy") {
  SUBCASE("uniform logits with epsilon 0 give log N") {
    const std::vector<double> logits(7, 1.25);
    const auto result = reid::softmax_ce_smoothed(logits, 3, 0.0);
    CHECK(result.loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  }
  SUBCASE("shift invariance") {
    std::vector<double> logits = {0.3, -1.2, 2.5, 0.0, 1.1, -0.4};
    const auto base = reid::softmax_ce_smoothed(logits, 2, 0.1);
    for (double& l : logits) l += 123.0;
    const auto shifted = reid::softmax_ce_smoothed(logits, 2, 0.1);
    CHECK(std::abs(base.loss - shifted.loss) <= 1e-12);
    for (std::size_t i = 0; i < base.grad.size(); ++i)
      CHECK(std::abs(base.grad[i] - shifted.grad[i]) <= 1e-12);
  }
  SUBCASE("extreme logits stay finite") {
    const std::vector<double> logits = {1000.0, -1000.0, 999.5};
    const auto result = reid::softmax_ce_smoothed(logits, 0, 0.1);
    CHECK(std::isfinite(result.loss));
    for (double g : result.grad) CHECK(std::isfinite(g));
  }
  SUBCASE("gradient matches central finite differences") {
    reid::Rng rng(150);
    std::vector<double> logits(6);
    for (double& l : logits) l = 2.0 * rng.normal();
    const auto result = reid::softmax_ce_smoothed(logits, 4, 0.1);
    const double err = ref::max_grad_error_vec(logits, result.grad, [](const std::vector<double>& x) {
      return reid::softmax_ce_smoothed(x, 4, 0.1).loss;
    });
    CHECK(err <= 1e-6);
  }
  SUBCASE("gradient components sum to zero") {
    reid::Rng rng(151);
    std::vector<double> logits(9);
    for (double& l : logits) l = rng.normal();
    const auto result = reid::softmax_ce_smoothed(logits, 1, 0.2);
    double sum = 0.0;
    for (double g : result.grad) sum += g;
    CHECK(std::abs(sum) <= 1e-12);
  }
  SUBCASE("loss is at least the entropy of the targets") {
    for (unsigned seed = 160; seed < 162; ++seed) {
      reid::Rng rng(seed);
      std::vector<double> logits(8);
      for (double& l : logits) l = 3.0 * rng.normal();
      const auto result = reid::softmax_ce_smoothed(logits, 5, 0.1);
      const auto q = reid::smooth_targets(8, 0.1, 5);
      double entropy = 0.0;
      for (double v : q) {
        if (v > 0.0) entropy -= v * std::log(v);
      }
      CHECK(result.loss >= entropy - 1e-12);
    }
  }
  SUBCASE("non-finite logits are rejected with the offending index") {
    std::vector<double> logits = {0.1, std::numeric_limits<double>::quiet_NaN(), 0.3};
    try {
      reid::softmax_ce_smoothed(logits, 0, 0.1);
      FAIL("expected NonFiniteLogit");
    } catch (const Error& e) {
      CHECK(e.code() == errc::non_finite_logit);
      CHECK(std::string(e.what()).find('1') != std::string::npos);
    }
  }
  SUBCASE("target class out of range") {
    const std::vector<double> logits = {0.1, 0.2};
    CHECK_THROWS_AS(reid::softmax_ce_smoothed(logits, 2, 0.1), Error);
  }
}

TEST_CASE("trisoft combination") {
  reid::LossParams params;  // lambda_triplet 10, lambda_softmax 1
  CHECK(reid::trisoft(0.2, 1.5, params) == doctest::Approx(3.5).epsilon(1e-15));

  params.lambda_softmax = 0.0;
  CHECK(reid::trisoft(0.2, 99.0, params) == doctest::Approx(2.0).epsilon(1e-15));

  params.lambda_softmax = 1.0;
  const double twice = reid::trisoft(0.4, 3.0, params);
  const double once = reid::trisoft(0.2, 1.5, params);
  CHECK(std::abs(twice - 2.0 * once) <= 1e-12);
}
