#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "amnc/ncut.hpp"
#include "support.hpp"

using namespace amnc;
using Mat = Tensor<double>;

namespace {

const Mat kThreeNode = Mat::matrix(3, 3, {0, 0.9, 0.1, 0.9, 0, 0.1, 0.1, 0.1, 0});

// Scalar-loop evaluation of 1 - (1/k) sum_c assoc_c / (degree_c + eps).
double loss_oracle(const Mat& p, const Mat& w) {
  const std::size_t s = p.rows(), k = p.cols();
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double assoc = 0.0, degree = 0.0;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        assoc += p(i, c) * w(i, j) * p(j, c);
        degree += p(i, c) * w(i, j);
      }
    total += assoc / (degree + 1e-8);
  }
  return 1.0 - total / static_cast<double>(k);
}

Mat hard_assignment(const std::vector<int>& labels, std::size_t k) {
  Mat p({labels.size(), k});
  for (std::size_t i = 0; i < labels.size(); ++i) p(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return p;
}

Mat block_diagonal(const std::vector<int>& labels, Rng& rng) {
  const std::size_t s = labels.size();
  Mat w({s, s});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j)
      if (labels[i] == labels[j]) w(i, j) = w(j, i) = rng.uniform(0.2, 1.0);
  return w;
}

Mat tape_gradient(const Mat& p, const Mat& w) {
  Tape<double> tape;
  Var<double> vp = tape.parameter("p", p);
  tape.backward(ncut_loss(vp, tape.constant(w)));
  return *tape.gradient(vp);
}

}  // namespace

TEST_CASE("cut_cost examples") {
  CHECK(cut_cost(kThreeNode, {0, 1}, {2}) == doctest::Approx(0.2));
  CHECK(cut_cost(kThreeNode, {0, 1}, {}) == 0.0);
  CHECK_THROWS_AS(cut_cost(kThreeNode, {0, 1, 2}, {0, 1, 2}), ArgumentError);
  CHECK_THROWS_AS(cut_cost(kThreeNode, {0, 3}, {1}), ArgumentError);
}

TEST_CASE("ncut_cost examples") {
  CHECK(ncut_cost(kThreeNode, {0, 1}, {2}) == doctest::Approx(1.1));
  CHECK(ncut_cost(kThreeNode, {0}, {1, 2}) == doctest::Approx(1.0 / 1.0 + 1.0 / 1.2));
  Rng rng(1);
  const std::vector<int> labels{0, 0, 1, 1, 1};
  const Mat w = block_diagonal(labels, rng);
  CHECK(ncut_cost(w, {0, 1}, {2, 3, 4}) == 0.0);
  CHECK_THROWS_AS(ncut_cost(kThreeNode, {0}, {1}), ArgumentError);  // not a partition
}

TEST_CASE("set form and indicator form of the two-way cost agree") {
  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = 2 + rng.below(9);
    const Mat w = testing::random_graph(rng, s, 0.01, 1.0);
    NodeSet a, b;
    for (std::size_t i = 0; i < s; ++i) (rng.below(2) ? a : b).push_back(i);
    if (a.empty()) a.push_back(b.back()), b.pop_back();
    if (b.empty()) b.push_back(a.back()), a.pop_back();
    CHECK(std::abs(ncut_cost(w, a, b) - ncut_cost_indicator(w, a, b)) <= 1e-9);
  }
}

TEST_CASE("k-way cost reduces to the two-way cost") {
  Rng rng(3);
  const Mat w = testing::random_graph(rng, 7, 0.1, 1.0);
  const std::vector<int> labels{0, 1, 1, 0, 1, 0, 0};
  CHECK(kway_ncut_cost(w, labels, 2) == doctest::Approx(ncut_cost(w, {0, 3, 5, 6}, {1, 2, 4})));
  CHECK_THROWS_AS(kway_ncut_cost(w, labels, 3), DegenerateGraphError);
}

TEST_CASE("ncut_loss examples") {
  Rng rng(2);
  for (std::size_t k : {2u, 3u, 5u, 10u}) {
    const Mat w = testing::random_graph(rng, 12);
    CHECK(std::abs(ncut_loss_value(Mat({12, k}, 1.0 / static_cast<double>(k)), w) -
                   (1.0 - 1.0 / static_cast<double>(k))) <= 1e-6);
  }
  const std::vector<int> labels{0, 0, 1, 1, 1, 2, 2, 2};
  CHECK(std::abs(ncut_loss_value(hard_assignment(labels, 3), block_diagonal(labels, rng))) <= 1e-6);
  CHECK(std::abs(ncut_loss_value(hard_assignment({0, 0, 1}, 2), kThreeNode) - 0.55) <= 1e-6);
}

TEST_CASE("ncut_loss matches a scalar-loop oracle and stays in [0, 1]") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t s = 2 + rng.below(15), k = 2 + rng.below(5);
    const Mat w = testing::random_graph(rng, s);
    const Mat p = testing::random_simplex_rows(rng, s, k);
    const double v = ncut_loss_value(p, w);
    CHECK(std::abs(v - loss_oracle(p, w)) <= 1e-12);
    CHECK(v >= -1e-12);
    CHECK(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("ncut_loss edge cases") {
  Tape<double> tape;
  LossWarnings warnings;
  const Var<double> loss = ncut_loss(tape.constant(Mat({4, 2}, 0.5)), tape.constant(Mat({4, 4}, 0.0)), &warnings);
  CHECK(scalar(loss) == 1.0);
  CHECK(warnings.zero_affinity);
  ncut_loss(tape.constant(Mat({3, 2}, 0.5)), tape.constant(kThreeNode), &warnings);
  CHECK_FALSE(warnings.zero_affinity);
  // An empty cluster contributes a zero ratio instead of NaN.
  CHECK(std::isfinite(ncut_loss_value(hard_assignment({0, 0, 0}, 2), kThreeNode)));
  CHECK_THROWS_AS(ncut_loss_value(Mat({4, 2}), kThreeNode), ShapeError);
}

TEST_CASE("closed-form gradient matches the tape and finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = std::vector<std::size_t>{2, 3, 5}[trial % 3];
    const Mat w = testing::random_graph(rng, 16);
    const Mat p = testing::random_simplex_rows(rng, 16, k);
    const Mat closed = ncut_loss_gradient(p, w);
    CHECK(relative_error(closed, tape_gradient(p, w)) < 1e-6);
    auto f = [&](const Mat& x) { return ncut_loss_value(x, w); };
    CHECK(relative_error(closed, finite_difference_gradient(f, p, 1e-4)) < 1e-4);
  }
}

TEST_CASE("gradient of uniform P on a regular graph is constant per cluster") {
  // Ring of 8 nodes: every degree is 2.
  Mat w({8, 8});
  for (std::size_t i = 0; i < 8; ++i) w(i, (i + 1) % 8) = w((i + 1) % 8, i) = 1.0;
  const Mat g = ncut_loss_gradient(Mat({8, 3}, 1.0 / 3.0), w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 1; i < 8; ++i) CHECK(g(i, c) == doctest::Approx(g(0, c)).epsilon(1e-12));
}

TEST_CASE("diagnostics examples and identities") {
  Rng rng(6);
  const std::vector<int> labels{0, 0, 0, 1, 1, 2, 2};
  const auto diag = gradient_diagnostics(hard_assignment(labels, 3), block_diagonal(labels, rng));
  for (double t : diag.tightness) CHECK(t == doctest::Approx(1.0).epsilon(1e-7));

  for (int trial = 0; trial < 10; ++trial) {
    const Mat w = testing::random_graph(rng, 9);
    const auto d = gradient_diagnostics(testing::random_simplex_rows(rng, 9, 4), w);
    double gamma = 0.0, eta = 0.0;
    for (double v : d.node_degree) gamma += v;
    for (double v : d.cluster_degree) eta += v;
    CHECK(std::abs(gamma - 1.0) <= 1e-6);
    CHECK(std::abs(eta - 1.0) <= 1e-6);
  }

  const auto three = gradient_diagnostics(Mat({3, 2}, 0.5), kThreeNode);
  CHECK(three.node_degree[0] == doctest::Approx(1.0 / 2.2));
  CHECK(three.node_degree[1] == doctest::Approx(1.0 / 2.2));
  CHECK(three.node_degree[2] == doctest::Approx(0.2 / 2.2));
  CHECK_THROWS_AS(gradient_diagnostics(Mat({3, 2}, 0.5), Mat({3, 3})), DegenerateGraphError);
}

TEST_CASE("pull/push signs on a tight and a loose cluster") {
  // Nodes 0-3 form a tight cluster, 4-7 a loose one, with weak cross links.
  Mat w({8, 8});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j) {
      const bool same = (i < 4) == (j < 4);
      w(i, j) = w(j, i) = same ? (i < 4 ? 0.9 : 0.3) : 0.05;
    }
  Rng rng(7);
  Mat p({8, 2});
  for (std::size_t i = 0; i < 8; ++i) {
    const double own = rng.uniform(0.6, 0.9);
    p(i, i < 4 ? 0 : 1) = own;
    p(i, i < 4 ? 1 : 0) = 1.0 - own;
  }
  const Mat grad = tape_gradient(p, w);
  const auto diag = gradient_diagnostics(p, w);
  int pulls = 0, pushes = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 8; ++i) {
      double wp = 0.0, degree = 0.0;
      for (std::size_t j = 0; j < 8; ++j) wp += w(i, j) * p(j, c), degree += w(i, j);
      const bool pull = 2.0 * wp / degree > diag.tightness[c];
      // Pull: raising p_ic lowers the loss.
      CHECK((grad(i, c) < 0.0) == pull);
      (pull ? pulls : pushes)++;
    }
  }
  CHECK(pulls > 0);
  CHECK(pushes > 0);
}

TEST_CASE("pull/push factorisation equals the exact derivative for uniform P") {
  Rng rng(8);
  const Mat w = testing::random_graph(rng, 10);
  const std::size_t k = 4;
  const Mat p({10, k}, 0.25);
  const Mat exact = tape_gradient(p, w);
  const Mat factored = pull_push_factorisation(p, w);
  for (std::size_t i = 0; i < exact.size(); ++i)
    CHECK(factored[i] == doctest::Approx(exact[i] * static_cast<double>(k)).epsilon(1e-6));
}

TEST_CASE("brute-force minimum NCut examples") {
  const MinCut three = brute_force_min_ncut(kThreeNode, 2);
  CHECK(three.labels == std::vector<int>{0, 0, 1});
  CHECK(three.cost == doctest::Approx(1.1));

  Rng rng(9);
  const std::vector<int> cliques{0, 0, 0, 1, 1, 1};
  Mat w({6, 6});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i != j && cliques[i] == cliques[j]) w(i, j) = 1.0;
  const MinCut two = brute_force_min_ncut(w, 2);
  CHECK(two.labels == cliques);
  CHECK(two.cost == 0.0);

  CHECK(brute_force_min_ncut(Mat::matrix(2, 2, {0, 1, 1, 0}), 2).cost == doctest::Approx(2.0));
  CHECK_THROWS_AS(brute_force_min_ncut(testing::random_graph(rng, 13), 2), SizeError);
}
