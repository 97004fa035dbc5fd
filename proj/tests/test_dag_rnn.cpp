#include <doctest.h>

#include <cmath>

#include "dagrnn/dag_rnn.hpp"
#include "dagrnn/errors.hpp"
#include "test_util.hpp"

using namespace dagrnn;
using testutil::fd_max_rel_err;
using testutil::random_tensor;

namespace {

std::array<GridDag, 4> all_dags(const GridSpec& spec) {
  return {decompose(spec, Direction::SE), decompose(spec, Direction::SW),
          decompose(spec, Direction::NW), decompose(spec, Direction::NE)};
}

// Scalar probe loss for one direction: sum_v err(v) . V h(v). Matches what
// backward_direction differentiates when the ensemble bias is ignored.
double direction_loss(const DirectionParams& p, const GridDag& dag,
                      const Tensor& x, const Tensor& err) {
  const DirectionTrace t = forward_direction(p, dag, x);
  double loss = 0.0;
  const size_t n = t.h.extent(0);
  for (size_t v = 0; v < n; ++v) {
    Tensor hv({p.hidden_dim()});
    for (size_t k = 0; k < hv.size(); ++k) hv[k] = t.h.at(v, k);
    const Tensor o = matvec(p.V, hv);
    for (size_t j = 0; j < o.size(); ++j) loss += err.at(v, j) * o[j];
  }
  return loss;
}

double ensemble_loss(const EnsembleParams& p, const std::array<GridDag, 4>& dags,
                     const Tensor& x, const Tensor& err) {
  const DagRnnTrace t = forward_ensemble(p, dags, x, OutputMode::kDeferred);
  double loss = 0.0;
  for (size_t i = 0; i < t.preact.size(); ++i) loss += err[i] * t.preact[i];
  return loss;
}

DirectionParams scalar_params(double u, double w, double v, double b) {
  DirectionParams p;
  p.U = Tensor::mat({{u}});
  p.W = Tensor::mat({{w}});
  p.V = Tensor::mat({{v}});
  p.b = Tensor::vec({b});
  return p;
}

}  // namespace

TEST_CASE("forward on a 1x2 chain, scalar dimensions") {
  const GridDag dag = decompose({1, 2, Neighborhood::N4}, Direction::SE);
  const DirectionParams p = scalar_params(1, 1, 1, 0);
  const Tensor x({2, 1}, {1, 2});
  const DirectionTrace t = forward_direction(p, dag, x);
  CHECK(t.h.at(0, 0) == 1);
  CHECK(t.h.at(1, 0) == 3);
  CHECK(t.hsum.at(0, 0) == 0);  // source has no predecessors
  CHECK(t.hsum.at(1, 0) == 1);
}

TEST_CASE("forward accumulates along the 2x2 diamond") {
  const GridDag dag = decompose({2, 2, Neighborhood::N4}, Direction::SE);
  const DirectionParams p = scalar_params(1, 1, 1, 0);
  const Tensor x({4, 1}, {1, 1, 1, 1});
  const DirectionTrace t = forward_direction(p, dag, x);
  CHECK(t.h.at(0, 0) == 1);
  CHECK(t.h.at(1, 0) == 2);
  CHECK(t.h.at(2, 0) == 2);
  CHECK(t.h.at(3, 0) == 5);
}

TEST_CASE("zero recurrent matrix decouples vertices") {
  Rng rng(5);
  const GridSpec spec{3, 4, Neighborhood::N8};
  const GridDag dag = decompose(spec, Direction::NE);
  DirectionParams p = init_direction_params(3, 2, 2, rng);
  p.W.fill(0.0);
  p.b.fill(0.0);
  const Tensor x = random_tensor({12, 2}, rng);
  const DirectionTrace t = forward_direction(p, dag, x);
  for (size_t v = 0; v < 12; ++v) {
    Tensor xv({2});
    xv[0] = x.at(v, 0);
    xv[1] = x.at(v, 1);
    const Tensor expect = relu(matvec(p.U, xv));
    for (size_t k = 0; k < 3; ++k) {
      CHECK(t.h.at(v, k) == doctest::Approx(expect[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("input shape errors") {
  const GridDag dag = decompose({2, 2, Neighborhood::N4}, Direction::SE);
  Rng rng(1);
  const DirectionParams p = init_direction_params(3, 2, 2, rng);
  CHECK_THROWS_AS(forward_direction(p, dag, Tensor({3, 2})), DimensionError);
  CHECK_THROWS_AS(forward_direction(p, dag, Tensor({4, 5})), DimensionError);
}

TEST_CASE("ensemble bias and masking behavior") {
  Rng rng(9);
  const GridSpec spec{2, 3, Neighborhood::N4};
  const auto dags = all_dags(spec);
  EnsembleParams p = init_ensemble_params(3, 2, 2, rng);
  const Tensor x = random_tensor({6, 2}, rng);

  SUBCASE("all V zero leaves only the bias") {
    for (Direction d : kDirections) p.dir(d).V.fill(0.0);
    p.c = Tensor::vec({0.25, -0.5});
    const DagRnnTrace t = forward_ensemble(p, dags, x, OutputMode::kDeferred);
    for (size_t v = 0; v < 6; ++v) {
      CHECK(t.preact.at(v, 0) == 0.25);
      CHECK(t.preact.at(v, 1) == -0.5);
    }
  }

  SUBCASE("single nonzero direction reduces to that projection plus c") {
    for (Direction d : {Direction::SW, Direction::NW, Direction::NE}) {
      p.dir(d).V.fill(0.0);
    }
    const DagRnnTrace t = forward_ensemble(p, dags, x, OutputMode::kDeferred);
    const DirectionParams& se = p.dir(Direction::SE);
    const DirectionTrace alone = forward_direction(se, dags[0], x);
    for (size_t v = 0; v < 6; ++v) {
      Tensor hv({se.hidden_dim()});
      for (size_t k = 0; k < hv.size(); ++k) hv[k] = alone.h.at(v, k);
      const Tensor o = matvec(se.V, hv);
      for (size_t j = 0; j < 2; ++j) {
        CHECK(t.preact.at(v, j) == doctest::Approx(o[j] + p.c[j]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("ensemble pre-activation equals the sum of isolated directions") {
  Rng rng(13);
  const GridSpec spec{3, 3, Neighborhood::N8};
  const auto dags = all_dags(spec);
  const EnsembleParams p = init_ensemble_params(4, 3, 5, rng);
  const Tensor x = random_tensor({9, 3}, rng);
  const DagRnnTrace t = forward_ensemble(p, dags, x, OutputMode::kDeferred);
  for (size_t v = 0; v < 9; ++v) {
    for (size_t j = 0; j < 5; ++j) {
      double expect = p.c[j];
      for (Direction d : kDirections) {
        const DirectionParams& dp = p.dir(d);
        const DirectionTrace alone =
            forward_direction(dp, dags[static_cast<size_t>(d)], x);
        for (size_t k = 0; k < dp.hidden_dim(); ++k) {
          expect += dp.V.at(j, k) * alone.h.at(v, k);
        }
      }
      CHECK(t.preact.at(v, j) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("ensemble rejects mismatched grids") {
  Rng rng(2);
  const EnsembleParams p = init_ensemble_params(2, 2, 2, rng);
  std::array<GridDag, 4> dags = all_dags({2, 2, Neighborhood::N4});
  dags[1] = decompose({2, 3, Neighborhood::N4}, Direction::SW);
  CHECK_THROWS_AS(forward_ensemble(p, dags, Tensor({4, 2}), OutputMode::kDeferred),
                  StructureError);
}

TEST_CASE("chain recursion base cases") {
  const Tensor U = Tensor::mat({{1}});
  const Tensor W = Tensor::mat({{1}});
  const Tensor V = Tensor::mat({{1}});
  const Tensor b = Tensor::vec({0});
  const Tensor c = Tensor::vec({0});

  SUBCASE("T = 1 has no recurrent contribution") {
    const ChainResult r = chain_rnn_forward(U, W, V, b, c, Tensor({1, 1}, {0.7}));
    CHECK(r.h.at(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
  }

  SUBCASE("scalar running sum") {
    const ChainResult r = chain_rnn_forward(U, W, V, b, c, Tensor({3, 1}, {1, 2, 3}));
    CHECK(r.h.at(0, 0) == 1);
    CHECK(r.h.at(1, 0) == 3);
    CHECK(r.h.at(2, 0) == 6);
  }
}

TEST_CASE("chain equivalence: 1xT SE grid matches the Elman recursion") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t T = 1 + rng.uniform_int(10);
    const size_t h = 1 + rng.uniform_int(4);
    const size_t d = 1 + rng.uniform_int(3);
    const DirectionParams p = init_direction_params(h, d, 2, rng);
    const Tensor xs = random_tensor({T, d}, rng);

    const GridDag chain = decompose({1, static_cast<int>(T), Neighborhood::N4},
                                    Direction::SE);
    const DirectionTrace grid = forward_direction(p, chain, xs);
    const ChainResult elman = chain_rnn_forward(p.U, p.W, p.V, p.b,
                                                Tensor({2}), xs);
    for (size_t t = 0; t < T; ++t) {
      for (size_t k = 0; k < h; ++k) {
        CHECK(std::abs(grid.h.at(t, k) - elman.h.at(t, k)) < 1e-12);
      }
    }
  }
}

TEST_CASE("backward: zero upstream error gives zero gradients") {
  Rng rng(31);
  const GridSpec spec{3, 3, Neighborhood::N8};
  const GridDag dag = decompose(spec, Direction::SE);
  const DirectionParams p = init_direction_params(3, 2, 2, rng);
  const Tensor x = random_tensor({9, 2}, rng);
  const DirectionTrace t = forward_direction(p, dag, x);
  const DirectionGrads g = backward_direction(p, dag, x, t, Tensor({9, 2}));
  for (const Tensor* tensor : {&g.dU, &g.dW, &g.dV, &g.db, &g.dc, &g.dh, &g.dx}) {
    for (size_t i = 0; i < tensor->size(); ++i) CHECK((*tensor)[i] == 0.0);
  }
}

TEST_CASE("backward matches the hand-derived 1x2 chain rule") {
  // h1 = u*x1 + b, h2 = u*x2 + w*h1 + b (both positive), probe loss
  // L = v*(h1 + h2). Derivatives worked out symbolically.
  const GridDag dag = decompose({1, 2, Neighborhood::N4}, Direction::SE);
  const DirectionParams p = scalar_params(0.5, 0.25, 2.0, 0.1);
  const Tensor x({2, 1}, {1.0, 2.0});
  const DirectionTrace t = forward_direction(p, dag, x);
  CHECK(t.h.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(t.h.at(1, 0) == doctest::Approx(1.25).epsilon(1e-12));

  const Tensor err({2, 1}, {1.0, 1.0});
  const DirectionGrads g = backward_direction(p, dag, x, t, err);
  CHECK(g.dU.at(0, 0) == doctest::Approx(6.5).epsilon(1e-12));    // v(x1+x2+w*x1)
  CHECK(g.dW.at(0, 0) == doctest::Approx(1.2).epsilon(1e-12));    // v*h1
  CHECK(g.db[0] == doctest::Approx(4.5).epsilon(1e-12));          // v(2+w)
  CHECK(g.dV.at(0, 0) == doctest::Approx(1.85).epsilon(1e-12));   // h1+h2
  CHECK(g.dc[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g.dx.at(0, 0) == doctest::Approx(1.25).epsilon(1e-12));   // v(u+w*u)
  CHECK(g.dx.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));    // v*u
}

TEST_CASE("single-direction gradients match finite differences") {
  Rng rng(77);
  for (Direction dir : kDirections) {
    for (Neighborhood nb : {Neighborhood::N4, Neighborhood::N8}) {
      const GridSpec spec{4, 5, nb};
      const GridDag dag = decompose(spec, dir);
      DirectionParams p = init_direction_params(3, 2, 2, rng);
      Tensor x = random_tensor({20, 2}, rng);
      const Tensor err = random_tensor({20, 2}, rng);

      const DirectionTrace t = forward_direction(p, dag, x);
      const DirectionGrads g = backward_direction(p, dag, x, t, err);
      const auto loss = [&]() { return direction_loss(p, dag, x, err); };

      CAPTURE(static_cast<int>(dir));
      CAPTURE(static_cast<int>(nb));
      CHECK(fd_max_rel_err(p.U, g.dU, loss) < 1e-5);
      CHECK(fd_max_rel_err(p.W, g.dW, loss) < 1e-5);
      CHECK(fd_max_rel_err(p.V, g.dV, loss) < 1e-5);
      CHECK(fd_max_rel_err(p.b, g.db, loss) < 1e-5);
      CHECK(fd_max_rel_err(x, g.dx, loss) < 1e-5);
    }
  }
}

TEST_CASE("ensemble gradients match finite differences") {
  Rng rng(123);
  const GridSpec spec{3, 4, Neighborhood::N8};
  const auto dags = all_dags(spec);
  EnsembleParams p = init_ensemble_params(3, 2, 2, rng);
  Tensor x = random_tensor({12, 2}, rng);
  const Tensor err = random_tensor({12, 2}, rng);

  const DagRnnTrace t = forward_ensemble(p, dags, x, OutputMode::kDeferred);
  const EnsembleGrads g = backward_ensemble(p, dags, x, t, err);
  const auto loss = [&]() { return ensemble_loss(p, dags, x, err); };

  for (Direction d : kDirections) {
    const size_t di = static_cast<size_t>(d);
    CAPTURE(di);
    CHECK(fd_max_rel_err(p.dirs[di].U, g.dirs[di].dU, loss) < 1e-5);
    CHECK(fd_max_rel_err(p.dirs[di].W, g.dirs[di].dW, loss) < 1e-5);
    CHECK(fd_max_rel_err(p.dirs[di].V, g.dirs[di].dV, loss) < 1e-5);
    CHECK(fd_max_rel_err(p.dirs[di].b, g.dirs[di].db, loss) < 1e-5);
  }
  CHECK(fd_max_rel_err(p.c, g.dc, loss) < 1e-5);
  CHECK(fd_max_rel_err(x, g.dx, loss) < 1e-5);
}

TEST_CASE("locality: without recurrence a distant input cannot matter") {
  Rng rng(55);
  const GridSpec spec{4, 4, Neighborhood::N8};
  const auto dags = all_dags(spec);
  EnsembleParams p = init_ensemble_params(3, 2, 3, rng);
  for (Direction d : kDirections) p.dir(d).W.fill(0.0);

  Tensor x = random_tensor({16, 2}, rng);
  const DagRnnTrace before = forward_ensemble(p, dags, x, OutputMode::kDeferred);
  x.at(15, 0) += 10.0;  // far corner
  const DagRnnTrace after = forward_ensemble(p, dags, x, OutputMode::kDeferred);
  for (size_t j = 0; j < 3; ++j) {
    CHECK(before.preact.at(0, j) == after.preact.at(0, j));
  }
}

TEST_CASE("propagation: a source perturbation reaches the sink") {
  Rng rng(56);
  const GridDag dag = decompose({4, 4, Neighborhood::N4}, Direction::SE);
  DirectionParams p = init_direction_params(3, 2, 2, rng);
  // Positive recurrence keeps the ReLU path open end to end.
  for (size_t i = 0; i < p.W.size(); ++i) p.W[i] = 0.3;
  for (size_t i = 0; i < p.U.size(); ++i) p.U[i] = 0.5;

  Tensor x = Tensor::full({16, 2}, 0.5);
  const DirectionTrace before = forward_direction(p, dag, x);
  x.at(0, 0) += 1.0;
  const DirectionTrace after = forward_direction(p, dag, x);
  double diff = 0.0;
  for (size_t k = 0; k < 3; ++k) diff += std::abs(after.h.at(15, k) - before.h.at(15, k));
  CHECK(diff > 1e-6);
}

TEST_CASE("any valid topological order reproduces the forward pass") {
  Rng rng(99);
  const GridSpec spec{3, 4, Neighborhood::N8};
  GridDag dag = decompose(spec, Direction::SW);
  const DirectionParams p = init_direction_params(4, 2, 2, rng);
  const Tensor x = random_tensor({12, 2}, rng);
  const DirectionTrace reference = forward_direction(p, dag, x);

  // Build a different valid order with randomized Kahn tie-breaking.
  std::vector<int> indeg(12, 0);
  for (int v = 0; v < 12; ++v) indeg[v] = static_cast<int>(dag.predecessors[v].size());
  std::vector<int> ready;
  for (int v = 0; v < 12; ++v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    const size_t pick = rng.uniform_int(ready.size());
    const int u = ready[pick];
    ready.erase(ready.begin() + static_cast<long>(pick));
    order.push_back(u);
    for (int s : dag.successors[u]) {
      if (--indeg[s] == 0) ready.push_back(s);
    }
  }
  REQUIRE(order.size() == 12);
  dag.topo_order = order;

  const DirectionTrace permuted = forward_direction(p, dag, x);
  for (size_t i = 0; i < reference.h.size(); ++i) {
    CHECK(std::abs(reference.h[i] - permuted.h[i]) < 1e-12);
  }
}

TEST_CASE("standalone mode applies softmax to the ensemble output") {
  Rng rng(4);
  const GridSpec spec{2, 2, Neighborhood::N4};
  const auto dags = all_dags(spec);
  const EnsembleParams p = init_ensemble_params(2, 2, 3, rng);
  const Tensor x = random_tensor({4, 2}, rng);
  const DagRnnTrace t = forward_ensemble(p, dags, x, OutputMode::kStandalone);
  CHECK(t.softmax_applied);
  for (size_t v = 0; v < 4; ++v) {
    double sum = 0.0;
    for (size_t j = 0; j < 3; ++j) sum += t.output.at(v, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}
