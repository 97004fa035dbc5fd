#pragma once

#include <array>

#include "dagrnn/grid_graph.hpp"
#include "dagrnn/rng.hpp"
#include "dagrnn/tensor.hpp"

namespace dagrnn {

// Per-direction parameter bundle: input projection U [h x d_in], shared
// recurrent matrix W [h x h], output projection V [c_out x h], hidden bias
// b [h]. One W per direction, shared across all predecessors of a vertex.
struct DirectionParams {
  Tensor U, W, V, b;

  size_t hidden_dim() const { return U.extent(0); }
  size_t input_dim() const { return U.extent(1); }
  size_t output_dim() const { return V.extent(0); }
};

// Four DirectionParams plus the shared output bias c [c_out].
struct EnsembleParams {
  std::array<DirectionParams, 4> dirs;  // indexed by Direction
  Tensor c;

  DirectionParams& dir(Direction d) { return dirs[static_cast<size_t>(d)]; }
  const DirectionParams& dir(Direction d) const { return dirs[static_cast<size_t>(d)]; }
};

// Whether the ensemble applies softmax itself (standalone) or hands the raw
// pre-activation to a downstream layer (deferred; the full network applies
// its output nonlinearity after deconvolution).
enum class OutputMode { kStandalone, kDeferred };

// Forward state kept for the backward pass. h rows follow vertex ids, not
// topological order. hsum is the predecessor sum feeding each vertex; it is
// the zero vector at the DAG's source.
struct DirectionTrace {
  Tensor h;     // [N x h]
  Tensor hsum;  // [N x h]
};

struct DagRnnTrace {
  std::array<DirectionTrace, 4> dirs;
  Tensor preact;  // [N x c_out], sum_d V_d h_d + c
  Tensor output;  // [N x c_out]; softmax rows in standalone mode, else preact
  bool softmax_applied = false;
};

// Gradients of one direction plus its contributions to the shared pieces.
// dc duplicates across directions (it is the same vertex-sum for each); the
// ensemble backward counts it once.
struct DirectionGrads {
  Tensor dU, dW, dV, db, dc;
  Tensor dh;  // [N x h] error reaching each hidden vector
  Tensor dx;  // [N x d_in] this direction's input-gradient contribution
};

struct EnsembleGrads {
  std::array<DirectionGrads, 4> dirs;
  Tensor dc;
  Tensor dx;  // [N x d_in], summed over directions
};

DirectionParams init_direction_params(size_t hidden_dim, size_t input_dim,
                                      size_t output_dim, Rng& rng);
EnsembleParams init_ensemble_params(size_t hidden_dim, size_t input_dim,
                                    size_t output_dim, Rng& rng);

// One directed pass: visiting vertices in topological order,
//   h(v) = relu(U x(v) + W hsum(v) + b),  hsum(v) = sum of predecessor h.
// x is [N x d_in] with rows indexed by vertex id.
DirectionTrace forward_direction(const DirectionParams& params,
                                 const GridDag& dag, const Tensor& x);

// Runs all four directions and aggregates per-vertex output pre-activations
// sum_d V_d h_d(v) + c. The four dags must come from one GridSpec and carry
// each direction exactly once.
DagRnnTrace forward_ensemble(const EnsembleParams& params,
                             const std::array<GridDag, 4>& dags,
                             const Tensor& x, OutputMode mode);

// Exact reverse-order gradients for one direction. err is [N x c_out], the
// upstream error on the ensemble pre-activation at each vertex. Processing
// order is the reverse topological order:
//   dh(v) = V^T err(v) + sum_{k in succ(v)} W^T (dh(k) o relu'(h(k)))
// with parameter gradients accumulated per vertex.
DirectionGrads backward_direction(const DirectionParams& params,
                                  const GridDag& dag, const Tensor& x,
                                  const DirectionTrace& trace,
                                  const Tensor& err);

EnsembleGrads backward_ensemble(const EnsembleParams& params,
                                const std::array<GridDag, 4>& dags,
                                const Tensor& x, const DagRnnTrace& trace,
                                const Tensor& err);

// Elman chain recursion, the 1-D special case used as an oracle:
//   h(t) = relu(U x(t) + W h(t-1) + b), h(0) = 0;  y(t) = softmax(V h(t) + c).
struct ChainResult {
  Tensor h;  // [T x h]
  Tensor y;  // [T x c_out]
};
ChainResult chain_rnn_forward(const Tensor& U, const Tensor& W, const Tensor& V,
                              const Tensor& b, const Tensor& c, const Tensor& xs);

}  // namespace dagrnn
