#include "dagrnn/dag_rnn.hpp"

#include <cmath>
#include <cstring>

#include "dagrnn/errors.hpp"

namespace dagrnn {

namespace {

double glorot_limit(size_t fan_in, size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor uniform_tensor(std::vector<size_t> shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

void check_direction_shapes(const DirectionParams& p, const GridDag& dag,
                            const Tensor& x) {
  const size_t n = static_cast<size_t>(dag.vertex_count());
  if (x.rank() != 2 || x.extent(0) != n) {
    throw DimensionError("input rows " + x.shape_str() + " do not match grid with " +
                         std::to_string(n) + " vertices");
  }
  if (x.extent(1) != p.input_dim()) {
    throw DimensionError("input feature dim " + x.shape_str() + " does not match U " +
                         p.U.shape_str());
  }
  const size_t h = p.hidden_dim();
  if (p.W.rank() != 2 || p.W.extent(0) != h || p.W.extent(1) != h ||
      p.b.rank() != 1 || p.b.extent(0) != h || p.V.rank() != 2 ||
      p.V.extent(1) != h) {
    throw DimensionError("inconsistent direction parameter shapes U" +
                         p.U.shape_str() + " W" + p.W.shape_str() + " V" +
                         p.V.shape_str() + " b" + p.b.shape_str());
  }
}

}  // namespace

DirectionParams init_direction_params(size_t hidden_dim, size_t input_dim,
                                      size_t output_dim, Rng& rng) {
  DirectionParams p;
  p.U = uniform_tensor({hidden_dim, input_dim}, glorot_limit(input_dim, hidden_dim), rng);
  // A vertex can sum up to three predecessor states before W is applied;
  // a small recurrent scale keeps early passes out of saturation.
  p.W = uniform_tensor({hidden_dim, hidden_dim},
                       0.1 * glorot_limit(hidden_dim, hidden_dim), rng);
  p.V = uniform_tensor({output_dim, hidden_dim}, glorot_limit(hidden_dim, output_dim), rng);
  p.b = Tensor({hidden_dim});
  return p;
}

EnsembleParams init_ensemble_params(size_t hidden_dim, size_t input_dim,
                                    size_t output_dim, Rng& rng) {
  EnsembleParams e;
  for (Direction d : kDirections) {
    e.dir(d) = init_direction_params(hidden_dim, input_dim, output_dim, rng);
  }
  e.c = Tensor({output_dim});
  return e;
}

DirectionTrace forward_direction(const DirectionParams& params,
                                 const GridDag& dag, const Tensor& x) {
  check_direction_shapes(params, dag, x);
  const size_t n = static_cast<size_t>(dag.vertex_count());
  const size_t h = params.hidden_dim();
  const size_t d = params.input_dim();

  DirectionTrace trace{Tensor({n, h}), Tensor({n, h})};
  double* hd = trace.h.data();
  double* hs = trace.hsum.data();
  const double* xd = x.data();
  const double* Ud = params.U.data();
  const double* Wd = params.W.data();
  const double* bd = params.b.data();

  for (int v : dag.topo_order) {
    double* hsum_v = hs + static_cast<size_t>(v) * h;
    for (int p : dag.predecessors[v]) {
      const double* hp = hd + static_cast<size_t>(p) * h;
      for (size_t k = 0; k < h; ++k) hsum_v[k] += hp[k];
    }
    const double* xv = xd + static_cast<size_t>(v) * d;
    double* hv = hd + static_cast<size_t>(v) * h;
    for (size_t k = 0; k < h; ++k) {
      double acc = bd[k];
      const double* urow = Ud + k * d;
      for (size_t j = 0; j < d; ++j) acc += urow[j] * xv[j];
      const double* wrow = Wd + k * h;
      for (size_t j = 0; j < h; ++j) acc += wrow[j] * hsum_v[j];
      hv[k] = acc > 0.0 ? acc : 0.0;
    }
  }
  return trace;
}

DagRnnTrace forward_ensemble(const EnsembleParams& params,
                             const std::array<GridDag, 4>& dags,
                             const Tensor& x, OutputMode mode) {
  for (Direction d : kDirections) {
    const GridDag& dag = dags[static_cast<size_t>(d)];
    if (dag.direction != d || !(dag.spec == dags[0].spec)) {
      throw StructureError("ensemble requires the four directions of one grid");
    }
  }
  const size_t n = static_cast<size_t>(dags[0].vertex_count());
  const size_t c_out = params.c.extent(0);

  DagRnnTrace trace;
  for (Direction d : kDirections) {
    const size_t di = static_cast<size_t>(d);
    trace.dirs[di] = forward_direction(params.dir(d), dags[di], x);
  }

  trace.preact = Tensor({n, c_out});
  double* pre = trace.preact.data();
  for (size_t v = 0; v < n; ++v) {
    double* row = pre + v * c_out;
    for (size_t j = 0; j < c_out; ++j) row[j] = params.c[j];
    for (size_t di = 0; di < 4; ++di) {
      const DirectionParams& p = params.dirs[di];
      const size_t h = p.hidden_dim();
      const double* hv = trace.dirs[di].h.data() + v * h;
      const double* Vd = p.V.data();
      for (size_t j = 0; j < c_out; ++j) {
        double acc = 0.0;
        const double* vrow = Vd + j * h;
        for (size_t k = 0; k < h; ++k) acc += vrow[k] * hv[k];
        row[j] += acc;
      }
    }
  }

  trace.softmax_applied = mode == OutputMode::kStandalone;
  if (trace.softmax_applied) {
    trace.output = Tensor({n, c_out});
    for (size_t v = 0; v < n; ++v) {
      Tensor row({c_out});
      std::memcpy(row.data(), pre + v * c_out, c_out * sizeof(double));
      const Tensor sm = softmax(row);
      std::memcpy(trace.output.data() + v * c_out, sm.data(), c_out * sizeof(double));
    }
  } else {
    trace.output = trace.preact;
  }
  return trace;
}

DirectionGrads backward_direction(const DirectionParams& params,
                                  const GridDag& dag, const Tensor& x,
                                  const DirectionTrace& trace,
                                  const Tensor& err) {
  check_direction_shapes(params, dag, x);
  const size_t n = static_cast<size_t>(dag.vertex_count());
  const size_t h = params.hidden_dim();
  const size_t d = params.input_dim();
  const size_t c_out = params.output_dim();
  if (!trace.h.same_shape(Tensor({n, h})) || !trace.hsum.same_shape(trace.h)) {
    throw ContractError("trace shape " + trace.h.shape_str() +
                        " does not match parameters/grid");
  }
  if (err.rank() != 2 || err.extent(0) != n || err.extent(1) != c_out) {
    throw ContractError("upstream error " + err.shape_str() + " does not match V " +
                        params.V.shape_str());
  }

  DirectionGrads g;
  g.dU = Tensor({h, d});
  g.dW = Tensor({h, h});
  g.dV = Tensor({c_out, h});
  g.db = Tensor({h});
  g.dc = Tensor({c_out});
  g.dh = Tensor({n, h});
  g.dx = Tensor({n, d});

  const double* hd = trace.h.data();
  const double* hs = trace.hsum.data();
  const double* xd = x.data();
  const double* ed = err.data();
  const double* Vd = params.V.data();
  const double* Wd = params.W.data();
  const double* Ud = params.U.data();
  double* dhd = g.dh.data();

  std::vector<double> m(h);         // dh(v) o relu'(h(v))
  std::vector<double> wtm(h);       // W^T m, scattered to predecessors

  for (auto it = dag.topo_order.rbegin(); it != dag.topo_order.rend(); ++it) {
    const size_t v = static_cast<size_t>(*it);
    const double* ev = ed + v * c_out;
    const double* hv = hd + v * h;
    double* dhv = dhd + v * h;

    // Direct error through the output projection.
    for (size_t j = 0; j < c_out; ++j) {
      const double e = ev[j];
      if (e == 0.0) continue;
      const double* vrow = Vd + j * h;
      for (size_t k = 0; k < h; ++k) dhv[k] += vrow[k] * e;
    }

    for (size_t k = 0; k < h; ++k) m[k] = hv[k] > 0.0 ? dhv[k] : 0.0;

    // Parameter accumulation at v.
    {
      const double* xv = xd + v * d;
      const double* hsum_v = hs + v * h;
      double* dU = g.dU.data();
      double* dW = g.dW.data();
      double* db = g.db.data();
      for (size_t k = 0; k < h; ++k) {
        const double mk = m[k];
        if (mk != 0.0) {
          double* durow = dU + k * d;
          for (size_t j = 0; j < d; ++j) durow[j] += mk * xv[j];
          double* dwrow = dW + k * h;
          for (size_t j = 0; j < h; ++j) dwrow[j] += mk * hsum_v[j];
          db[k] += mk;
        }
      }
      double* dV = g.dV.data();
      double* dc = g.dc.data();
      for (size_t j = 0; j < c_out; ++j) {
        const double e = ev[j];
        dc[j] += e;
        if (e != 0.0) {
          double* dvrow = dV + j * h;
          for (size_t k = 0; k < h; ++k) dvrow[k] += e * hv[k];
        }
      }
    }

    // Input gradient and propagation to predecessors.
    {
      double* dxv = g.dx.data() + v * d;
      for (size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (size_t k = 0; k < h; ++k) acc += Ud[k * d + j] * m[k];
        dxv[j] = acc;
      }
      if (!dag.predecessors[*it].empty()) {
        for (size_t j = 0; j < h; ++j) {
          double acc = 0.0;
          for (size_t k = 0; k < h; ++k) acc += Wd[k * h + j] * m[k];
          wtm[j] = acc;
        }
        for (int p : dag.predecessors[*it]) {
          double* dhp = dhd + static_cast<size_t>(p) * h;
          for (size_t j = 0; j < h; ++j) dhp[j] += wtm[j];
        }
      }
    }
  }
  return g;
}

EnsembleGrads backward_ensemble(const EnsembleParams& params,
                                const std::array<GridDag, 4>& dags,
                                const Tensor& x, const DagRnnTrace& trace,
                                const Tensor& err) {
  EnsembleGrads g;
  for (Direction d : kDirections) {
    const size_t di = static_cast<size_t>(d);
    g.dirs[di] = backward_direction(params.dir(d), dags[di], x, trace.dirs[di], err);
  }
  const size_t n = err.extent(0), c_out = err.extent(1);
  g.dc = Tensor({c_out});
  for (size_t v = 0; v < n; ++v) {
    for (size_t j = 0; j < c_out; ++j) g.dc[j] += err.at(v, j);
  }
  g.dx = g.dirs[0].dx;
  for (size_t di = 1; di < 4; ++di) g.dx += g.dirs[di].dx;
  return g;
}

ChainResult chain_rnn_forward(const Tensor& U, const Tensor& W, const Tensor& V,
                              const Tensor& b, const Tensor& c, const Tensor& xs) {
  const size_t T = xs.extent(0);
  const size_t h = U.extent(0);
  const size_t c_out = V.extent(0);
  ChainResult r{Tensor({T, h}), Tensor({T, c_out})};
  Tensor prev({h});  // h(0) = 0
  for (size_t t = 0; t < T; ++t) {
    Tensor xt({xs.extent(1)});
    for (size_t j = 0; j < xt.size(); ++j) xt[j] = xs.at(t, j);
    Tensor pre = matvec(U, xt);
    pre += matvec(W, prev);
    pre += b;
    const Tensor ht = relu(pre);
    Tensor out = matvec(V, ht);
    out += c;
    const Tensor yt = softmax(out);
    for (size_t k = 0; k < h; ++k) r.h.at(t, k) = ht[k];
    for (size_t k = 0; k < c_out; ++k) r.y.at(t, k) = yt[k];
    prev = ht;
  }
  return r;
}

}  // namespace dagrnn
