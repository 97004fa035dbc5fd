#include "dagrnn/grid_graph.hpp"

#include <algorithm>
#include <queue>

#include "dagrnn/errors.hpp"

namespace dagrnn {

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::SE: return "se";
    case Direction::SW: return "sw";
    case Direction::NW: return "nw";
    case Direction::NE: return "ne";
  }
  return "?";
}

namespace {

void validate(const GridSpec& spec) {
  if (spec.height < 1 || spec.width < 1) {
    throw DimensionError("grid extents must be positive");
  }
}

struct Offset {
  int dr, dc;
};

// Predecessor offsets per direction: the two axis neighbors the scan has
// already visited, plus (under N8) the diagonal that lies with the scan.
std::vector<Offset> predecessor_offsets(Direction d, Neighborhood nb) {
  std::vector<Offset> offs;
  switch (d) {
    case Direction::SE: offs = {{-1, 0}, {0, -1}}; if (nb == Neighborhood::N8) offs.push_back({-1, -1}); break;
    case Direction::SW: offs = {{-1, 0}, {0, +1}}; if (nb == Neighborhood::N8) offs.push_back({-1, +1}); break;
    case Direction::NW: offs = {{+1, 0}, {0, +1}}; if (nb == Neighborhood::N8) offs.push_back({+1, +1}); break;
    case Direction::NE: offs = {{+1, 0}, {0, -1}}; if (nb == Neighborhood::N8) offs.push_back({+1, -1}); break;
  }
  return offs;
}

}  // namespace

std::set<std::pair<int, int>> ucg_edges(const GridSpec& spec) {
  validate(spec);
  std::set<std::pair<int, int>> edges;
  auto add = [&](int a, int b) { edges.insert({std::min(a, b), std::max(a, b)}); };
  for (int i = 0; i < spec.height; ++i) {
    for (int j = 0; j < spec.width; ++j) {
      const int v = spec.vertex_id(i, j);
      if (j + 1 < spec.width) add(v, spec.vertex_id(i, j + 1));
      if (i + 1 < spec.height) add(v, spec.vertex_id(i + 1, j));
      if (spec.neighborhood == Neighborhood::N8 && i + 1 < spec.height) {
        if (j + 1 < spec.width) add(v, spec.vertex_id(i + 1, j + 1));
        if (j - 1 >= 0) add(v, spec.vertex_id(i + 1, j - 1));
      }
    }
  }
  return edges;
}

GridDag decompose(const GridSpec& spec, Direction direction) {
  validate(spec);
  GridDag dag;
  dag.spec = spec;
  dag.direction = direction;
  const int n = spec.vertex_count();
  dag.predecessors.assign(n, {});
  dag.successors.assign(n, {});
  dag.topo_order.reserve(n);

  const auto offs = predecessor_offsets(direction, spec.neighborhood);
  for (int i = 0; i < spec.height; ++i) {
    for (int j = 0; j < spec.width; ++j) {
      const int v = spec.vertex_id(i, j);
      for (const Offset& o : offs) {
        const int pi = i + o.dr, pj = j + o.dc;
        if (pi < 0 || pi >= spec.height || pj < 0 || pj >= spec.width) continue;
        dag.predecessors[v].push_back(spec.vertex_id(pi, pj));
      }
    }
  }
  for (int v = 0; v < n; ++v) {
    for (int p : dag.predecessors[v]) dag.successors[p].push_back(v);
  }

  // Raster scan for the direction; visits every predecessor before its
  // dependents by construction.
  const bool rows_down = direction == Direction::SE || direction == Direction::SW;
  const bool cols_right = direction == Direction::SE || direction == Direction::NE;
  for (int ri = 0; ri < spec.height; ++ri) {
    const int i = rows_down ? ri : spec.height - 1 - ri;
    for (int cj = 0; cj < spec.width; ++cj) {
      const int j = cols_right ? cj : spec.width - 1 - cj;
      dag.topo_order.push_back(spec.vertex_id(i, j));
    }
  }
  return dag;
}

bool check_cover(const GridSpec& spec) {
  const auto ucg = ucg_edges(spec);
  std::set<std::pair<int, int>> oriented;  // directed edges over all four DAGs
  for (Direction d : kDirections) {
    const GridDag dag = decompose(spec, d);
    for (int v = 0; v < dag.vertex_count(); ++v) {
      for (int p : dag.predecessors[v]) oriented.insert({p, v});
    }
  }
  std::set<std::pair<int, int>> undirected;
  for (const auto& [u, v] : oriented) {
    undirected.insert({std::min(u, v), std::max(u, v)});
  }
  if (undirected != ucg) return false;
  for (const auto& [u, v] : ucg) {
    if (!oriented.count({u, v}) || !oriented.count({v, u})) return false;
  }
  return true;
}

bool check_reachability(const GridSpec& spec) {
  const int n = spec.vertex_count();
  std::vector<GridDag> dags;
  dags.reserve(4);
  for (Direction d : kDirections) dags.push_back(decompose(spec, d));

  for (int src = 0; src < n; ++src) {
    std::vector<char> reached(n, 0);
    reached[src] = 1;
    for (const GridDag& dag : dags) {
      std::vector<char> seen(n, 0);
      std::queue<int> q;
      q.push(src);
      seen[src] = 1;
      while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int s : dag.successors[u]) {
          if (!seen[s]) {
            seen[s] = 1;
            reached[s] = 1;
            q.push(s);
          }
        }
      }
    }
    for (int v = 0; v < n; ++v) {
      if (!reached[v]) return false;
    }
  }
  return true;
}

int shortest_path_length(const GridDag& dag, int src, int dst) {
  if (src == dst) return 0;
  const int n = dag.vertex_count();
  std::vector<int> dist(n, -1);
  dist[src] = 0;
  std::queue<int> q;
  q.push(src);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int s : dag.successors[u]) {
      if (dist[s] < 0) {
        dist[s] = dist[u] + 1;
        if (s == dst) return dist[s];
        q.push(s);
      }
    }
  }
  return dist[dst];
}

void dump_edges(const GridDag& dag, std::ostream& out) {
  for (int v = 0; v < dag.vertex_count(); ++v) {
    for (int p : dag.predecessors[v]) out << p << ' ' << v << '\n';
  }
}

}  // namespace dagrnn
