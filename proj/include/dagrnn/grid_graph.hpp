#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <set>
#include <utility>
#include <vector>

namespace dagrnn {

enum class Neighborhood : int { N4 = 4, N8 = 8 };

// H x W pixel/unit grid whose neighborhood graph gets decomposed.
struct GridSpec {
  int height = 1;
  int width = 1;
  Neighborhood neighborhood = Neighborhood::N8;

  int vertex_count() const { return height * width; }
  int vertex_id(int row, int col) const { return row * width + col; }
  bool operator==(const GridSpec&) const = default;
};

// The four context propagation directions. Each names the corner the scan
// moves toward; e.g. SE sweeps from the top-left corner to the bottom-right.
enum class Direction : int { SE = 0, SW = 1, NW = 2, NE = 3 };

inline constexpr std::array<Direction, 4> kDirections = {
    Direction::SE, Direction::SW, Direction::NW, Direction::NE};

const char* direction_name(Direction d);

// One acyclic orientation of the grid neighborhood graph. Immutable after
// construction; safe to share across readers.
struct GridDag {
  GridSpec spec;
  Direction direction = Direction::SE;
  std::vector<std::vector<int>> predecessors;  // per vertex id
  std::vector<std::vector<int>> successors;    // per vertex id
  std::vector<int> topo_order;                 // every vertex after its preds

  int vertex_count() const { return spec.vertex_count(); }
};

// All unordered neighbor pairs {u, v}, u < v, under the spec's neighborhood.
std::set<std::pair<int, int>> ucg_edges(const GridSpec& spec);

// Orients the neighborhood graph along one direction. Interior vertices get
// 2 predecessors under N4 and 3 under N8 (the with-the-scan diagonal only;
// the anti-diagonal is carried by the paired directions). The topological
// order is the deterministic raster scan for the direction.
GridDag decompose(const GridSpec& spec, Direction direction);

// True iff the four directions' edges, orientation forgotten, reproduce
// ucg_edges exactly AND every undirected edge appears oriented both ways
// across the four DAGs.
bool check_cover(const GridSpec& spec);

// True iff every ordered vertex pair (u, v), u != v, is connected by a
// directed path in at least one direction's DAG. Brute-force BFS.
bool check_reachability(const GridSpec& spec);

// Length (edge count) of the shortest directed path from src to dst in one
// DAG; -1 if unreachable. BFS.
int shortest_path_length(const GridDag& dag, int src, int dst);

// Debug dump: one "src dst" pair per line.
void dump_edges(const GridDag& dag, std::ostream& out);

}  // namespace dagrnn
