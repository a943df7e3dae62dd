#include "mbgp/batching.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <string>
#include <unordered_set>

#include "mbgp/errors.hpp"

namespace mbgp {

namespace {

constexpr std::size_t kLeafSize = 8;

struct Candidate {
  double dist2;
  std::size_t index;
  bool operator<(const Candidate& o) const {
    return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
  }
};

}  // namespace

SpatialIndex::SpatialIndex(std::span<const Point> points, std::optional<Point> axis_scale)
    : points_(points.begin(), points.end()), axis_scale_(std::move(axis_scale)) {
  if (points_.empty()) throw InvalidArgument("build_index requires a non-empty point set");
  const Eigen::Index dim = points_.front().size();
  for (const Point& p : points_) {
    if (p.size() != dim) throw InvalidArgument("build_index: points have mixed dimensions");
  }
  if (axis_scale_) {
    if (axis_scale_->size() != dim || (axis_scale_->array() <= 0.0).any()) {
      throw InvalidArgument("build_index: axis scale must be positive and match the point dimension");
    }
  }
  coords_.reserve(points_.size());
  for (const Point& p : points_) coords_.push_back(scaled(p));
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  build(0, order_.size());
}

Point SpatialIndex::scaled(const Point& p) const {
  if (!axis_scale_) return p;
  return (p.array() / axis_scale_->array()).matrix();
}

std::size_t SpatialIndex::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  const Eigen::Index dim = coords_.front().size();
  int axis = 0;
  double widest = -1.0;
  for (Eigen::Index a = 0; a < dim; ++a) {
    double lo = coords_[order_[begin]][a];
    double hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = std::min(lo, coords_[order_[i]][a]);
      hi = std::max(hi, coords_[order_[i]][a]);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = static_cast<int>(a);
    }
  }
  const std::size_t mid = begin + (end - begin) / 2;
  const auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
  std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     return coords_[a][axis] < coords_[b][axis];
                   });
  const double split = coords_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

std::vector<std::size_t> SpatialIndex::knn(const Point& query, std::size_t k,
                                           std::optional<std::size_t> exclude) const {
  if (query.size() != coords_.front().size()) throw InvalidArgument("knn: query dimension mismatch");
  const std::size_t available = size() - ((exclude && *exclude < size()) ? 1 : 0);
  if (k > available) {
    throw InvalidArgument("knn: requested " + std::to_string(k) + " neighbours from " +
                          std::to_string(available) + " points");
  }
  if (k == 0) return {};
  const Point q = scaled(query);

  // Max-heap of the best k candidates; top() is the current worst.
  std::priority_queue<Candidate> best;
  auto visit_leaf = [&](const Node& node) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      if (exclude && idx == *exclude) continue;
      const Candidate c{(coords_[idx] - q).squaredNorm(), idx};
      if (best.size() < k) {
        best.push(c);
      } else if (c < best.top()) {
        best.pop();
        best.push(c);
      }
    }
  };
  // Depth-first search; `gap2` is a lower bound on the squared distance from q to the subtree.
  auto search = [&](auto&& self, std::size_t id, double gap2) -> void {
    if (best.size() == k && gap2 > best.top().dist2) return;
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      visit_leaf(node);
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    self(self, near, gap2);
    self(self, far, std::max(gap2, diff * diff));
  };
  search(search, 0, 0.0);

  std::vector<std::size_t> out(best.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = best.top().index;
    best.pop();
  }
  return out;
}

SpatialIndex build_index(std::span<const Point> points, std::optional<Point> axis_scale) {
  return SpatialIndex(points, std::move(axis_scale));
}

Batch sample_batch(const SpatialIndex& index, Rng& rng, std::size_t m) {
  const std::size_t n = index.size();
  if (m < 1 || m > n) {
    throw InvalidArgument("sample_batch requires 1 <= m <= N (m = " + std::to_string(m) +
                          ", N = " + std::to_string(n) + ")");
  }
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  Batch b;
  b.seed_index = pick(rng);
  b.indices.reserve(m);
  b.indices.push_back(b.seed_index);
  for (std::size_t j : index.knn(index.point(b.seed_index), m - 1, b.seed_index)) b.indices.push_back(j);
  return b;
}

Batch uniform_batch(Rng& rng, std::size_t n, std::size_t m) {
  if (m < 1 || m > n) {
    throw InvalidArgument("uniform_batch requires 1 <= m <= n (m = " + std::to_string(m) +
                          ", n = " + std::to_string(n) + ")");
  }
  Batch b;
  b.indices.reserve(m);
  if (2 * m > n) {
    // Dense case: partial Fisher-Yates over the full index range.
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(all[i], all[pick(rng)]);
      b.indices.push_back(all[i]);
    }
  } else {
    std::unordered_set<std::size_t> seen;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (b.indices.size() < m) {
      const std::size_t j = pick(rng);
      if (seen.insert(j).second) b.indices.push_back(j);
    }
  }
  b.seed_index = b.indices.front();
  return b;
}

}  // namespace mbgp
