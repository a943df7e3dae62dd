#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mbgp/kernels.hpp"

namespace mbgp {

using Rng = std::mt19937_64;

/// Static k-d tree answering exact Euclidean k-nearest-neighbour queries.
/// Ties in distance are broken by ascending point index.
class SpatialIndex {
 public:
  /// `axis_scale`, when given, divides each coordinate before distances are taken.
  explicit SpatialIndex(std::span<const Point> points, std::optional<Point> axis_scale = std::nullopt);

  std::size_t size() const { return coords_.size(); }

  /// The k nearest points to `query` in ascending (distance, index) order,
  /// skipping `exclude` when set.
  std::vector<std::size_t> knn(const Point& query, std::size_t k,
                               std::optional<std::size_t> exclude = std::nullopt) const;

  /// Original (unscaled) coordinates of point i.
  const Point& point(std::size_t i) const { return points_[i]; }

 private:
  struct Node {
    std::size_t begin = 0;  // range into order_
    std::size_t end = 0;
    int axis = -1;          // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  Point scaled(const Point& p) const;
  std::size_t build(std::size_t begin, std::size_t end);

  std::vector<Point> points_;
  std::vector<Point> coords_;
  std::optional<Point> axis_scale_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

SpatialIndex build_index(std::span<const Point> points, std::optional<Point> axis_scale = std::nullopt);

struct Batch {
  std::vector<std::size_t> indices;
  std::size_t seed_index = 0;
};

/// A uniformly drawn anchor followed by its m - 1 nearest neighbours.
Batch sample_batch(const SpatialIndex& index, Rng& rng, std::size_t m);

/// m distinct indices drawn uniformly without replacement from [0, n).
Batch uniform_batch(Rng& rng, std::size_t n, std::size_t m);

}  // namespace mbgp
