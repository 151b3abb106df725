#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "spoofguard/types.hpp"

namespace spoofguard::dtw {

using TimeSeries = std::vector<double>;

/// Warp path as 0-based (i, j) pairs from (0, 0) to (|T| - 1, |S| - 1).
using WarpPath = std::vector<std::pair<std::size_t, std::size_t>>;

struct DtwResult {
  double distance = 0.0;  // sqrt of the minimal summed squared differences
  WarpPath path;
};

/// Checks boundary, monotonicity and continuity of a path for series of the given lengths.
bool is_valid_path(const WarpPath& path, std::size_t n, std::size_t m);

/// Sum of squared differences along a path, square-rooted.
double path_cost(std::span<const double> t, std::span<const double> s, const WarpPath& path);

/// Exact DTW by dynamic programming over the full |T| x |S| grid.
DtwResult dtw_exact(std::span<const double> t, std::span<const double> s);

/// Multi-resolution approximation (coarsen, project, refine within `radius` cells).
/// The distance is never below dtw_exact; it equals it when radius >= max(|T|, |S|).
DtwResult fastdtw(std::span<const double> t, std::span<const double> s, std::size_t radius = 1);

struct LabeledTemplate {
  TimeSeries series;
  TurnLabel label = TurnLabel::NoTurn;
};

enum class Metric { Exact, Fast };

struct KnnConfig {
  std::size_t k = 3;
  Metric metric = Metric::Fast;
  std::size_t radius = 1;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
  TurnLabel label = TurnLabel::NoTurn;
};

struct KnnResult {
  TurnLabel label = TurnLabel::NoTurn;
  std::vector<Neighbor> neighbors;  // k nearest, ascending distance
};

/// Majority vote among the k nearest templates; ties go to the smaller mean neighbor
/// distance, then to Left.
KnnResult knn_classify(std::span<const double> query, std::span<const LabeledTemplate> templates,
                       const KnnConfig& config = {});

}  // namespace spoofguard::dtw
