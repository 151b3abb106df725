#include "spoofguard/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "spoofguard/error.hpp"

namespace spoofguard::dtw {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_non_empty(std::span<const double> t, std::span<const double> s) {
  if (t.empty() || s.empty()) throw InvalidInputError("DTW needs non-empty series");
}

/// Per-row inclusive column range [lo, hi] of the search window.
struct Window {
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;
};

Window full_window(std::size_t n, std::size_t m) {
  return {std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, m - 1)};
}

// DP restricted to the window. Backtracking prefers the diagonal, then i - 1, then j - 1.
DtwResult windowed_dtw(std::span<const double> t, std::span<const double> s, const Window& w) {
  const std::size_t n = t.size();
  std::vector<std::vector<double>> cost(n);
  auto at = [&](std::size_t i, std::size_t j) -> double {
    if (j < w.lo[i] || j > w.hi[i]) return kInf;
    return cost[i][j - w.lo[i]];
  };
  for (std::size_t i = 0; i < n; ++i) {
    cost[i].assign(w.hi[i] - w.lo[i] + 1, kInf);
    for (std::size_t j = w.lo[i]; j <= w.hi[i]; ++j) {
      const double d = t[i] - s[j];
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = kInf;
        if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1));
        if (i > 0) best = std::min(best, at(i - 1, j));
        if (j > 0) best = std::min(best, at(i, j - 1));
      }
      cost[i][j - w.lo[i]] = best + d * d;
    }
  }

  DtwResult result;
  std::size_t i = n - 1;
  std::size_t j = s.size() - 1;
  const double total = at(i, j);
  if (!std::isfinite(total)) throw InvalidInputError("DTW window does not connect the corners");
  result.distance = std::sqrt(total);
  result.path.push_back({i, j});
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = at(i - 1, j - 1);
      const double up = at(i - 1, j);
      const double left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    result.path.push_back({i, j});
  }
  std::reverse(result.path.begin(), result.path.end());
  return result;
}

std::vector<double> coarsen(std::span<const double> x) {
  std::vector<double> out;
  out.reserve((x.size() + 1) / 2);
  for (std::size_t i = 0; i + 1 < x.size(); i += 2) out.push_back(0.5 * (x[i] + x[i + 1]));
  if (x.size() % 2 == 1) out.push_back(x.back());
  return out;
}

// Projects a coarse path onto the fine grid and dilates it by `radius` cells.
Window expand_window(const WarpPath& coarse, std::size_t n, std::size_t m, std::size_t radius) {
  Window w{std::vector<std::size_t>(n, m), std::vector<std::size_t>(n, 0)};
  auto mark = [&](std::size_t i, std::size_t j_lo, std::size_t j_hi) {
    w.lo[i] = std::min(w.lo[i], j_lo);
    w.hi[i] = std::max(w.hi[i], j_hi);
  };
  for (const auto& [ci, cj] : coarse) {
    const std::size_t i0 = 2 * ci;
    const std::size_t i1 = std::min(2 * ci + 1, n - 1);
    const std::size_t j0 = 2 * cj;
    const std::size_t j1 = std::min(2 * cj + 1, m - 1);
    const std::size_t row_lo = i0 >= radius ? i0 - radius : 0;
    const std::size_t row_hi = std::min(i1 + radius, n - 1);
    const std::size_t col_lo = j0 >= radius ? j0 - radius : 0;
    const std::size_t col_hi = std::min(j1 + radius, m - 1);
    for (std::size_t i = row_lo; i <= row_hi; ++i) mark(i, col_lo, col_hi);
  }
  // The projected blocks of a continuous coarse path cover both corners and overlap row to row.
  return w;
}

}  // namespace

bool is_valid_path(const WarpPath& path, std::size_t n, std::size_t m) {
  if (path.empty() || n == 0 || m == 0) return false;
  if (path.front() != std::pair<std::size_t, std::size_t>{0, 0}) return false;
  if (path.back() != std::pair<std::size_t, std::size_t>{n - 1, m - 1}) return false;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const auto [pi, pj] = path[k - 1];
    const auto [ci, cj] = path[k];
    if (ci < pi || cj < pj) return false;
    if (ci - pi > 1 || cj - pj > 1) return false;
    if (ci == pi && cj == pj) return false;
  }
  return path.size() >= std::max(n, m);
}

double path_cost(std::span<const double> t, std::span<const double> s, const WarpPath& path) {
  double sum = 0.0;
  for (const auto& [i, j] : path) {
    const double d = t[i] - s[j];
    sum += d * d;
  }
  return std::sqrt(sum);
}

DtwResult dtw_exact(std::span<const double> t, std::span<const double> s) {
  require_non_empty(t, s);
  return windowed_dtw(t, s, full_window(t.size(), s.size()));
}

DtwResult fastdtw(std::span<const double> t, std::span<const double> s, std::size_t radius) {
  require_non_empty(t, s);
  const std::size_t min_size = radius + 2;
  if (t.size() <= min_size || s.size() <= min_size) return dtw_exact(t, s);
  const auto t_coarse = coarsen(t);
  const auto s_coarse = coarsen(s);
  const DtwResult low = fastdtw(t_coarse, s_coarse, radius);
  return windowed_dtw(t, s, expand_window(low.path, t.size(), s.size(), radius));
}

KnnResult knn_classify(std::span<const double> query, std::span<const LabeledTemplate> templates,
                       const KnnConfig& config) {
  if (templates.empty()) throw InvalidInputError("k-NN needs at least one template");
  if (config.k == 0) throw InvalidInputError("k must be at least 1");
  if (templates.size() < config.k) throw InvalidInputError("fewer templates than k");
  if (query.empty()) throw InvalidInputError("k-NN query is empty");

  std::vector<Neighbor> all;
  all.reserve(templates.size());
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const auto& tpl = templates[i];
    const double d = config.metric == Metric::Exact ? dtw_exact(query, tpl.series).distance
                                                    : fastdtw(query, tpl.series, config.radius).distance;
    all.push_back({i, d, tpl.label});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  all.resize(config.k);

  struct Tally {
    std::size_t votes = 0;
    double distance_sum = 0.0;
  };
  std::map<TurnLabel, Tally> tally;
  for (const Neighbor& nb : all) {
    auto& entry = tally[nb.label];
    ++entry.votes;
    entry.distance_sum += nb.distance;
  }
  // Left sorts first in the enum, so equal candidates resolve to Left.
  TurnLabel best = tally.begin()->first;
  for (const auto& [label, entry] : tally) {
    const Tally& cur = tally[best];
    const double mean = entry.distance_sum / static_cast<double>(entry.votes);
    const double best_mean = cur.distance_sum / static_cast<double>(cur.votes);
    if (entry.votes > cur.votes || (entry.votes == cur.votes && mean < best_mean)) best = label;
  }
  return {best, std::move(all)};
}

}  // namespace spoofguard::dtw
