#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stabcp/models.hpp"
#include "stabcp/types.hpp"

namespace stabcp {

/// Number of entries u_i with u_i <= values[index] (self and ties counted).
/// `index` is 0-based.
std::size_t rank(std::span<const double> values, std::size_t index);

/// Largest rank (or count) admissible at level alpha among m exchangeable
/// scores: floor((1 - alpha) m). A candidate with conformity
/// 1 - count / m is kept iff count <= this value.
std::size_t max_admissible_count(double alpha, std::size_t m);

/// E_i(z) = S(y_i, mu_z(x_i)) for i <= n and E_{n+1}(z) = S(z, mu_z(x_{n+1})),
/// where `model` was fitted on D_{n+1}(candidate).
Vector conformity_scores(const TabularDataset& data, double candidate,
                         const FittedModel& model, const ScoreFunction& score);

/// Exact conformity of a candidate: refit on D_{n+1}(z), then
/// 1 - Rank(E_{n+1}(z)) / (n + 1).
struct ExactConformity {
  std::size_t rank = 0;
  std::size_t m = 0;  // n + 1
  double value() const {
    return 1.0 - static_cast<double>(rank) / static_cast<double>(m);
  }
};

ExactConformity exact_conformity(const TabularDataset& data, double candidate,
                                 const Regressor& regressor,
                                 const ScoreFunction& score);

double pi_exact(const TabularDataset& data, double candidate,
                const Regressor& regressor, const ScoreFunction& score);

/// Reference conformal set: refits at every grid point and keeps those with
/// pi >= alpha. One fit per grid point.
PredictionSet conformal_set_grid(const TabularDataset& data,
                                 const Regressor& regressor,
                                 const ScoreFunction& score, double alpha,
                                 const std::vector<double>& grid);

/// 200 equally spaced points on [y_(1), y_(n)].
std::vector<double> default_grid(const TabularDataset& data,
                                 std::size_t count = 200);

}  // namespace stabcp
