#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "amaml/model.hpp"

namespace amaml::tasks {

// ---------------------------------------------------------------------------
// Synthetic 2D regression families
// ---------------------------------------------------------------------------

/// f(x) = −0.1·Σᵢ A·cos(ω·xᵢ + φ) − Σᵢ xᵢ², x ∈ [−1, 1]².
struct CosMixtureParams {
  double amplitude = 0.5;  // A ∈ [0.1, 1.0]
  double omega = M_PI;     // ω ∈ [0.5π, 2π]
  double phase = 4.0;      // φ ∈ [3.0, 6.0]
};

double cosmixture_value(const CosMixtureParams& p, double x1, double x2);

/// f(x) = Σᵢ |xᵢ·sin(xᵢ + φᵢ) + 0.1·xᵢ|, x ∈ [−10, 10]².
struct AlpineParams {
  double phase1 = 0.0;  // φ₁ ∈ [−5π/12, 5π/12]
  double phase2 = 0.0;  // φ₂ ∈ [−5π/12, 5π/12]
};

double alpine_value(const AlpineParams& p, double x1, double x2);

enum class SyntheticFamily { CosMixture, Alpine };

const char* family_name(SyntheticFamily f);

CosMixtureParams sample_cosmixture_params(std::mt19937_64& rng);
AlpineParams sample_alpine_params(std::mt19937_64& rng);

/// Draws function parameters uniformly from their ranges (first) and then
/// n_shot + n_val non-overlapping inputs uniformly from the family's domain;
/// targets are exact function values (no observation noise).
model::Task sample_synthetic_task(SyntheticFamily family, std::mt19937_64& rng, int n_shot,
                                  int n_val);

// ---------------------------------------------------------------------------
// Collaborative-filtering catalogues
// ---------------------------------------------------------------------------

struct CFUser {
  long user_id = 0;
  /// (item index < item_count, rating), in file order.
  std::vector<std::pair<int, double>> ratings;
};

struct CFCatalogue {
  int item_count = 0;  // one-hot input dimension
  std::vector<CFUser> users;
  double rating_min = 0.0;
  double rating_max = 0.0;
};

/// MovieLens `u.data` format: `user_id \t item_id \t rating \t timestamp`,
/// one interaction per line. Keeps the `top_items` most-rated items and the
/// users with at least `min_ratings` ratings among them; ratings stay on the
/// original 0–5 scale.
CFCatalogue load_movielens(const std::string& path, int top_items = 100, int min_ratings = 20);

/// Jester-1 CSV layout: one row per user; first column is the number of
/// rated jokes, then 100 rating columns where 99 marks an unrated joke and
/// real ratings lie in [−10, 10]. Users with no usable rating are dropped.
CFCatalogue load_jester(const std::string& path);

/// One-hot rating-prediction task for one user: n_shot + n_val ratings drawn
/// without replacement and split disjointly. Returns nullopt when the user
/// has too few ratings — the caller re-samples another task.
std::optional<model::Task> build_cf_task(const CFCatalogue& catalogue, int user_index, int n_shot,
                                         int n_val, std::mt19937_64& rng);

}  // namespace amaml::tasks
