#include "amaml/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "amaml/errors.hpp"

namespace amaml::tasks {

double cosmixture_value(const CosMixtureParams& p, double x1, double x2) {
  const double mix = p.amplitude * std::cos(p.omega * x1 + p.phase) +
                     p.amplitude * std::cos(p.omega * x2 + p.phase);
  return -0.1 * mix - (x1 * x1 + x2 * x2);
}

double alpine_value(const AlpineParams& p, double x1, double x2) {
  return std::abs(x1 * std::sin(x1 + p.phase1) + 0.1 * x1) +
         std::abs(x2 * std::sin(x2 + p.phase2) + 0.1 * x2);
}

const char* family_name(SyntheticFamily f) {
  switch (f) {
    case SyntheticFamily::CosMixture: return "cosmixture";
    case SyntheticFamily::Alpine: return "alpine";
  }
  return "?";
}

CosMixtureParams sample_cosmixture_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CosMixtureParams p;
  p.amplitude = 0.1 + 0.9 * unit(rng);
  p.omega = (0.5 + 1.5 * unit(rng)) * M_PI;
  p.phase = 3.0 + 3.0 * unit(rng);
  return p;
}

AlpineParams sample_alpine_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double bound = 5.0 * M_PI / 12.0;
  AlpineParams p;
  p.phase1 = -bound + 2.0 * bound * unit(rng);
  p.phase2 = -bound + 2.0 * bound * unit(rng);
  return p;
}

model::Task sample_synthetic_task(SyntheticFamily family, std::mt19937_64& rng, int n_shot,
                                  int n_val) {
  if (n_shot < 1 || n_val < 1) {
    throw ContractError("sample_synthetic_task: n_shot and n_val must be >= 1");
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = n_shot + n_val;

  double domain = 1.0;
  CosMixtureParams cos_params;
  AlpineParams alpine_params;
  std::string id;
  if (family == SyntheticFamily::CosMixture) {
    cos_params = sample_cosmixture_params(rng);
    domain = 1.0;
    std::ostringstream os;
    os << "cosmixture(A=" << cos_params.amplitude << ",w=" << cos_params.omega
       << ",phi=" << cos_params.phase << ")";
    id = os.str();
  } else {
    alpine_params = sample_alpine_params(rng);
    domain = 10.0;
    std::ostringstream os;
    os << "alpine(phi1=" << alpine_params.phase1 << ",phi2=" << alpine_params.phase2 << ")";
    id = os.str();
  }

  Eigen::MatrixXd xs(n, 2);
  Eigen::MatrixXd ys(n, 1);
  for (int i = 0; i < n; ++i) {
    const double x1 = domain * (2.0 * unit(rng) - 1.0);
    const double x2 = domain * (2.0 * unit(rng) - 1.0);
    xs(i, 0) = x1;
    xs(i, 1) = x2;
    ys(i, 0) = family == SyntheticFamily::CosMixture ? cosmixture_value(cos_params, x1, x2)
                                                     : alpine_value(alpine_params, x1, x2);
  }

  model::Task task;
  task.train.inputs = xs.topRows(n_shot);
  task.train.targets = ys.topRows(n_shot);
  task.val.inputs = xs.bottomRows(n_val);
  task.val.targets = ys.bottomRows(n_val);
  task.id = id;
  return task;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no,
                             const std::string& detail) {
  std::ostringstream os;
  os << path << ": parse error at line " << line_no << ": " << detail;
  throw ParseError(os.str());
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  return in;
}

}  // namespace

CFCatalogue load_movielens(const std::string& path, int top_items, int min_ratings) {
  if (top_items < 1 || min_ratings < 1) {
    throw ContractError("load_movielens: top_items and min_ratings must be >= 1");
  }
  std::ifstream in = open_or_throw(path);

  struct Interaction {
    long user;
    long item;
    double rating;
  };
  std::vector<Interaction> interactions;
  std::map<long, long> item_counts;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Interaction row{};
    long timestamp = 0;
    if (!(fields >> row.user >> row.item >> row.rating >> timestamp)) {
      parse_fail(path, line_no, "expected 'user item rating timestamp'");
    }
    if (!(row.rating >= 0.0 && row.rating <= 5.0)) {
      std::ostringstream os;
      os << "rating " << row.rating << " outside [0, 5]";
      parse_fail(path, line_no, os.str());
    }
    interactions.push_back(row);
    ++item_counts[row.item];
  }
  if (interactions.empty()) throw DataError(path + ": no interactions found");

  // Most-rated items first; ties broken by item id for determinism.
  std::vector<std::pair<long, long>> ranked(item_counts.begin(), item_counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const int kept_items = std::min<int>(top_items, static_cast<int>(ranked.size()));
  std::map<long, int> item_index;
  for (int i = 0; i < kept_items; ++i) item_index[ranked[static_cast<std::size_t>(i)].first] = i;

  std::map<long, std::vector<std::pair<int, double>>> per_user;
  for (const Interaction& row : interactions) {
    auto it = item_index.find(row.item);
    if (it == item_index.end()) continue;
    per_user[row.user].emplace_back(it->second, row.rating);
  }

  CFCatalogue catalogue;
  catalogue.item_count = kept_items;
  catalogue.rating_min = 0.0;
  catalogue.rating_max = 5.0;
  for (auto& [user, ratings] : per_user) {
    if (static_cast<int>(ratings.size()) < min_ratings) continue;
    catalogue.users.push_back(CFUser{user, std::move(ratings)});
  }
  if (catalogue.users.empty()) {
    throw DataError(path + ": no user satisfies the min-ratings requirement");
  }
  return catalogue;
}

CFCatalogue load_jester(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  constexpr int kJokes = 100;
  constexpr double kUnrated = 99.0;

  CFCatalogue catalogue;
  catalogue.item_count = kJokes;
  catalogue.rating_min = -10.0;
  catalogue.rating_max = 10.0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    if (!std::getline(fields, cell, ',')) parse_fail(path, line_no, "empty row");

    CFUser user;
    user.user_id = static_cast<long>(line_no);
    for (int j = 0; j < kJokes; ++j) {
      if (!std::getline(fields, cell, ',')) {
        std::ostringstream os;
        os << "expected " << kJokes << " rating columns, found " << j;
        parse_fail(path, line_no, os.str());
      }
      double value = 0.0;
      try {
        value = std::stod(cell);
      } catch (const std::exception&) {
        parse_fail(path, line_no, "non-numeric rating '" + cell + "'");
      }
      if (value == kUnrated) continue;
      if (!(value >= -10.0 && value <= 10.0)) {
        std::ostringstream os;
        os << "rating " << value << " outside [-10, 10] and not the 99 sentinel";
        parse_fail(path, line_no, os.str());
      }
      user.ratings.emplace_back(j, value);
    }
    if (!user.ratings.empty()) catalogue.users.push_back(std::move(user));
  }
  if (catalogue.users.empty()) throw DataError(path + ": no user with usable ratings");
  return catalogue;
}

std::optional<model::Task> build_cf_task(const CFCatalogue& catalogue, int user_index, int n_shot,
                                         int n_val, std::mt19937_64& rng) {
  if (n_shot < 1 || n_val < 1) {
    throw ContractError("build_cf_task: n_shot and n_val must be >= 1");
  }
  if (user_index < 0 || user_index >= static_cast<int>(catalogue.users.size())) {
    throw ContractError("build_cf_task: user index out of range");
  }
  const CFUser& user = catalogue.users[static_cast<std::size_t>(user_index)];
  const int total = static_cast<int>(user.ratings.size());
  const int need = n_shot + n_val;
  if (total < need) return std::nullopt;  // re-sample signal, not an error

  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher–Yates: fix the first `need` positions.
  for (int i = 0; i < need; ++i) {
    std::uniform_int_distribution<int> pick(i, total - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }

  auto fill = [&](int from, int count, model::Dataset& out) {
    out.inputs = Eigen::MatrixXd::Zero(count, catalogue.item_count);
    out.targets.resize(count, 1);
    for (int i = 0; i < count; ++i) {
      const auto& [item, rating] = user.ratings[static_cast<std::size_t>(order[
          static_cast<std::size_t>(from + i)])];
      out.inputs(i, item) = 1.0;
      out.targets(i, 0) = rating;
    }
  };

  model::Task task;
  fill(0, n_shot, task.train);
  fill(n_shot, n_val, task.val);
  task.id = "cf-user-" + std::to_string(user.user_id);
  return task;
}

}  // namespace amaml::tasks
