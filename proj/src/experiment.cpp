#include "amaml/experiment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "amaml/fields.hpp"
#include "amaml/parallel.hpp"
#include "amaml/rng.hpp"

namespace amaml::experiment {

using nlohmann::json;

namespace {

void check_known_keys(const json& obj, std::initializer_list<const char*> allowed,
                      const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }) == allowed.end()) {
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

meta::MetaConfig meta_from_json(const json& j) {
  check_known_keys(j,
                   {"algorithm", "inner_step", "outer_lr", "batch_size", "max_meta_iters",
                    "stop_tol", "horizon", "grid_step", "inner_steps", "prox_strength",
                    "cg_steps", "rtol", "atol", "forward_method", "skip_diverged_tasks"},
                   "meta");
  meta::MetaConfig m;
  m.algorithm = meta::algorithm_from_name(j.value("algorithm", "amaml"));
  m.inner_step = j.value("inner_step", m.inner_step);
  m.outer_lr = j.value("outer_lr", m.outer_lr);
  m.batch_size = j.value("batch_size", m.batch_size);
  m.max_meta_iters = j.value("max_meta_iters", m.max_meta_iters);
  m.stop_tol = j.value("stop_tol", m.stop_tol);
  m.horizon = j.value("horizon", m.horizon);
  m.grid_step = j.value("grid_step", m.grid_step);
  m.inner_steps = j.value("inner_steps", m.inner_steps);
  m.prox_strength = j.value("prox_strength", m.prox_strength);
  m.cg_steps = j.value("cg_steps", m.cg_steps);
  m.rtol = j.value("rtol", m.rtol);
  m.atol = j.value("atol", m.atol);
  m.forward_method = ode::method_from_name(j.value("forward_method", "rk45"));
  m.skip_diverged_tasks = j.value("skip_diverged_tasks", m.skip_diverged_tasks);
  return m;
}

json meta_to_json(const meta::MetaConfig& m) {
  return json{{"algorithm", meta::algorithm_name(m.algorithm)},
              {"inner_step", m.inner_step},
              {"outer_lr", m.outer_lr},
              {"batch_size", m.batch_size},
              {"max_meta_iters", m.max_meta_iters},
              {"stop_tol", m.stop_tol},
              {"horizon", m.horizon},
              {"grid_step", m.grid_step},
              {"inner_steps", m.inner_steps},
              {"prox_strength", m.prox_strength},
              {"cg_steps", m.cg_steps},
              {"rtol", m.rtol},
              {"atol", m.atol},
              {"forward_method", ode::method_name(m.forward_method)},
              {"skip_diverged_tasks", m.skip_diverged_tasks}};
}

std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
}

bool log_debug() {
  const char* v = std::getenv("AMAML_LOG");
  return v != nullptr && std::string(v) == "debug";
}

bool log_quiet() {
  const char* v = std::getenv("AMAML_LOG");
  return v != nullptr && std::string(v) == "quiet";
}

}  // namespace

tasks::SyntheticFamily ExperimentConfig::synthetic_family() const {
  if (family == "cosmixture") return tasks::SyntheticFamily::CosMixture;
  if (family == "alpine") return tasks::SyntheticFamily::Alpine;
  throw ConfigError("family '" + family + "' is not a synthetic family");
}

model::MlpSpec ExperimentConfig::mlp_spec(int input_dim) const {
  model::MlpSpec spec;
  spec.layer_sizes.push_back(input_dim);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(1);
  spec.seed = derive_seed(seed, kStreamInit);
  spec.validate();
  return spec;
}

void ExperimentConfig::validate() const {
  if (family != "cosmixture" && family != "alpine" && family != "movielens" &&
      family != "jester") {
    throw ConfigError("config: unknown family '" + family +
                      "' (expected cosmixture|alpine|movielens|jester)");
  }
  if (!is_synthetic() && data_path.empty()) {
    throw ConfigError("config: family '" + family + "' needs data_path");
  }
  if (shots < 1 || vals < 1) throw ConfigError("config: shots and vals must be >= 1");
  if (eval_points < 1) throw ConfigError("config: eval_points must be >= 1");
  if (hidden.empty()) throw ConfigError("config: need at least one hidden layer");
  for (int hsize : hidden) {
    if (hsize < 1) throw ConfigError("config: hidden layer sizes must be >= 1");
  }
  if (threads < 0) throw ConfigError("config: threads must be >= 0");
  if (test_tasks < 1) throw ConfigError("config: test_tasks must be >= 1");
  if (epochs_max < 0) throw ConfigError("config: epochs_max must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("config: checkpoint_every must be >= 1");
  (void)metrics::normalizer_from_name(normalizer);
  if (bench.updates < 1) throw ConfigError("config: bench updates must be >= 1");
  for (const auto& name : bench.algorithms) (void)meta::algorithm_from_name(name);
  meta.validate();
}

std::string ExperimentConfig::to_json() const {
  json j{{"family", family},
         {"data_path", data_path},
         {"shots", shots},
         {"vals", vals},
         {"eval_points", eval_points},
         {"hidden", hidden},
         {"seed", seed},
         {"threads", threads},
         {"test_tasks", test_tasks},
         {"epochs_max", epochs_max},
         {"checkpoint_every", checkpoint_every},
         {"normalizer", normalizer},
         {"meta", meta_to_json(meta)},
         {"bench",
          json{{"horizons", bench.horizons},
               {"algorithms", bench.algorithms},
               {"updates", bench.updates}}}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_known_keys(j,
                   {"family", "data_path", "shots", "vals", "eval_points", "hidden", "seed",
                    "threads", "test_tasks", "epochs_max", "checkpoint_every", "normalizer",
                    "meta", "bench"},
                   "top level");
  ExperimentConfig cfg;
  cfg.family = j.value("family", cfg.family);
  cfg.data_path = j.value("data_path", cfg.data_path);
  cfg.shots = j.value("shots", cfg.shots);
  cfg.vals = j.value("vals", cfg.vals);
  cfg.eval_points = j.value("eval_points", cfg.eval_points);
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.test_tasks = j.value("test_tasks", cfg.test_tasks);
  cfg.epochs_max = j.value("epochs_max", cfg.epochs_max);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.normalizer = j.value("normalizer", cfg.normalizer);
  if (j.contains("meta")) cfg.meta = meta_from_json(j["meta"]);
  if (j.contains("bench")) {
    const json& b = j["bench"];
    check_known_keys(b, {"horizons", "algorithms", "updates"}, "bench");
    cfg.bench.horizons = b.value("horizons", cfg.bench.horizons);
    cfg.bench.algorithms = b.value("algorithms", cfg.bench.algorithms);
    cfg.bench.updates = b.value("updates", cfg.bench.updates);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str());
}

TaskEnvironment TaskEnvironment::create(const ExperimentConfig& cfg) {
  cfg.validate();
  TaskEnvironment env;
  env.cfg = cfg;

  if (cfg.is_synthetic()) {
    env.spec = cfg.mlp_spec(2);
    return env;
  }

  env.catalogue = cfg.family == "movielens" ? tasks::load_movielens(cfg.data_path)
                                            : tasks::load_jester(cfg.data_path);
  env.spec = cfg.mlp_spec(env.catalogue->item_count);

  // Fixed user split: shuffled once from the master seed, first test_tasks
  // users are held out for meta-testing.
  const int users = static_cast<int>(env.catalogue->users.size());
  std::vector<int> order(static_cast<std::size_t>(users));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng = make_rng(cfg.seed, kStreamCfSplit);
  for (int i = users - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  const int held_out = std::min(cfg.test_tasks, users);
  env.test_users.assign(order.begin(), order.begin() + held_out);
  env.train_users.assign(order.begin() + held_out, order.end());
  if (env.train_users.empty()) {
    throw DataError("CF split leaves no users for meta-training; lower test_tasks");
  }
  return env;
}

meta::TaskSource TaskEnvironment::meta_task_source() const {
  const ExperimentConfig cfg = this->cfg;
  const model::MlpSpec spec = this->spec;
  if (cfg.is_synthetic()) {
    const tasks::SyntheticFamily family = cfg.synthetic_family();
    return [cfg, spec, family](int iter, int slot) {
      std::mt19937_64 rng = make_rng(cfg.seed, kStreamMetaTask, iter, slot);
      const model::Task task = tasks::sample_synthetic_task(family, rng, cfg.shots, cfg.vals);
      return meta::bind_task(spec, task);
    };
  }
  const tasks::CFCatalogue* catalogue = &*this->catalogue;
  const std::vector<int> pool = this->train_users;
  return [cfg, spec, catalogue, pool](int iter, int slot) {
    std::mt19937_64 rng = make_rng(cfg.seed, kStreamMetaTask, iter, slot);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(pool.size()) - 1);
    // Tasks with too few ratings are re-sampled, per protocol.
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const int user = pool[static_cast<std::size_t>(pick(rng))];
      auto task = tasks::build_cf_task(*catalogue, user, cfg.shots, cfg.vals, rng);
      if (task) return meta::bind_task(spec, *task);
    }
    throw DataError("no meta-training user has enough ratings for the shot/val setting");
  };
}

std::vector<model::Task> TaskEnvironment::sample_test_tasks() const {
  std::vector<model::Task> out;
  if (cfg.is_synthetic()) {
    const tasks::SyntheticFamily family = cfg.synthetic_family();
    out.reserve(static_cast<std::size_t>(cfg.test_tasks));
    for (int i = 0; i < cfg.test_tasks; ++i) {
      std::mt19937_64 rng = make_rng(cfg.seed, kStreamTestTask, i);
      out.push_back(tasks::sample_synthetic_task(family, rng, cfg.shots, cfg.eval_points));
    }
    return out;
  }
  // CF meta-test: train on the shot set, evaluate on every remaining rating.
  int skipped = 0;
  for (std::size_t i = 0; i < test_users.size(); ++i) {
    const int user = test_users[i];
    const auto& ratings = catalogue->users[static_cast<std::size_t>(user)].ratings;
    const int remaining = static_cast<int>(ratings.size()) - cfg.shots;
    if (remaining < 1) {
      ++skipped;
      continue;
    }
    std::mt19937_64 rng = make_rng(cfg.seed, kStreamTestTask, i);
    auto task = tasks::build_cf_task(*catalogue, user, cfg.shots, remaining, rng);
    if (task) out.push_back(std::move(*task));
  }
  if (skipped > 0 && !log_quiet()) {
    std::cerr << "[amaml] warning: " << skipped
              << " test users lack ratings beyond the shot set and were skipped\n";
  }
  if (out.empty()) throw DataError("no usable test task for the configured shot setting");
  return out;
}

std::uint64_t spec_hash(const model::MlpSpec& spec) {
  std::ostringstream os;
  os << "mlp";
  for (int s : spec.layer_sizes) os << ':' << s;
  os << ":uniform_fan_in";
  const std::string text = os.str();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void write_doubles_le(std::ofstream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(v[i]);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

Eigen::VectorXd read_doubles_le(std::ifstream& in, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw DataError("theta file truncated");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

std::filesystem::path sidecar_path(std::filesystem::path bin_path) {
  bin_path.replace_extension(".json");
  return bin_path;
}

}  // namespace

void write_theta(const std::filesystem::path& bin_path, const Eigen::VectorXd& theta,
                 const model::MlpSpec& spec, std::uint64_t seed, const std::string& algorithm) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + bin_path.string() + "' for writing");
  write_doubles_le(out, theta);
  out.close();

  json sidecar{{"d", theta.size()},
               {"spec_hash", hash_hex(spec_hash(spec))},
               {"seed", seed},
               {"layer_sizes", spec.layer_sizes},
               {"algorithm", algorithm},
               {"format", "float64-le"}};
  write_text(sidecar_path(bin_path), sidecar.dump(2) + "\n");
}

ThetaFile read_theta(const std::filesystem::path& bin_path, const model::MlpSpec& expected_spec) {
  std::ifstream meta_in(sidecar_path(bin_path));
  if (!meta_in) {
    throw DataError("theta sidecar '" + sidecar_path(bin_path).string() + "' not found");
  }
  json sidecar;
  try {
    meta_in >> sidecar;
  } catch (const json::exception& e) {
    throw DataError(std::string("theta sidecar is not valid JSON: ") + e.what());
  }
  const std::string expected_hash = hash_hex(spec_hash(expected_spec));
  const std::string actual_hash = sidecar.value("spec_hash", "");
  if (actual_hash != expected_hash) {
    throw DataError("theta file spec hash " + actual_hash +
                    " does not match the configured model (" + expected_hash + ")");
  }
  const Eigen::Index d = sidecar.value("d", Eigen::Index(0));
  if (d != expected_spec.param_count()) {
    throw DataError("theta file dimension does not match the configured model");
  }
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + bin_path.string() + "'");
  ThetaFile out;
  out.theta = read_doubles_le(in, d);
  out.algorithm = sidecar.value("algorithm", "");
  char extra = 0;
  if (in.read(&extra, 1)) throw DataError("theta file longer than sidecar dimension");
  return out;
}

MetaTrainOutputs run_meta_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  const TaskEnvironment env = TaskEnvironment::create(cfg);
  const auto dir = ensure_dir(out_dir);

  MetaTrainOutputs outputs;
  outputs.config_json = dir / "config.json";
  outputs.theta_bin = dir / "theta.bin";
  outputs.log_jsonl = dir / "train_log.jsonl";
  write_text(outputs.config_json, cfg.to_json());

  std::ofstream log_out(outputs.log_jsonl);
  if (!log_out) throw DataError("cannot open '" + outputs.log_jsonl.string() + "' for writing");
  const bool debug = log_debug();
  auto on_iter = [&](const meta::MetaIterLog& entry) {
    json line{{"iter", entry.iter},
              {"mean_val_loss", entry.mean_val_loss},
              {"grad_norm", entry.grad_norm},
              {"wall_ms", entry.wall_ms},
              {"grad_calls", entry.grad_calls},
              {"hvp_calls", entry.hvp_calls},
              {"peak_state_floats", entry.peak_state_floats}};
    log_out << line.dump() << '\n';
    if (debug) {
      std::cerr << "[amaml] iter " << entry.iter << " mean_val_loss " << entry.mean_val_loss
                << " grad_norm " << entry.grad_norm << '\n';
    }
  };

  const Eigen::VectorXd theta0 = model::init_params(env.spec);
  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  meta::MetaTrainResult result =
      meta::meta_train(env.meta_task_source(), theta0, cfg.meta, threads, on_iter);

  write_theta(outputs.theta_bin, result.theta, env.spec, cfg.seed,
              meta::algorithm_name(cfg.meta.algorithm));

  if (!log_quiet()) {
    const auto summary = metrics::resource_report(meta::algorithm_name(cfg.meta.algorithm),
                                                  std::span(result.log));
    std::cout << "meta-train " << summary.algorithm << ": " << result.iters_run << " iters";
    if (!result.log.empty()) {
      std::cout << ", final mean_val_loss " << result.log.back().mean_val_loss
                << ", mean wall " << summary.mean_wall_ms << " ms/update";
    }
    std::cout << "\n  theta: " << outputs.theta_bin.string() << '\n';
  }
  return outputs;
}

void run_meta_test(const ExperimentConfig& cfg, const std::string& theta_path,
                   const std::string& out_dir, const MetaTestOptions& options) {
  const TaskEnvironment env = TaskEnvironment::create(cfg);
  const auto dir = ensure_dir(out_dir);
  write_text(dir / "config.json", cfg.to_json());

  const ThetaFile loaded = read_theta(theta_path, env.spec);
  const std::vector<model::Task> test_tasks = env.sample_test_tasks();
  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  const auto normalizer = metrics::normalizer_from_name(cfg.normalizer);

  metrics::AdaptationCurve curve =
      metrics::adaptation_curve(env.spec, loaded.theta, test_tasks, cfg.epochs_max,
                                cfg.meta.inner_step, cfg.checkpoint_every, threads, normalizer);
  curve.algorithm = loaded.algorithm.empty() ? "loaded" : loaded.algorithm;
  curve.config_snapshot = cfg.to_json();
  metrics::write_curve_csv(curve, (dir / "curve.csv").string());

  if (options.baseline_random) {
    metrics::AdaptationCurve random_curve = metrics::adaptation_curve(
        env.spec, model::init_params(env.spec), test_tasks, cfg.epochs_max, cfg.meta.inner_step,
        cfg.checkpoint_every, threads, normalizer);
    random_curve.algorithm = "random-init";
    random_curve.config_snapshot = cfg.to_json();
    metrics::write_curve_csv(random_curve, (dir / "curve_random.csv").string());
  }

  if (!log_quiet()) {
    std::cout << "meta-test " << curve.algorithm << ": " << test_tasks.size() << " tasks, final "
              << "nRMSE " << curve.nrmse_mean.back() << " +- " << curve.nrmse_std.back() << '\n';
  }
}

ExperimentConfig grad_check_defaults() {
  ExperimentConfig cfg;
  cfg.family = "cosmixture";
  cfg.shots = 10;
  cfg.vals = 10;
  cfg.hidden = {8, 8};
  cfg.seed = 7;
  cfg.meta.horizon = 0.2;
  cfg.meta.grid_step = 0.01;
  cfg.meta.inner_steps = 20;
  return cfg;
}

namespace {

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

/// θ ↦ J(θ) through a fixed-step RK4 forward solve — smooth in θ, which is
/// what central finite differences need.
double pipeline_val_loss(const meta::DifferentiableTask& task, const Eigen::VectorXd& theta,
                         ode::SolverConfig scfg) {
  scfg.method = ode::Method::RK4;
  const ode::VectorField dynamics = [&](const Eigen::VectorXd& u, Eigen::VectorXd& du) {
    du = -ad::grad(*task.train_loss, u);
  };
  const ode::ForwardResult fwd = ode::solve_forward(dynamics, theta, scfg);
  return ad::value(*task.val_loss, fwd.grid.states.back());
}

Eigen::VectorXd fd_pipeline_grad(const meta::DifferentiableTask& task,
                                 const Eigen::VectorXd& theta, const ode::SolverConfig& scfg,
                                 int threads) {
  Eigen::VectorXd g(theta.size());
  parallel_for(static_cast<int>(theta.size()), threads, [&](int i) {
    const double eps = 1e-5 * (1.0 + std::abs(theta[i]));
    Eigen::VectorXd plus = theta, minus = theta;
    plus[i] += eps;
    minus[i] -= eps;
    g[i] = (pipeline_val_loss(task, plus, scfg) - pipeline_val_loss(task, minus, scfg)) /
           (2.0 * eps);
  });
  return g;
}

Eigen::VectorXd fd_hvp(const ad::ScalarField& f, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& v) {
  const double eps = 1e-5 * (1.0 + u.cwiseAbs().maxCoeff());
  return (ad::grad(f, u + eps * v) - ad::grad(f, u - eps * v)) / (2.0 * eps);
}

struct CheckReport {
  bool ok = true;
  void line(std::ostream& out, bool pass, const std::string& name, const std::string& detail) {
    out << (pass ? "[ok]   " : "[FAIL] ") << name << ": " << detail << '\n';
    ok = ok && pass;
  }
};

}  // namespace

bool run_grad_check(const ExperimentConfig& cfg, const GradCheckOptions& options,
                    std::ostream& out) {
  const TaskEnvironment env = TaskEnvironment::create(cfg);
  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  CheckReport report;

  std::mt19937_64 rng = make_rng(cfg.seed, kStreamGradCheck);
  const meta::DifferentiableTask task = env.meta_task_source()(0, 0);
  const Eigen::VectorXd theta = model::init_params(env.spec);
  const Eigen::Index d = theta.size();

  // 1. Exact HVP against the finite-difference HVP oracle.
  {
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    const int instances = 20;
    for (int k = 0; k < instances; ++k) {
      Eigen::VectorXd u(d), v(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        u[i] = normal(rng) * 0.5;
        v[i] = normal(rng);
      }
      const Eigen::VectorXd exact = ad::hvp(*task.train_loss, u, v);
      const Eigen::VectorXd approx = fd_hvp(*task.train_loss, u, v);
      worst = std::max(worst, (exact - approx).norm() / std::max(approx.norm(), 1e-12));
    }
    std::ostringstream detail;
    detail << instances << " random instances, max relative error " << worst;
    report.line(out, worst <= 1e-5, "hvp vs finite differences", detail.str());
  }

  // 2. Adjoint gradient against finite differences through the pipeline.
  {
    meta::AdjointResult adj = meta::adjoint_task_grad(task, theta, cfg.meta);
    if (options.corrupt_adjoint_sign) {
      // The backward sweep is linear in λ(T), so flipping the sign of the
      // result is exactly the corrupted-λ(T) run.
      adj.grad = -adj.grad;
    }
    const Eigen::VectorXd fd = fd_pipeline_grad(task, theta, cfg.meta.solver(), threads);
    const double cosine = cosine_similarity(adj.grad, fd);
    const double rel = (adj.grad - fd).norm() / std::max(fd.norm(), 1e-12);
    std::ostringstream detail;
    detail << "cosine " << cosine << " (need >= 0.999), relative l2 error " << rel
           << " (need <= 1e-2)";
    report.line(out, cosine >= 0.999 && rel <= 1e-2, "adjoint vs fd-through-pipeline",
                detail.str());
  }

  // 3. Order of the adjoint scheme under h-halving, against the continuum
  //    limit of the exact unrolled gradient (Richardson-extrapolated), plus
  //    the adjoint/unrolled mutual-consistency decay.
  {
    const double t_end = cfg.meta.horizon;
    meta::MetaConfig tight = cfg.meta;
    tight.rtol = 1e-10;
    tight.atol = 1e-12;

    auto unrolled_at = [&](double h) {
      meta::MetaConfig c = cfg.meta;
      c.inner_step = h;
      c.inner_steps = static_cast<int>(std::llround(t_end / h));
      return meta::unrolled_maml_grad(task, theta, c).grad;
    };
    const double h_fine = 5e-4;
    const Eigen::VectorXd reference = 2.0 * unrolled_at(h_fine) - unrolled_at(2.0 * h_fine);

    const std::vector<double> hs{0.02, 0.01, 0.005};
    std::vector<double> errs, consistency;
    for (double h : hs) {
      meta::MetaConfig c = tight;
      c.grid_step = h;
      const Eigen::VectorXd adj = meta::adjoint_task_grad(task, theta, c).grad;
      errs.push_back((adj - reference).norm());
      consistency.push_back((adj - unrolled_at(h)).norm() / unrolled_at(h).norm());
    }
    bool pass = true;
    std::ostringstream detail;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      detail << "e(" << hs[i] << ")=" << errs[i] << ' ';
    }
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
      const double ratio = errs[i] / errs[i + 1];
      detail << "ratio=" << ratio << ' ';
      pass = pass && ratio >= 3.0 && ratio <= 5.0;
    }
    for (std::size_t i = 0; i + 1 < consistency.size(); ++i) {
      const double decay = consistency[i + 1] / consistency[i];
      detail << "unrolled-consistency-decay=" << decay << ' ';
      pass = pass && decay <= 0.7;
    }
    report.line(out, pass, "adjoint order under h-halving", detail.str());
  }

  out << (report.ok ? "grad-check: all checks passed\n" : "grad-check: FAILURES above\n");
  return report.ok;
}

void run_bench(const ExperimentConfig& cfg, const std::string& out_dir) {
  const TaskEnvironment env = TaskEnvironment::create(cfg);
  const auto dir = ensure_dir(out_dir);
  write_text(dir / "config.json", cfg.to_json());

  const std::filesystem::path csv_path = dir / "bench.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw DataError("cannot open '" + csv_path.string() + "' for writing");
  csv << "algorithm,T,K,grad_calls,hvp_calls,peak_state_floats,wall_ms_per_update\n";
  csv.precision(17);

  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  const Eigen::VectorXd theta0 = model::init_params(env.spec);
  const meta::TaskSource source = env.meta_task_source();

  for (const std::string& name : cfg.bench.algorithms) {
    for (double horizon : cfg.bench.horizons) {
      meta::MetaConfig m = cfg.meta;
      m.algorithm = meta::algorithm_from_name(name);
      m.horizon = horizon;
      m.inner_steps = static_cast<int>(std::llround(horizon / m.inner_step));
      m.max_meta_iters = cfg.bench.updates;
      m.stop_tol = 0.0;
      m.validate();

      const meta::MetaTrainResult result = meta::meta_train(source, theta0, m, threads);
      const auto summary = metrics::resource_report(name, std::span(result.log));
      csv << name << ',' << horizon << ',' << m.inner_steps << ',' << summary.mean_grad_calls
          << ',' << summary.mean_hvp_calls << ',' << summary.peak_state_floats << ','
          << summary.mean_wall_ms << '\n';
      if (log_debug()) {
        std::cerr << "[amaml] bench " << name << " T=" << horizon << " done\n";
      }
    }
  }
  if (!log_quiet()) std::cout << "bench: wrote " << csv_path.string() << '\n';
}

}  // namespace amaml::experiment
