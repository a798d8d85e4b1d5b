#include "doctest.h"

#include <random>

#include "amaml/fields.hpp"
#include "amaml/model.hpp"

#include "test_util.hpp"

using namespace amaml;

TEST_CASE("init_params is a deterministic function of (spec, seed)") {
  model::MlpSpec spec;
  spec.layer_sizes = {2, 16, 1};
  spec.seed = 1234;
  const Eigen::VectorXd a = model::init_params(spec);
  const Eigen::VectorXd b = model::init_params(spec);
  CHECK(a == b);

  model::MlpSpec other = spec;
  other.seed = 1235;
  const Eigen::VectorXd c = model::init_params(other);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("parameter count formula") {
  model::MlpSpec spec;
  spec.layer_sizes = {2, 32, 32, 1};
  CHECK(spec.param_count() == 1185);  // 3*32 + 33*32 + 33*1

  model::MlpSpec cf;
  cf.layer_sizes = {100, 40, 40, 1};
  CHECK(cf.param_count() == (100 + 1) * 40 + (40 + 1) * 40 + 41);
}

TEST_CASE("init_params stays within the fan-in bound, biases zero") {
  model::MlpSpec spec;
  spec.layer_sizes = {4, 8, 1};
  spec.seed = 9;
  const Eigen::VectorXd u = model::init_params(spec);
  for (int l = 0; l < spec.num_affine_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
    for (Eigen::Index i = spec.weight_offset(l); i < spec.bias_offset(l); ++i) {
      CHECK(std::abs(u[i]) <= bound);
    }
    const int fan_out = spec.layer_sizes[l + 1];
    for (Eigen::Index i = spec.bias_offset(l); i < spec.bias_offset(l) + fan_out; ++i) {
      CHECK(u[i] == 0.0);
    }
  }
}

TEST_CASE("predict: all-zero parameters give zero output") {
  model::MlpSpec spec;
  spec.layer_sizes = {2, 5, 3};
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(spec.param_count());
  const Eigen::VectorXd y = model::predict(spec, u, Eigen::Vector2d(0.4, -2.0));
  CHECK(y.norm() == 0.0);
}

TEST_CASE("predict: zero hidden weights leave only the output bias") {
  model::MlpSpec spec;
  spec.layer_sizes = {1, 1, 1};
  Eigen::VectorXd u = Eigen::VectorXd::Zero(spec.param_count());
  u[spec.bias_offset(1)] = 0.75;  // output bias
  Eigen::VectorXd x(1);
  x[0] = 3.0;
  const Eigen::VectorXd y = model::predict(spec, u, x);
  CHECK(y[0] == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("predict: regression-locked golden value") {
  // Frozen from the first implementation that passed the FD gradient checks.
  model::MlpSpec spec;
  spec.layer_sizes = {2, 3, 1};
  spec.seed = 42;
  const Eigen::VectorXd u = model::init_params(spec);
  const Eigen::VectorXd y = model::predict(spec, u, Eigen::Vector2d(0.3, -0.7));
  CHECK(y[0] == doctest::Approx(-0.20162403657087943).epsilon(1e-14));
}

TEST_CASE("predict: adding c to the output bias adds c to every output") {
  const auto inst = testutil::random_mlp_instance({2, 6, 2}, 1, 3);
  Eigen::VectorXd shifted = inst.u;
  const int last = inst.spec.num_affine_layers() - 1;
  shifted[inst.spec.bias_offset(last)] += 2.5;
  shifted[inst.spec.bias_offset(last) + 1] += 2.5;
  const Eigen::Vector2d x(0.2, 0.6);
  const Eigen::VectorXd base = model::predict(inst.spec, inst.u, x);
  const Eigen::VectorXd moved = model::predict(inst.spec, shifted, x);
  CHECK(moved[0] == doctest::Approx(base[0] + 2.5).epsilon(1e-14));
  CHECK(moved[1] == doctest::Approx(base[1] + 2.5).epsilon(1e-14));
}

TEST_CASE("mse_loss: perfect predictions give zero") {
  model::MlpSpec spec;
  spec.layer_sizes = {2, 4, 1};
  spec.seed = 5;
  const Eigen::VectorXd u = model::init_params(spec);
  model::Dataset data;
  data.inputs = Eigen::MatrixXd::Random(6, 2);
  data.targets = model::predict_all(spec, u, data.inputs);
  CHECK(model::mse_loss(spec, u, data) == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("mse_loss: all-zero net against constant targets") {
  model::MlpSpec spec;
  spec.layer_sizes = {2, 4, 1};
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(spec.param_count());
  model::Dataset data;
  data.inputs = Eigen::MatrixXd::Random(5, 2);
  data.targets = Eigen::MatrixXd::Constant(5, 1, 2.0);
  CHECK(model::mse_loss(spec, u, data) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("mse_loss matches a brute-force re-summation") {
  const auto inst = testutil::random_mlp_instance({3, 5, 2}, 7, 17);
  double total = 0.0;
  for (Eigen::Index r = 0; r < inst.data.size(); ++r) {
    const Eigen::VectorXd pred =
        model::predict(inst.spec, inst.u, inst.data.inputs.row(r).transpose());
    total += (pred - inst.data.targets.row(r).transpose()).squaredNorm();
  }
  total /= static_cast<double>(inst.data.size());
  CHECK(model::mse_loss(inst.spec, inst.u, inst.data) == doctest::Approx(total).epsilon(1e-13));
}

TEST_CASE("mse_loss field and direct evaluation agree") {
  const auto inst = testutil::random_mlp_instance({2, 8, 8, 1}, 10, 23);
  const model::MlpLossField field(inst.spec, inst.data);
  CHECK(ad::value(field, inst.u) ==
        doctest::Approx(model::mse_loss(inst.spec, inst.u, inst.data)).epsilon(1e-13));
}

TEST_CASE("mse_loss rejects an empty dataset") {
  model::MlpSpec spec;
  spec.layer_sizes = {2, 3, 1};
  model::Dataset data;
  data.inputs = Eigen::MatrixXd(0, 2);
  data.targets = Eigen::MatrixXd(0, 1);
  CHECK_THROWS_AS(model::mse_loss(spec, Eigen::VectorXd::Zero(spec.param_count()), data),
                  ContractError);
}

TEST_CASE("training_dynamics is the negative FD gradient of the loss") {
  // includes a net at the paper's synthetic scale (d = 1185)
  for (auto sizes : {std::vector<int>{2, 8, 1}, std::vector<int>{2, 32, 32, 1}}) {
    const auto inst = testutil::random_mlp_instance(sizes, 6, 29);
    const model::GradientFlow flow = model::training_dynamics(inst.spec, inst.data);
    const Eigen::VectorXd f = flow(inst.u);
    const model::MlpLossField field(inst.spec, inst.data);
    const Eigen::VectorXd fd = testutil::fd_grad(field, inst.u);
    CHECK(testutil::rel_elementwise(f, -fd) <= 1e-6);
  }
}

TEST_CASE("training_dynamics vanishes at a stationary point") {
  // Fitting the targets exactly is a global minimum of the MSE.
  model::MlpSpec spec;
  spec.layer_sizes = {1, 2, 1};
  spec.seed = 31;
  const Eigen::VectorXd u = model::init_params(spec);
  model::Dataset data;
  data.inputs = Eigen::MatrixXd::Random(4, 1);
  data.targets = model::predict_all(spec, u, data.inputs);
  const Eigen::VectorXd f = model::training_dynamics(spec, data)(u);
  CHECK(f.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("quadratic surrogate hook: f(u) = -u") {
  const auto hook = std::make_shared<ad::QuadraticField>(ad::QuadraticField::isotropic(3));
  const model::GradientFlow flow{hook};
  Eigen::VectorXd u(3);
  u << 1.0, -2.0, 0.5;
  CHECK((flow(u) + u).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("dynamics_hvp: quadratic hook gives -v and v=0 gives 0") {
  const ad::QuadraticField hook = ad::QuadraticField::isotropic(2);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd v(2);
  v << 3.0, -1.0;
  CHECK((-ad::hvp(hook, u, v) + v).cwiseAbs().maxCoeff() <= 1e-15);

  const auto inst = testutil::random_mlp_instance({2, 4, 1}, 3, 37);
  CHECK(model::dynamics_hvp(inst.spec, inst.data, inst.u, Eigen::VectorXd::Zero(inst.u.size()))
            .norm() == 0.0);
}

TEST_CASE("dynamics_hvp matches the negative FD-of-gradient oracle") {
  std::mt19937_64 rng(41);
  const auto inst = testutil::random_mlp_instance({2, 6, 6, 1}, 8, 43);
  const model::MlpLossField field(inst.spec, inst.data);
  const Eigen::VectorXd v = testutil::random_vector(inst.u.size(), rng);
  const Eigen::VectorXd exact = model::dynamics_hvp(inst.spec, inst.data, inst.u, v);
  const Eigen::VectorXd fd = testutil::fd_hvp(field, inst.u, v);
  CHECK(testutil::rel_l2(exact, -fd) <= 1e-5);
}

TEST_CASE("dynamics_hvp sign: v' H v = -|v|^2 on the quadratic hook") {
  const ad::QuadraticField hook = ad::QuadraticField::isotropic(4);
  std::mt19937_64 rng(47);
  const Eigen::VectorXd u = testutil::random_vector(4, rng);
  const Eigen::VectorXd v = testutil::random_vector(4, rng);
  const double quad_form = v.dot(-ad::hvp(hook, u, v));
  CHECK(quad_form == doctest::Approx(-v.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("spec validation rejects degenerate layer lists") {
  model::MlpSpec no_hidden;
  no_hidden.layer_sizes = {3, 1};
  CHECK_THROWS_AS(no_hidden.validate(), ContractError);

  model::MlpSpec zero_width;
  zero_width.layer_sizes = {3, 0, 1};
  CHECK_THROWS_AS(zero_width.validate(), ContractError);
}

TEST_CASE("predict rejects dimension mismatches") {
  model::MlpSpec spec;
  spec.layer_sizes = {2, 3, 1};
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(spec.param_count());
  CHECK_THROWS_AS(model::predict(spec, u, Eigen::VectorXd::Zero(3)), ContractError);
  CHECK_THROWS_AS(model::predict(spec, Eigen::VectorXd::Zero(5), Eigen::Vector2d(0, 0)),
                  ContractError);
}
