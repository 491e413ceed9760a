#include <catch_amalgamated.hpp>

#include <cmath>

#include "gazemine/lstm.hpp"
#include "gazemine/rng.hpp"
#include "support.hpp"

using namespace gazemine;
using Eigen::MatrixXd;
using gazemine::testing::TempDir;

namespace {

MatrixXd random_window(Rng& rng, int rows, int cols) {
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

std::vector<MatrixXd> sinusoids(std::size_t count, int len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MatrixXd> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double phase = rng.uniform(0.0, 6.283185307179586);
    MatrixXd w(len, 2);
    for (int t = 0; t < len; ++t) {
      const double th = 6.283185307179586 * t / 8.0 + phase;
      w(t, 0) = std::sin(th) + rng.normal(0.0, 0.05);
      w(t, 1) = std::cos(th) + rng.normal(0.0, 0.05);
    }
    out.push_back(w);
  }
  return out;
}

struct Identity {
  std::size_t feature_dim() const { return 3; }
  MatrixXd reconstruct(const MatrixXd& w) const { return w; }
};

struct PlusOne {
  std::size_t feature_dim() const { return 3; }
  MatrixXd reconstruct(const MatrixXd& w) const { return w.array() + 1.0; }
};

}  // namespace

TEST_CASE("zero weights reconstruct zeros", "[lstm]") {
  const LstmModel m(3, 5);
  Rng rng(1);
  const MatrixXd w = random_window(rng, 7, 3);
  CHECK(m.reconstruct(w).isZero(0.0));
  CHECK(m.loss(w) == Catch::Approx(w.squaredNorm() / 21.0));
}

TEST_CASE("reconstruction error is MSE over cells", "[lstm]") {
  Rng rng(2);
  const MatrixXd w = random_window(rng, 5, 3);
  CHECK(reconstruction_error(Identity{}, w) == 0.0);
  CHECK(reconstruction_error(PlusOne{}, w) == Catch::Approx(1.0));
  CHECK_THROWS_AS(reconstruction_error(Identity{}, random_window(rng, 5, 4)), Error);
  CHECK_THROWS_AS(reconstruction_error(LstmModel(3, 2), MatrixXd(0, 3)), Error);
}

TEST_CASE("gradients match central differences on random small models", "[lstm][gradient]") {
  Rng rng(77);
  for (int trial = 0; trial < 6; ++trial) {
    const int hidden = static_cast<int>(rng.between(4, 8));
    const int len = static_cast<int>(rng.between(6, 12));
    const auto m = LstmModel::initialized(3, hidden, rng.next());
    const MatrixXd w = random_window(rng, len, 3);
    CHECK(gradient_check(m, w, 1e-5) < 1e-4);
  }
}

TEST_CASE("a forget-gate sign bug is caught", "[lstm][gradient]") {
  Rng rng(78);
  const auto m = LstmModel::initialized(3, 4, 9);
  const MatrixXd w = random_window(rng, 6, 3);
  CHECK(gradient_check(m, w, 1e-5, {.negate_forget_gate = true}) > 1e-2);
}

TEST_CASE("zero model on a zero window has zero gradient", "[lstm][gradient]") {
  const LstmModel m(2, 3);
  CHECK(gradient_check(m, MatrixXd::Zero(4, 2), 1e-5) == 0.0);
  LstmParams g;
  CHECK(m.loss_and_gradient(MatrixXd::Zero(4, 2), g) == 0.0);
  CHECK(g.out_w.isZero(0.0));
  CHECK(g.out_b.isZero(0.0));
}

TEST_CASE("training lowers the loss and is seed-deterministic", "[lstm][train]") {
  const auto data = sinusoids(8, 8, 3);
  TrainConfig cfg;
  cfg.hidden_dim = 8;
  cfg.epochs = 300;
  cfg.learning_rate = 0.05;
  std::vector<int> epochs_seen;
  const auto m = train(data, cfg, [&](int e, double) { epochs_seen.push_back(e); });
  REQUIRE(m.loss_history.size() == 301);
  CHECK(m.loss_history.back() < 0.5 * m.loss_history.front());
  CHECK(epochs_seen.size() == 300);
  CHECK(m.seed == cfg.seed);

  const auto again = train(data, cfg);
  CHECK(again.params() == m.params());
  CHECK(again.loss_history == m.loss_history);

  cfg.seed = 8;
  CHECK_FALSE(train(data, cfg).params() == m.params());
}

TEST_CASE("training rejects bad input", "[lstm][train]") {
  CHECK_THROWS_AS(train({}, {}), Error);
  TrainConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(sinusoids(2, 6, 1), bad), Error);
  std::vector<MatrixXd> mixed = {MatrixXd::Zero(4, 2), MatrixXd::Zero(4, 3)};
  CHECK_THROWS_AS(train(mixed, {}), Error);

  std::vector<MatrixXd> blowup = {MatrixXd::Constant(4, 2, std::numeric_limits<double>::infinity())};
  TrainConfig one;
  one.epochs = 2;
  try {
    train(blowup, one);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::training);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("normalizer fits expert data only and reports constant features", "[lstm][normalize]") {
  Rng rng(5);
  std::vector<MatrixXd> ws;
  for (int i = 0; i < 10; ++i) {
    MatrixXd w = random_window(rng, 8, 3);
    w.col(0).array() = w.col(0).array() * 50.0 + 300.0;
    ws.push_back(w);
  }
  const Normalizer n = fit_normalizer(ws);
  double sum = 0.0, sq = 0.0;
  for (const auto& w : ws) {
    const MatrixXd z = n.apply(w);
    sum += z.col(0).sum();
    sq += z.col(0).squaredNorm();
  }
  CHECK(std::abs(sum / 80.0) < 1e-9);
  CHECK(sq / 80.0 == Catch::Approx(1.0));
  // Unclipped outliers.
  MatrixXd outlier = ws[0];
  outlier(0, 0) = 5000.0;
  CHECK(n.apply(outlier)(0, 0) > 3.0);
  CHECK(Normalizer::from_json(n.to_json()) == n);

  std::vector<MatrixXd> constant = {MatrixXd::Constant(4, 2, 1.0)};
  constant[0](1, 0) = 2.0;
  try {
    fit_normalizer(constant, {"fix", "sacc"});
    FAIL("expected degenerate error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate);
    CHECK(std::string(e.what()).find("sacc") != std::string::npos);
  }
}

TEST_CASE("model persistence round-trips and locates corruption", "[lstm][persist]") {
  TrainConfig cfg;
  cfg.hidden_dim = 4;
  cfg.epochs = 2;
  auto m = train(sinusoids(4, 6, 2), cfg);
  m.normalizer = {{1.0, 2.0}, {0.5, 0.25}};
  TempDir dir("lstm");
  m.save(dir / "model.json");
  const auto back = LstmModel::load(dir / "model.json");
  CHECK(back == m);
  CHECK(back.reconstruct(sinusoids(1, 6, 9)[0]) == m.reconstruct(sinusoids(1, 6, 9)[0]));

  std::string text = read_text_file(dir / "model.json");
  write_text_file(dir / "trunc.json", text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(LstmModel::load(dir / "trunc.json"), LoadError);

  json j = json::parse(text);
  j["params"]["enc_w"]["rows"] = 3;
  write_text_file(dir / "shape.json", j.dump());
  try {
    LstmModel::load(dir / "shape.json");
    FAIL("expected load error");
  } catch (const LoadError& e) {
    CHECK(e.file().find("shape.json") != std::string::npos);
  }
}
