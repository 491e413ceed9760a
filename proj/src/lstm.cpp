#include "gazemine/lstm.hpp"

#include <algorithm>
#include <cmath>

#include "gazemine/rng.hpp"

namespace gazemine {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Normalizer

MatrixXd Normalizer::apply(const MatrixXd& window) const {
  if (static_cast<std::size_t>(window.cols()) != mean.size())
    throw Error(ErrorKind::shape, "normalizer fitted on " + std::to_string(mean.size()) + " features, window has " +
                                      std::to_string(window.cols()));
  MatrixXd out = window;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = (out.col(j).array() - mean[j]) / stddev[j];
  return out;
}

json Normalizer::to_json() const { return {{"mean", mean}, {"std", stddev}}; }

Normalizer Normalizer::from_json(const json& j) {
  Normalizer n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.stddev = j.at("std").get<std::vector<double>>();
  if (n.mean.size() != n.stddev.size()) throw Error(ErrorKind::shape, "normalizer mean/std length mismatch");
  for (double s : n.stddev)
    if (!(s > 0.0)) throw Error(ErrorKind::validation, "normalizer std must be positive");
  return n;
}

Normalizer fit_normalizer(const std::vector<MatrixXd>& windows, const std::vector<std::string>& feature_names) {
  if (windows.empty()) throw Error(ErrorKind::empty_input, "no windows to fit the normalizer on");
  const auto d = static_cast<std::size_t>(windows.front().cols());
  std::vector<double> sum(d, 0.0);
  std::size_t rows = 0;
  for (const auto& w : windows) {
    if (static_cast<std::size_t>(w.cols()) != d) throw Error(ErrorKind::shape, "windows differ in feature count");
    for (Eigen::Index j = 0; j < w.cols(); ++j) sum[j] += w.col(j).sum();
    rows += static_cast<std::size_t>(w.rows());
  }
  Normalizer n;
  n.mean.resize(d);
  n.stddev.resize(d);
  for (std::size_t j = 0; j < d; ++j) n.mean[j] = sum[j] / static_cast<double>(rows);
  std::vector<double> sq(d, 0.0);
  for (const auto& w : windows)
    for (Eigen::Index j = 0; j < w.cols(); ++j) sq[j] += (w.col(j).array() - n.mean[j]).square().sum();
  for (std::size_t j = 0; j < d; ++j) {
    n.stddev[j] = std::sqrt(sq[j] / static_cast<double>(rows));
    if (!(n.stddev[j] > 1e-12)) {
      const std::string name = j < feature_names.size() ? feature_names[j] : "feature " + std::to_string(j);
      throw Error(ErrorKind::degenerate, "zero variance in " + name + " across the training windows");
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// Parameters

LstmParams LstmParams::zeros(int d, int h) {
  LstmParams p;
  p.enc_w = MatrixXd::Zero(4 * h, d);
  p.enc_u = MatrixXd::Zero(4 * h, h);
  p.enc_b = VectorXd::Zero(4 * h);
  p.dec_w = MatrixXd::Zero(4 * h, h);
  p.dec_u = MatrixXd::Zero(4 * h, h);
  p.dec_b = VectorXd::Zero(4 * h);
  p.out_w = MatrixXd::Zero(d, h);
  p.out_b = VectorXd::Zero(d);
  return p;
}

std::vector<std::pair<double*, std::size_t>> LstmParams::blocks() {
  auto b = [](auto& m) { return std::make_pair(m.data(), static_cast<std::size_t>(m.size())); };
  return {b(enc_w), b(enc_u), b(enc_b), b(dec_w), b(dec_u), b(dec_b), b(out_w), b(out_b)};
}

std::size_t LstmParams::size() const {
  return static_cast<std::size_t>(enc_w.size() + enc_u.size() + enc_b.size() + dec_w.size() + dec_u.size() +
                                  dec_b.size() + out_w.size() + out_b.size());
}

bool LstmParams::operator==(const LstmParams& o) const {
  auto eq = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
  };
  return eq(enc_w, o.enc_w) && eq(enc_u, o.enc_u) && eq(enc_b, o.enc_b) && eq(dec_w, o.dec_w) &&
         eq(dec_u, o.dec_u) && eq(dec_b, o.dec_b) && eq(out_w, o.out_w) && eq(out_b, o.out_b);
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct StepCache {
  VectorXd h_prev, c_prev, i, f, g, o, c, tc, h;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void lstm_step(const MatrixXd& w, const MatrixXd& u, const VectorXd& b, const VectorXd& x, StepCache& s) {
  const Eigen::Index h = u.cols();
  const VectorXd z = w * x + u * s.h_prev + b;
  s.i = z.segment(0, h).unaryExpr(&sigmoid);
  s.f = z.segment(h, h).unaryExpr(&sigmoid);
  s.g = z.segment(2 * h, h).array().tanh();
  s.o = z.segment(3 * h, h).unaryExpr(&sigmoid);
  s.c = s.f.cwiseProduct(s.c_prev) + s.i.cwiseProduct(s.g);
  s.tc = s.c.array().tanh();
  s.h = s.o.cwiseProduct(s.tc);
}

struct Trace {
  std::vector<StepCache> enc, dec;
  MatrixXd y;  // T x D
};

Trace forward(const LstmParams& p, const MatrixXd& x) {
  const Eigen::Index t_len = x.rows();
  const Eigen::Index h = p.enc_u.cols();
  Trace tr;
  tr.enc.resize(t_len);
  tr.dec.resize(t_len);
  VectorXd hp = VectorXd::Zero(h), cp = VectorXd::Zero(h);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    auto& s = tr.enc[t];
    s.h_prev = hp;
    s.c_prev = cp;
    lstm_step(p.enc_w, p.enc_u, p.enc_b, x.row(t).transpose(), s);
    hp = s.h;
    cp = s.c;
  }
  const VectorXd summary = hp;
  tr.y.resize(t_len, x.cols());
  for (Eigen::Index t = 0; t < t_len; ++t) {
    auto& s = tr.dec[t];
    s.h_prev = hp;
    s.c_prev = cp;
    lstm_step(p.dec_w, p.dec_u, p.dec_b, summary, s);
    hp = s.h;
    cp = s.c;
    tr.y.row(t) = (p.out_w * s.h + p.out_b).transpose();
  }
  return tr;
}

// Backward through one step. Accumulates weight gradients, returns dz and
// updates dh/dc to the previous step's values.
VectorXd lstm_step_back(const StepCache& s, VectorXd& dh, VectorXd& dc, const MatrixXd& u, bool negate_forget) {
  const Eigen::Index h = u.cols();
  dc += dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tc.array().square()).matrix());
  const VectorXd d_o = dh.cwiseProduct(s.tc);
  const VectorXd d_i = dc.cwiseProduct(s.g);
  const VectorXd d_g = dc.cwiseProduct(s.i);
  VectorXd d_f = dc.cwiseProduct(s.c_prev);
  if (negate_forget) d_f = -d_f;
  VectorXd dz(4 * h);
  dz.segment(0, h) = d_i.array() * s.i.array() * (1.0 - s.i.array());
  dz.segment(h, h) = d_f.array() * s.f.array() * (1.0 - s.f.array());
  dz.segment(2 * h, h) = d_g.array() * (1.0 - s.g.array().square());
  dz.segment(3 * h, h) = d_o.array() * s.o.array() * (1.0 - s.o.array());
  dh = u.transpose() * dz;
  dc = dc.cwiseProduct(s.f);
  return dz;
}

}  // namespace

LstmModel::LstmModel(int input_dim, int hidden_dim)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), params_(LstmParams::zeros(input_dim, hidden_dim)) {
  if (input_dim < 1 || hidden_dim < 1) throw Error(ErrorKind::validation, "model dimensions must be positive");
}

LstmModel LstmModel::initialized(int input_dim, int hidden_dim, std::uint64_t seed) {
  LstmModel m(input_dim, hidden_dim);
  m.seed = seed;
  Rng rng(seed);
  for (auto [ptr, n] : m.params_.blocks())
    for (std::size_t k = 0; k < n; ++k) ptr[k] = rng.uniform(-0.08, 0.08);
  m.params_.enc_b.segment(hidden_dim, hidden_dim).setOnes();
  m.params_.dec_b.segment(hidden_dim, hidden_dim).setOnes();
  return m;
}

MatrixXd LstmModel::reconstruct(const MatrixXd& window) const {
  if (window.cols() != input_dim_)
    throw Error(ErrorKind::shape, "window has " + std::to_string(window.cols()) + " features, model expects " +
                                      std::to_string(input_dim_));
  return forward(params_, window).y;
}

double LstmModel::loss(const MatrixXd& window) const { return reconstruction_error(*this, window); }

double LstmModel::loss_and_gradient(const MatrixXd& x, LstmParams& grad, const BackpropMutation& mutation) const {
  if (x.cols() != input_dim_ || x.rows() == 0)
    throw Error(ErrorKind::shape, "window shape does not match the model");
  const Trace tr = forward(params_, x);
  const Eigen::Index t_len = x.rows();
  const auto h = static_cast<Eigen::Index>(hidden_dim_);
  const double scale = 2.0 / static_cast<double>(x.size());
  const MatrixXd diff = tr.y - x;

  grad = LstmParams::zeros(input_dim_, hidden_dim_);
  const VectorXd summary = tr.enc.back().h;
  VectorXd dh = VectorXd::Zero(h), dc = VectorXd::Zero(h), dsummary = VectorXd::Zero(h);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const auto& s = tr.dec[t];
    const VectorXd dy = scale * diff.row(t).transpose();
    grad.out_w.noalias() += dy * s.h.transpose();
    grad.out_b += dy;
    dh.noalias() += params_.out_w.transpose() * dy;
    const VectorXd dz = lstm_step_back(s, dh, dc, params_.dec_u, mutation.negate_forget_gate);
    grad.dec_w.noalias() += dz * summary.transpose();
    grad.dec_u.noalias() += dz * s.h_prev.transpose();
    grad.dec_b += dz;
    dsummary.noalias() += params_.dec_w.transpose() * dz;
  }
  // The decoder's initial hidden state is also the summary.
  dh += dsummary;
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const auto& s = tr.enc[t];
    const VectorXd dz = lstm_step_back(s, dh, dc, params_.enc_u, mutation.negate_forget_gate);
    grad.enc_w.noalias() += dz * x.row(t);
    grad.enc_u.noalias() += dz * s.h_prev.transpose();
    grad.enc_b += dz;
  }
  return diff.squaredNorm() / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------
// Training

namespace {

double mean_loss(const LstmModel& m, const std::vector<MatrixXd>& windows) {
  double sum = 0.0;
  for (const auto& w : windows) sum += m.loss(w);
  return sum / static_cast<double>(windows.size());
}

}  // namespace

LstmModel train(const std::vector<MatrixXd>& windows, const TrainConfig& cfg,
                const std::function<void(int, double)>& on_epoch) {
  if (windows.empty()) throw Error(ErrorKind::empty_input, "no training windows");
  if (cfg.hidden_dim < 1 || cfg.epochs < 1 || !(cfg.learning_rate > 0.0) || !(cfg.clip_norm > 0.0))
    throw Error(ErrorKind::validation, "training hyperparameters must be positive");
  const auto d = static_cast<int>(windows.front().cols());
  for (const auto& w : windows)
    if (w.cols() != d) throw Error(ErrorKind::shape, "training windows differ in feature count");

  LstmModel m = LstmModel::initialized(d, cfg.hidden_dim, cfg.seed);
  m.loss_history.push_back(mean_loss(m, windows));
  LstmParams grad;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& w : windows) {
      m.loss_and_gradient(w, grad);
      double sq = 0.0;
      for (auto [ptr, n] : grad.blocks())
        for (std::size_t k = 0; k < n; ++k) sq += ptr[k] * ptr[k];
      const double norm = std::sqrt(sq);
      const double step = norm > cfg.clip_norm ? cfg.learning_rate * cfg.clip_norm / norm : cfg.learning_rate;
      auto pb = m.params().blocks();
      auto gb = grad.blocks();
      for (std::size_t b = 0; b < pb.size(); ++b)
        for (std::size_t k = 0; k < pb[b].second; ++k) pb[b].first[k] -= step * gb[b].first[k];
    }
    const double loss = mean_loss(m, windows);
    if (!std::isfinite(loss))
      throw Error(ErrorKind::training, "training diverged at epoch " + std::to_string(epoch));
    m.loss_history.push_back(loss);
    if (on_epoch) on_epoch(epoch, loss);
  }
  return m;
}

double gradient_check(const LstmModel& model, const MatrixXd& window, double epsilon,
                      const BackpropMutation& mutation) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
    throw Error(ErrorKind::domain, "gradient check epsilon must be in [1e-7, 1e-3]");
  LstmParams grad;
  model.loss_and_gradient(window, grad, mutation);
  LstmModel probe = model;
  auto pb = probe.params().blocks();
  auto gb = grad.blocks();
  double worst = 0.0;
  for (std::size_t b = 0; b < pb.size(); ++b) {
    for (std::size_t k = 0; k < pb[b].second; ++k) {
      double& p = pb[b].first[k];
      const double saved = p;
      p = saved + epsilon;
      const double up = probe.loss(window);
      p = saved - epsilon;
      const double down = probe.loss(window);
      p = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = gb[b].first[k];
      const double diff = std::abs(analytic - numeric);
      if (diff == 0.0) continue;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
      worst = std::max(worst, diff / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json matrix_to_json(const MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (r != rows || c != cols || static_cast<Eigen::Index>(data.size()) != r * c)
    throw Error(ErrorKind::shape, "parameter " + name + " has shape " + std::to_string(r) + "x" +
                                      std::to_string(c) + ", expected " + std::to_string(rows) + "x" +
                                      std::to_string(cols));
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = data[static_cast<std::size_t>(i * c + k)];
  return m;
}

}  // namespace

json LstmModel::to_json() const {
  const auto& p = params_;
  return {{"format", "gazemine-lstm"},
          {"version", 1},
          {"input_dim", input_dim_},
          {"hidden_dim", hidden_dim_},
          {"gate_order", {"input", "forget", "cell", "output"}},
          {"seed", seed},
          {"normalizer", normalizer.to_json()},
          {"loss_history", loss_history},
          {"params",
           {{"enc_w", matrix_to_json(p.enc_w)},
            {"enc_u", matrix_to_json(p.enc_u)},
            {"enc_b", matrix_to_json(p.enc_b)},
            {"dec_w", matrix_to_json(p.dec_w)},
            {"dec_u", matrix_to_json(p.dec_u)},
            {"dec_b", matrix_to_json(p.dec_b)},
            {"out_w", matrix_to_json(p.out_w)},
            {"out_b", matrix_to_json(p.out_b)}}}};
}

LstmModel LstmModel::from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "gazemine-lstm")
      throw Error(ErrorKind::validation, "not an LSTM model file");
    if (j.at("version").get<int>() != 1) throw Error(ErrorKind::validation, "unsupported model version");
    const int d = j.at("input_dim").get<int>();
    const int h = j.at("hidden_dim").get<int>();
    LstmModel m(d, h);
    m.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("normalizer").at("mean").empty()) m.normalizer = Normalizer::from_json(j.at("normalizer"));
    m.loss_history = j.at("loss_history").get<std::vector<double>>();
    const auto& p = j.at("params");
    auto& q = m.params_;
    q.enc_w = matrix_from_json(p.at("enc_w"), 4 * h, d, "enc_w");
    q.enc_u = matrix_from_json(p.at("enc_u"), 4 * h, h, "enc_u");
    q.enc_b = matrix_from_json(p.at("enc_b"), 4 * h, 1, "enc_b");
    q.dec_w = matrix_from_json(p.at("dec_w"), 4 * h, h, "dec_w");
    q.dec_u = matrix_from_json(p.at("dec_u"), 4 * h, h, "dec_u");
    q.dec_b = matrix_from_json(p.at("dec_b"), 4 * h, 1, "dec_b");
    q.out_w = matrix_from_json(p.at("out_w"), d, h, "out_w");
    q.out_b = matrix_from_json(p.at("out_b"), d, 1, "out_b");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, std::string("model file: ") + e.what());
  }
}

void LstmModel::save(const std::filesystem::path& path) const { write_text_file(path, canonical_dump(to_json()) + "\n"); }

LstmModel LstmModel::load(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return from_json(j);
  } catch (const Error& e) {
    throw LoadError(path.string(), 0, 0, e.what());
  }
}

bool LstmModel::operator==(const LstmModel& o) const {
  return input_dim_ == o.input_dim_ && hidden_dim_ == o.hidden_dim_ && params_ == o.params_ &&
         normalizer == o.normalizer && seed == o.seed && loss_history == o.loss_history;
}

}  // namespace gazemine
