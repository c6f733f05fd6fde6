#include "dcl/optim.hpp"

#include <cmath>
#include <deque>
#include <numbers>

#include "dcl/error.hpp"

namespace dcl {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  fail(ErrorCode::kConfig, "unknown optimizer '" + s + "'");
}

Optimizer::Optimizer(const OptimizerConfig& config, std::size_t size, std::vector<bool> decay_mask)
    : config_(config), mask_(std::move(decay_mask)), m_(size, 0.0), v_(size, 0.0) {
  if (mask_.empty()) mask_.assign(size, true);
  require(mask_.size() == size, "optimizer: decay mask size mismatch");
  if (!(config.lr >= 0.0) || !(config.weight_decay >= 0.0))
    fail(ErrorCode::kConfig, "learning rate and weight decay must be nonnegative");
}

void Optimizer::step(std::span<double> params, std::span<const double> grad, double lr_scale) {
  require(params.size() == m_.size() && grad.size() == m_.size(), "optimizer: size mismatch");
  ++t_;
  const double lr = config_.lr * lr_scale;
  // lr == 0 must leave parameters untouched bit for bit.
  if (lr == 0.0) {
    if (config_.kind == OptimizerKind::kAdam)
      for (std::size_t i = 0; i < m_.size(); ++i) {
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      }
    return;
  }
  if (config_.kind == OptimizerKind::kAdam) {
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      if (mask_[i]) params[i] -= lr * config_.weight_decay * params[i];
      params[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  } else {
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = config_.momentum * m_[i] + grad[i];
      if (mask_[i]) params[i] -= lr * config_.weight_decay * params[i];
      params[i] -= lr * m_[i];
    }
  }
}

double cosine_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps) {
  if (step < warmup_steps) return static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return 1.0;
  const double p = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(p, 1.0)));
}

// --- L-BFGS -------------------------------------------------------------------

LbfgsResult minimize_lbfgs(const SmoothFn& f, std::vector<double>& x, const LbfgsOptions& options) {
  using Vec = Eigen::VectorXd;
  const auto n = static_cast<Eigen::Index>(x.size());
  Vec xv = Eigen::Map<Vec>(x.data(), n);
  Vec g(n), g_new(n), x_new(n);
  auto eval = [&](const Vec& at, Vec& grad) {
    return f(std::span<const double>(at.data(), static_cast<std::size_t>(n)),
             std::span<double>(grad.data(), static_cast<std::size_t>(n)));
  };

  LbfgsResult res;
  double fx = eval(xv, g);
  if (!std::isfinite(fx)) fail(ErrorCode::kNumeric, "L-BFGS: non-finite objective at the starting point");
  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    res.grad_norm = g.norm();
    if (res.grad_norm <= options.grad_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Vec q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vec dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double t = s_hist.empty() ? std::min(1.0, 1.0 / res.grad_norm) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = xv + t * dir;
      f_new = eval(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    Vec s = x_new - xv;
    Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const bool stalled = fx - f_new <= 1e-16 * std::max(1.0, std::abs(fx));
    xv = x_new;
    g = g_new;
    fx = f_new;
    if (stalled) {
      res.grad_norm = g.norm();
      res.converged = res.grad_norm <= options.grad_tol;
      ++res.iterations;
      break;
    }
  }
  if (res.iterations >= options.max_iterations) {
    res.grad_norm = g.norm();
    res.converged = res.grad_norm <= options.grad_tol;
  }
  res.value = fx;
  Eigen::Map<Vec>(x.data(), n) = xv;
  return res;
}

// --- softmax regression ----------------------------------------------------------

double softmax_objective(const SoftmaxProblem& p, const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                         Eigen::MatrixXd* dw, Eigen::VectorXd* db) {
  const auto& x = *p.x;
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd logits = w * x;
  if (p.bias) logits.colwise() += b;
  double total_w = 0.0;
  double loss = 0.0;
  if (dw) dw->setZero(w.rows(), w.cols());
  if (db) db->setZero(w.rows());
  Eigen::MatrixXd coef(w.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = p.weights.empty() ? 1.0 : p.weights[static_cast<std::size_t>(i)];
    total_w += wi;
    auto col = logits.col(i);
    const double m = col.maxCoeff();
    Eigen::VectorXd e = (col.array() - m).exp();
    const double z = e.sum();
    const int y = p.labels[static_cast<std::size_t>(i)];
    loss += wi * (std::log(z) + m - col[y]);
    e /= z;
    e[y] -= 1.0;
    coef.col(i) = wi * e;
  }
  require(total_w > 0.0, "softmax objective: total sample weight must be positive");
  loss /= total_w;
  loss += 0.5 * p.l2 * w.squaredNorm();
  if (dw) *dw = coef * x.transpose() / total_w + p.l2 * w;
  if (db && p.bias) *db = coef.rowwise().sum() / total_w;
  return loss;
}

SoftmaxFit fit_softmax(const SoftmaxProblem& p, const Eigen::MatrixXd& w0, const LbfgsOptions& options) {
  require(p.x != nullptr && p.num_classes >= 1, "fit_softmax: missing features or classes");
  require(p.labels.size() == static_cast<std::size_t>(p.x->cols()), "fit_softmax: one label per column");
  const Eigen::Index k = p.num_classes;
  const Eigen::Index d = p.x->rows();
  const Eigen::Index nw = k * d;
  const Eigen::Index nb = p.bias ? k : 0;
  std::vector<double> theta(static_cast<std::size_t>(nw + nb), 0.0);
  if (w0.size() > 0) {
    require(w0.rows() == k && w0.cols() == d, "fit_softmax: initial weights have the wrong shape");
    Eigen::Map<Eigen::MatrixXd>(theta.data(), k, d) = w0;
  }
  Eigen::MatrixXd dw;
  Eigen::VectorXd db;
  auto fn = [&](std::span<const double> t, std::span<double> g) {
    const Eigen::Map<const Eigen::MatrixXd> w(t.data(), k, d);
    const Eigen::Map<const Eigen::VectorXd> b(t.data() + nw, nb);
    const double v = softmax_objective(p, w, b, &dw, &db);
    Eigen::Map<Eigen::MatrixXd>(g.data(), k, d) = dw;
    if (nb) Eigen::Map<Eigen::VectorXd>(g.data() + nw, nb) = db;
    return v;
  };
  SoftmaxFit fit;
  fit.result = minimize_lbfgs(fn, theta, options);
  fit.w = Eigen::Map<Eigen::MatrixXd>(theta.data(), k, d);
  if (nb) fit.b = Eigen::Map<Eigen::VectorXd>(theta.data() + nw, nb);
  return fit;
}

std::vector<int> softmax_predict(const SoftmaxFit& fit, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd logits = fit.w * x;
  if (fit.b.size() > 0) logits.colwise() += fit.b;
  std::vector<int> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    Eigen::Index best = 0;
    logits.col(i).maxCoeff(&best);  // first maximum on ties
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace dcl
