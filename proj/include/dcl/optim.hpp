#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dcl {

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double weight_decay = 1e-6;  // decoupled, applied only where the decay mask is set
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.0;  // sgd only
};

/// Adam with bias correction, or SGD with optional momentum; weight decay is
/// decoupled (AdamW style) in both.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::size_t size, std::vector<bool> decay_mask);
  void step(std::span<double> params, std::span<const double> grad, double lr_scale = 1.0);
  std::size_t steps() const noexcept { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<bool> mask_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Multiplier for the base learning rate: linear warmup, then cosine decay to 0.
double cosine_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps);

// --- deterministic full-batch minimisation -----------------------------------

/// Returns f(x) and writes the gradient into `grad`.
using SmoothFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
  int max_iterations = 2000;
  double grad_tol = 1e-8;  // on the Euclidean gradient norm
  int history = 10;
};

struct LbfgsResult {
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// L-BFGS with a backtracking Armijo line search. `x` is updated in place.
LbfgsResult minimize_lbfgs(const SmoothFn& f, std::vector<double>& x, const LbfgsOptions& options = {});

// --- softmax regression on fixed features ------------------------------------

/// Weighted mean cross-entropy of logits W x + b over the columns of `x`,
/// plus 0.5 * l2 * ||W||^2. `weights` may be empty (uniform).
struct SoftmaxProblem {
  const Eigen::MatrixXd* x = nullptr;  // d x n
  std::span<const int> labels;         // values in [0, num_classes)
  std::span<const double> weights;
  int num_classes = 0;
  bool bias = true;
  double l2 = 0.0;
};

struct SoftmaxFit {
  Eigen::MatrixXd w;  // num_classes x d
  Eigen::VectorXd b;  // empty when bias is off
  LbfgsResult result;
};

double softmax_objective(const SoftmaxProblem& p, const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                         Eigen::MatrixXd* dw, Eigen::VectorXd* db);
/// Starts from `w0` (zeros when empty).
SoftmaxFit fit_softmax(const SoftmaxProblem& p, const Eigen::MatrixXd& w0 = {}, const LbfgsOptions& options = {});
/// argmax_k (W x + b)_k per column; ties go to the lower class index.
std::vector<int> softmax_predict(const SoftmaxFit& fit, const Eigen::MatrixXd& x);

}  // namespace dcl
