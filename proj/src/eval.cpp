#include "dcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dcl/error.hpp"
#include "dcl/rng.hpp"

namespace dcl {

namespace {

void check_labels(std::span<const int> labels, Eigen::Index cols, int num_classes, const char* what) {
  if (labels.size() != static_cast<std::size_t>(cols))
    fail(ErrorCode::kInvalidArgument, std::string(what) + ": one label per embedding column");
  for (int y : labels)
    if (y < 0 || y >= num_classes) fail(ErrorCode::kInvalidArgument, std::string(what) + ": label out of range");
}

double accuracy_of(std::span<const int> pred, std::span<const int> truth) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

ProbeResult linear_probe(const Eigen::MatrixXd& train, std::span<const int> train_labels, const Eigen::MatrixXd& test,
                         std::span<const int> test_labels, int num_classes, double label_fraction, std::uint64_t seed,
                         const ProbeOptions& options) {
  require(label_fraction > 0.0 && label_fraction <= 1.0, "linear_probe: label_fraction must lie in (0, 1]");
  require(num_classes >= 2, "linear_probe: need at least two classes");
  check_labels(train_labels, train.cols(), num_classes, "linear_probe");
  check_labels(test_labels, test.cols(), num_classes, "linear_probe");
  require(train.rows() == test.rows(), "linear_probe: train/test dimension mismatch");

  const auto n = static_cast<std::size_t>(train.cols());
  const std::set<int> pool_classes(train_labels.begin(), train_labels.end());
  if (pool_classes.size() < 2) fail(ErrorCode::kInvalidArgument, "linear_probe: fewer than two classes in the pool");
  const auto want = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(label_fraction * static_cast<double>(n))));

  ProbeResult res;
  std::vector<std::size_t> chosen;
  Rng rng(seed);
  for (int attempt = 0;; ++attempt) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(want);
    std::sort(idx.begin(), idx.end());
    std::set<int> seen;
    for (auto i : idx) seen.insert(train_labels[i]);
    if (seen == pool_classes) {
      chosen = std::move(idx);
      res.resamples = attempt;
      break;
    }
    if (attempt + 1 >= 10)
      fail(ErrorCode::kInvalidArgument, "linear_probe: labeled subset missed a class after 10 draws (raise the pool size or the label fraction)");
  }

  Eigen::MatrixXd x(train.rows(), static_cast<Eigen::Index>(chosen.size()));
  std::vector<int> y(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = train.col(static_cast<Eigen::Index>(chosen[i]));
    y[i] = train_labels[chosen[i]];
  }
  SoftmaxProblem p;
  p.x = &x;
  p.labels = y;
  p.num_classes = num_classes;
  p.bias = options.bias;
  p.l2 = options.l2;
  const SoftmaxFit fit = fit_softmax(p, {}, options.lbfgs);
  const auto pred = softmax_predict(fit, test);
  res.accuracy = accuracy_of(pred, test_labels);
  res.labeled = chosen.size();
  res.converged = fit.result.converged;
  return res;
}

double mean_classifier_accuracy(const Eigen::MatrixXd& train, std::span<const int> train_labels,
                                const Eigen::MatrixXd& test, std::span<const int> test_labels, int num_classes) {
  check_labels(train_labels, train.cols(), num_classes, "mean_classifier_accuracy");
  check_labels(test_labels, test.cols(), num_classes, "mean_classifier_accuracy");
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(train.rows(), num_classes);
  std::vector<double> count(static_cast<std::size_t>(num_classes), 0.0);
  for (Eigen::Index i = 0; i < train.cols(); ++i) {
    const int y = train_labels[static_cast<std::size_t>(i)];
    mu.col(y) += train.col(i);
    count[static_cast<std::size_t>(y)] += 1.0;
  }
  std::vector<int> pred(static_cast<std::size_t>(test.cols()));
  const Eigen::MatrixXd scores = mu.transpose() * test;
  for (Eigen::Index i = 0; i < test.cols(); ++i) {
    int best = -1;
    double best_s = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      if (count[static_cast<std::size_t>(c)] == 0.0) continue;
      const double s = scores(c, i) / count[static_cast<std::size_t>(c)];
      if (best < 0 || s > best_s) {
        best = c;
        best_s = s;
      }
    }
    pred[static_cast<std::size_t>(i)] = best;
  }
  return accuracy_of(pred, test_labels);
}

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  require(target < scores.size(), "rank_of: target out of range");
  const double st = scores[target];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (scores[j] > st || (scores[j] == st && j < target)) ++rank;
  return rank;
}

namespace {

double lower_median(std::vector<std::size_t> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return static_cast<double>(v[(v.size() - 1) / 2]);
}

}  // namespace

RetrievalReport retrieval_metrics(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& gallery,
                                  std::span<const std::size_t> pairing, std::span<const int> ks,
                                  std::span<const std::size_t> subset) {
  const auto nq = static_cast<std::size_t>(queries.cols());
  require(queries.rows() == gallery.rows(), "retrieval_metrics: dimension mismatch");
  require(static_cast<std::size_t>(gallery.cols()) == nq && pairing.size() == nq,
          "retrieval_metrics: pairing must be a bijection between equal-size sets");
  std::vector<std::size_t> inverse(nq, nq);
  for (std::size_t i = 0; i < nq; ++i) {
    require(pairing[i] < nq && inverse[pairing[i]] == nq, "retrieval_metrics: pairing is not a bijection");
    inverse[pairing[i]] = i;
  }
  std::vector<std::size_t> eval;
  if (subset.empty()) {
    eval.resize(nq);
    std::iota(eval.begin(), eval.end(), 0);
  } else {
    eval.assign(subset.begin(), subset.end());
    for (auto q : eval) require(q < nq, "retrieval_metrics: subset index out of range");
  }
  require(!eval.empty(), "retrieval_metrics: no queries");

  const Eigen::MatrixXd s = queries.transpose() * gallery;  // nq x ng
  RetrievalReport r;
  r.ks.assign(ks.begin(), ks.end());
  std::vector<double> row(nq);
  for (auto q : eval) {
    for (std::size_t j = 0; j < nq; ++j) row[j] = s(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(j));
    r.ranks_q2g.push_back(rank_of(row, pairing[q]));
    const std::size_t g = pairing[q];
    for (std::size_t j = 0; j < nq; ++j) row[j] = s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(g));
    r.ranks_g2q.push_back(rank_of(row, q));
  }
  auto recall = [&](const std::vector<std::size_t>& ranks, int k) {
    std::size_t hit = 0;
    for (auto rk : ranks) hit += rk <= static_cast<std::size_t>(std::max(k, 0));
    return static_cast<double>(hit) / static_cast<double>(ranks.size());
  };
  double sum = 0.0;
  for (int k : r.ks) {
    r.recall_q2g.push_back(recall(r.ranks_q2g, k));
    r.recall_g2q.push_back(recall(r.ranks_g2q, k));
    sum += r.recall_q2g.back() + r.recall_g2q.back();
  }
  r.avg_recall = r.ks.empty() ? 0.0 : sum / (2.0 * static_cast<double>(r.ks.size()));
  r.medr_q2g = lower_median(r.ranks_q2g);
  r.medr_g2q = lower_median(r.ranks_g2q);
  return r;
}

PromptResult prompt_classify(const Eigen::MatrixXd& images, std::span<const bool> is_positive,
                             const Eigen::VectorXd& positive_prompt, const Eigen::VectorXd& negative_prompt) {
  require(static_cast<std::size_t>(images.cols()) == is_positive.size(), "prompt_classify: one label per image");
  if (positive_prompt.size() == 0 || negative_prompt.size() == 0)
    fail(ErrorCode::kMissingInput, "prompt_classify: missing prompt embedding");
  require(positive_prompt.size() == images.rows() && negative_prompt.size() == images.rows(),
          "prompt_classify: prompt dimension mismatch");
  PromptResult r;
  r.count = is_positive.size();
  require(r.count > 0, "prompt_classify: no images");
  const Eigen::VectorXd sp = images.transpose() * positive_prompt;
  const Eigen::VectorXd sn = images.transpose() * negative_prompt;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < r.count; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const bool pred = sp[ii] > sn[ii];
    hit += pred == is_positive[i];
  }
  r.accuracy = static_cast<double>(hit) / static_cast<double>(r.count);
  r.stderr_ = std::sqrt(r.accuracy * (1.0 - r.accuracy) / static_cast<double>(r.count));
  return r;
}

Projection project_2d(const Eigen::MatrixXd& emb) {
  if (emb.cols() < 2) fail(ErrorCode::kInvalidArgument, "project_2d: need at least two samples");
  if (emb.rows() < 2) fail(ErrorCode::kInvalidArgument, "project_2d: need at least two dimensions");
  const Eigen::VectorXd mean = emb.rowwise().mean();
  const Eigen::MatrixXd centered = emb.colwise() - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(emb.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) fail(ErrorCode::kNumeric, "project_2d: eigendecomposition failed");
  const Eigen::Index d = cov.rows();
  const double total = std::max(es.eigenvalues().sum(), 0.0);
  Projection p;
  Eigen::MatrixXd axes(d, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);  // eigenvalues ascend
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    axes.col(k) = v;
    const double lambda = std::max(es.eigenvalues()[d - 1 - k], 0.0);
    p.explained[k] = total > 0.0 ? lambda / total : 0.0;
  }
  p.coords = centered.transpose() * axes;
  return p;
}

void to_json(nlohmann::json& j, const RetrievalReport& r) {
  j = {{"ks", r.ks},
       {"recall_q2g", r.recall_q2g},
       {"recall_g2q", r.recall_g2q},
       {"medr_q2g", r.medr_q2g},
       {"medr_g2q", r.medr_g2q},
       {"avg_recall", r.avg_recall},
       {"averaging", "macro over queries"}};
}

}  // namespace dcl
