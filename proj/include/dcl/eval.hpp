#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dcl/optim.hpp"

namespace dcl {

// Embeddings are columns throughout (dim x count).

struct ProbeOptions {
  double l2 = 1e-4;
  bool bias = true;
  LbfgsOptions lbfgs{500, 1e-6, 10};
};

struct ProbeResult {
  double accuracy = 0.0;
  std::size_t labeled = 0;
  int resamples = 0;
  bool converged = true;
};

/// Softmax linear head trained on a random `label_fraction` of the training
/// pool (at least one example per class present in the pool; the subset is
/// redrawn up to 10 times before giving up), scored on the test set.
ProbeResult linear_probe(const Eigen::MatrixXd& train, std::span<const int> train_labels, const Eigen::MatrixXd& test,
                         std::span<const int> test_labels, int num_classes, double label_fraction, std::uint64_t seed,
                         const ProbeOptions& options = {});

/// Predicts argmax_c f(x)^T mu_c with mu_c the class mean of the training
/// embeddings (classes absent from the training set are never predicted).
double mean_classifier_accuracy(const Eigen::MatrixXd& train, std::span<const int> train_labels,
                                const Eigen::MatrixXd& test, std::span<const int> test_labels, int num_classes);

struct RetrievalReport {
  std::vector<int> ks;
  std::vector<double> recall_q2g;  // aligned with ks
  std::vector<double> recall_g2q;
  double medr_q2g = 0.0;
  double medr_g2q = 0.0;
  double avg_recall = 0.0;        // mean over ks and both directions
  std::vector<std::size_t> ranks_q2g;  // 1-based, one per evaluated query
  std::vector<std::size_t> ranks_g2q;
};

/// 1-based rank of `target` among `scores` sorted descending; equal scores
/// are ordered by index.
std::size_t rank_of(std::span<const double> scores, std::size_t target);

/// Query i is paired with gallery item pairing[i] (a bijection). Both
/// directions are scored; `subset` (query indices) restricts the evaluated
/// pairs, empty means all. Recall is a macro average over queries and MedR
/// the lower median.
RetrievalReport retrieval_metrics(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& gallery,
                                  std::span<const std::size_t> pairing, std::span<const int> ks,
                                  std::span<const std::size_t> subset = {});

struct PromptResult {
  double accuracy = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
};

/// Predicts "positive" iff s(image, positive prompt) > s(image, negative
/// prompt); ties go to negative.
PromptResult prompt_classify(const Eigen::MatrixXd& images, std::span<const bool> is_positive,
                             const Eigen::VectorXd& positive_prompt, const Eigen::VectorXd& negative_prompt);

struct Projection {
  Eigen::MatrixXd coords;  // count x 2
  double explained[2] = {0.0, 0.0};  // variance ratios of the two components
};

/// Top-2 principal components; each axis is signed so its largest-magnitude
/// loading is positive.
Projection project_2d(const Eigen::MatrixXd& embeddings);

void to_json(nlohmann::json& j, const RetrievalReport& r);

}  // namespace dcl
