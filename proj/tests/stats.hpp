// Rank statistics for the acceptance checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

namespace stats {

// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

// Spearman rho of y against its position 0, 1, ..., n-1.
inline double spearman_vs_index(const std::vector<double>& y) {
  std::vector<double> x(y.size());
  std::iota(x.begin(), x.end(), 0.0);
  return pearson(ranks(x), ranks(y));
}

struct PairedResult {
  double mean_rho = 0.0;
  double p = 1.0;
};

// rows[s] holds one metric per grid point (in increasing grid order) for
// seed s. Under the null every seed's ordering is an independent uniform
// permutation; the p-value of the summed rho is exact, one-sided in the
// direction of `sign`.
inline PairedResult paired_spearman(const std::vector<std::vector<double>>& rows, int sign) {
  PairedResult out;
  if (rows.empty()) return out;
  const std::size_t k = rows.front().size();
  double total = 0;
  for (const auto& r : rows) total += spearman_vs_index(r);
  out.mean_rho = total / static_cast<double>(rows.size());

  // Null distribution of one seed's rho (no ties under the null).
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::map<long long, double> one;
  const double scale = 1e9;
  do {
    std::vector<double> y(perm.begin(), perm.end());
    one[std::llround(spearman_vs_index(y) * scale)] += 1.0;
  } while (std::next_permutation(perm.begin(), perm.end()));
  double count = 0;
  for (auto& [v, c] : one) count += c;
  for (auto& [v, c] : one) c /= count;
  std::map<long long, double> dist{{0, 1.0}};
  for (std::size_t s = 0; s < rows.size(); ++s) {
    std::map<long long, double> next;
    for (const auto& [a, pa] : dist)
      for (const auto& [b, pb] : one) next[a + b] += pa * pb;
    dist.swap(next);
  }
  const long long obs = std::llround(total * scale);
  out.p = 0;
  for (const auto& [v, pv] : dist)
    if (sign > 0 ? v >= obs - 1000 : v <= obs + 1000) out.p += pv;
  return out;
}

}  // namespace stats
