#include "prosody/eval.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/fisher_f.hpp>

#include "prosody/error.hpp"

namespace prosody::eval {

double rmse(const Sequence& a, const Sequence& b) {
  if (a.size() != b.size()) {
    fail("rmse: lengths differ (", a.size(), " vs ", b.size(), ")");
  }
  if (a.empty()) fail("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

double pcc(const Sequence& a, const Sequence& b) {
  if (a.size() != b.size()) {
    fail("pcc: lengths differ (", a.size(), " vs ", b.size(), ")");
  }
  if (a.size() < 2) fail("pcc: need at least 2 points");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) fail("pcc: zero-variance input");
  return cov / std::sqrt(va * vb);
}

DtwResult dtw(const Sequence& a, const Sequence& b) {
  if (a.empty() || b.empty()) fail("dtw: empty input");
  const std::size_t n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> acc(n * m, inf);
  auto cost = [&](std::size_t i, std::size_t j) { return std::abs(a[i] - b[j]); };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double best = 0.0;
      if (i > 0 && j > 0) {
        best = std::min({acc[(i - 1) * m + (j - 1)], acc[(i - 1) * m + j],
                         acc[i * m + (j - 1)]});
      } else if (i > 0) {
        best = acc[(i - 1) * m + j];
      } else if (j > 0) {
        best = acc[i * m + (j - 1)];
      }
      acc[i * m + j] = cost(i, j) + best;
    }
  }

  WarpPath path;
  std::size_t i = n - 1, j = m - 1;
  path.points.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = acc[(i - 1) * m + (j - 1)];
      const double up = acc[(i - 1) * m + j];
      const double left = acc[i * m + (j - 1)];
      const double best = std::min({diag, up, left});
      if (diag == best) {
        --i;
        --j;
      } else if (up == best) {
        --i;
      } else {
        --j;
      }
    }
    path.points.emplace_back(i, j);
  }
  std::reverse(path.points.begin(), path.points.end());
  return {acc[(n - 1) * m + (m - 1)], std::move(path)};
}

double frame_disturbance(const WarpPath& path, FdMode mode) {
  if (path.points.empty()) fail("frame_disturbance: empty path");
  double s = 0.0;
  for (const auto& [i, j] : path.points) {
    const double d = static_cast<double>(i) - static_cast<double>(j);
    s += d * d;
  }
  switch (mode) {
    case FdMode::rms:
      return std::sqrt(s / static_cast<double>(path.points.size()));
    case FdMode::mean_square:
      return s / static_cast<double>(path.points.size());
    case FdMode::sum_root:
      return std::sqrt(s);
  }
  fail("frame_disturbance: bad mode");
}

Sequence lengths_to_envelope(const Sequence& relative_lengths,
                             const Sequence& reference_durations,
                             double frame_rate) {
  if (!(frame_rate > 0.0)) fail("envelope: frame_rate must be > 0");
  if (relative_lengths.size() != reference_durations.size()) {
    fail("envelope: ", relative_lengths.size(), " lengths vs ",
         reference_durations.size(), " references");
  }
  Sequence out;
  for (std::size_t k = 0; k < relative_lengths.size(); ++k) {
    const double duration = reference_durations[k] * (1.0 + relative_lengths[k]);
    if (!(duration > 0.0)) {
      fail("envelope: word ", k, " has non-positive duration ", duration);
    }
    const auto frames =
        std::max<long long>(1, std::llround(frame_rate * duration));
    out.insert(out.end(), static_cast<std::size_t>(frames),
               static_cast<double>(k + 1));
  }
  return out;
}

Sequence mean_sequence(const std::vector<Sequence>& seqs) {
  if (seqs.empty()) fail("mean_sequence: empty set");
  Sequence mean(seqs[0].size(), 0.0);
  for (const Sequence& s : seqs) {
    if (s.size() != mean.size()) fail("mean_sequence: ragged lengths");
    for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s[i];
  }
  for (double& v : mean) v /= static_cast<double>(seqs.size());
  return mean;
}

double mse_to_population_mean(const GroupedSequences& generated,
                              const GroupedSequences& real) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [key, gen_seqs] : generated) {
    auto it = real.find(key);
    if (it == real.end()) {
      fail("mse_to_population_mean: no real data for sentence ", key.first,
           ", emotion ", corpus::to_string(key.second));
    }
    const Sequence mean = mean_sequence(it->second);
    for (const Sequence& g : gen_seqs) {
      if (g.size() != mean.size()) {
        fail("mse_to_population_mean: generated length ", g.size(),
             " vs real length ", mean.size(), " for sentence ", key.first);
      }
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = g[i] - mean[i];
        s += d * d;
      }
      total += s / static_cast<double>(g.size());
      ++count;
    }
  }
  if (count == 0) fail("mse_to_population_mean: no generated sequences");
  return total / static_cast<double>(count);
}

DistributionSummary distribution_summary(const std::vector<Sequence>& seqs) {
  if (seqs.empty()) fail("distribution_summary: empty set");
  DistributionSummary out;
  for (const Sequence& s : seqs) {
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.size());
    out.mean_variance.emplace_back(mean, var);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        out.pair_points[{i, j}].emplace_back(s[i], s[j]);
      }
    }
  }
  return out;
}

namespace {
struct GroupStats {
  std::vector<double> means;
  std::vector<std::size_t> sizes;
  double grand_mean = 0.0;
  std::size_t total = 0;
  double ssb = 0.0;
  double ssw = 0.0;
};

GroupStats group_stats(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) fail("anova: need at least 2 groups");
  GroupStats st;
  double grand_sum = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) fail("anova: empty group");
    double sum = 0.0;
    for (double v : g) sum += v;
    st.means.push_back(sum / static_cast<double>(g.size()));
    st.sizes.push_back(g.size());
    st.total += g.size();
    grand_sum += sum;
  }
  st.grand_mean = grand_sum / static_cast<double>(st.total);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const double d = st.means[k] - st.grand_mean;
    st.ssb += static_cast<double>(st.sizes[k]) * d * d;
    for (double v : groups[k]) {
      const double w = v - st.means[k];
      st.ssw += w * w;
    }
  }
  return st;
}
}  // namespace

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups,
                         double alpha) {
  const GroupStats st = group_stats(groups);
  const std::size_t k = groups.size();
  if (st.total <= k) fail("anova: no within-group degrees of freedom");
  AnovaResult res;
  res.df_between = k - 1;
  res.df_within = st.total - k;
  const double msb = st.ssb / static_cast<double>(res.df_between);
  const double msw = st.ssw / static_cast<double>(res.df_within);
  if (msw == 0.0) {
    // Degenerate corpora: identical constants give F = 0 by convention.
    res.f = msb == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    res.p_value = msb == 0.0 ? 1.0 : 0.0;
    res.significant = msb != 0.0;
    return res;
  }
  res.f = msb / msw;
  boost::math::fisher_f dist(static_cast<double>(res.df_between),
                             static_cast<double>(res.df_within));
  res.p_value = 1.0 - boost::math::cdf(dist, res.f);
  res.significant = res.p_value < alpha;
  return res;
}

namespace {

// Critical values of the studentized range distribution, q(1-alpha; k, df),
// for k = 2..10 at the usual df breakpoints.
struct QRow {
  double df;
  double q[9];
};

const QRow kQ05[] = {
    {2, {6.0849, 8.3308, 9.7980, 10.8811, 11.7343, 12.4349, 13.0273, 13.5390, 13.9885}},
    {3, {4.5007, 5.9096, 6.8245, 7.5017, 8.0371, 8.4783, 8.8525, 9.1766, 9.4620}},
    {4, {3.9265, 5.0402, 5.7571, 6.2870, 6.7064, 7.0526, 7.3465, 7.6015, 7.8263}},
    {5, {3.6354, 4.6017, 5.2183, 5.6731, 6.0329, 6.3299, 6.5823, 6.8014, 6.9947}},
    {6, {3.4605, 4.3392, 4.8956, 5.3049, 5.6284, 5.8953, 6.1222, 6.3192, 6.4931}},
    {7, {3.3441, 4.1649, 4.6813, 5.0601, 5.3591, 5.6057, 5.8153, 5.9973, 6.1579}},
    {8, {3.2612, 4.0410, 4.5288, 4.8858, 5.1672, 5.3991, 5.5962, 5.7673, 5.9183}},
    {9, {3.1992, 3.9485, 4.4149, 4.7554, 5.0235, 5.2444, 5.4319, 5.5947, 5.7384}},
    {10, {3.1511, 3.8768, 4.3266, 4.6543, 4.9120, 5.1242, 5.3042, 5.4605, 5.5984}},
    {12, {3.0813, 3.7729, 4.1987, 4.5077, 4.7502, 4.9496, 5.1187, 5.2653, 5.3946}},
    {15, {3.0143, 3.6734, 4.0760, 4.3670, 4.5947, 4.7816, 4.9399, 5.0770, 5.1979}},
    {20, {2.9500, 3.5779, 3.9583, 4.2319, 4.4452, 4.6199, 4.7676, 4.8954, 5.0079}},
    {30, {2.8882, 3.4864, 3.8454, 4.1021, 4.3015, 4.4642, 4.6014, 4.7199, 4.8241}},
    {60, {2.8288, 3.3987, 3.7371, 3.9774, 4.1632, 4.3141, 4.4411, 4.5504, 4.6463}},
    {120, {2.8000, 3.3561, 3.6846, 3.9169, 4.0960, 4.2412, 4.3630, 4.4678, 4.5595}},
    {1e18, {2.7718, 3.3145, 3.6332, 3.8577, 4.0301, 4.1696, 4.2863, 4.3865, 4.4741}},
};

const QRow kQ01[] = {
    {2, {14.0358, 19.0189, 22.2937, 24.7172, 26.6290, 28.2006, 29.5301, 30.6794, 31.6894}},
    {3, {8.2603, 10.6185, 12.1695, 13.3243, 14.2407, 14.9978, 15.6410, 16.1990, 16.6908}},
    {4, {6.5112, 8.1198, 9.1729, 9.9583, 10.5832, 11.1009, 11.5418, 11.9251, 12.2637}},
    {5, {5.7023, 6.9757, 7.8042, 8.4215, 8.9131, 9.3209, 9.6687, 9.9715, 10.2393}},
    {6, {5.2431, 6.3305, 7.0333, 7.5560, 7.9723, 8.3177, 8.6125, 8.8693, 9.0966}},
    {7, {4.9490, 5.9193, 6.5424, 7.0050, 7.3730, 7.6784, 7.9390, 8.1662, 8.3674}},
    {8, {4.7452, 5.6354, 6.2038, 6.6248, 6.9594, 7.2369, 7.4738, 7.6803, 7.8632}},
    {9, {4.5960, 5.4280, 5.9567, 6.3473, 6.6574, 6.9145, 7.1339, 7.3251, 7.4945}},
    {10, {4.4820, 5.2702, 5.7686, 6.1361, 6.4275, 6.6690, 6.8749, 7.0544, 7.2133}},
    {12, {4.3198, 5.0459, 5.5016, 5.8363, 6.1011, 6.3202, 6.5069, 6.6696, 6.8136}},
    {15, {4.1673, 4.8359, 5.2518, 5.5558, 5.7956, 5.9936, 6.1621, 6.3087, 6.4384}},
    {20, {4.0239, 4.6392, 5.0180, 5.2933, 5.5095, 5.6876, 5.8389, 5.9703, 6.0865}},
    {30, {3.8891, 4.4549, 4.7992, 5.0476, 5.2418, 5.4012, 5.5361, 5.6531, 5.7563}},
    {60, {3.7622, 4.2822, 4.5944, 4.8178, 4.9913, 5.1330, 5.2525, 5.3558, 5.4466}},
    {120, {3.7016, 4.1999, 4.4970, 4.7085, 4.8722, 5.0055, 5.1176, 5.2143, 5.2992}},
    {1e18, {3.6428, 4.1203, 4.4028, 4.6028, 4.7570, 4.8822, 4.9872, 5.0775, 5.1566}},
};

}  // namespace

double studentized_range_critical(double alpha, std::size_t k, std::size_t df) {
  const QRow* table = nullptr;
  std::size_t rows = 0;
  if (alpha == 0.05) {
    table = kQ05;
    rows = std::size(kQ05);
  } else if (alpha == 0.01) {
    table = kQ01;
    rows = std::size(kQ01);
  } else {
    fail("tukey: alpha ", alpha, " not in the embedded table (use 0.01 or 0.05)");
  }
  if (k < 2 || k > 10) fail("tukey: k = ", k, " outside embedded table (2..10)");
  if (df < 2) fail("tukey: df = ", df, " below embedded table range");
  const std::size_t col = k - 2;
  const double dfd = static_cast<double>(df);
  if (dfd <= table[0].df) return table[0].q[col];
  for (std::size_t r = 1; r < rows; ++r) {
    if (dfd <= table[r].df) {
      // Interpolate linearly in 1/df, the standard convention for q tables.
      const double x0 = 1.0 / table[r - 1].df;
      const double x1 = 1.0 / table[r].df;
      const double x = 1.0 / dfd;
      const double w = (x - x0) / (x1 - x0);
      return table[r - 1].q[col] * (1.0 - w) + table[r].q[col] * w;
    }
  }
  return table[rows - 1].q[col];
}

std::vector<TukeyPair> tukey_hsd(const std::vector<std::vector<double>>& groups,
                                 double alpha) {
  const GroupStats st = group_stats(groups);
  const std::size_t k = groups.size();
  if (st.total <= k) fail("tukey: no within-group degrees of freedom");
  const std::size_t df_within = st.total - k;
  const double msw = st.ssw / static_cast<double>(df_within);
  const double qcrit = studentized_range_critical(alpha, k, df_within);
  std::vector<TukeyPair> pairs;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double na = static_cast<double>(st.sizes[a]);
      const double nb = static_cast<double>(st.sizes[b]);
      const double nh = 2.0 / (1.0 / na + 1.0 / nb);
      TukeyPair p;
      p.a = a;
      p.b = b;
      p.mean_a = st.means[a];
      p.mean_b = st.means[b];
      const double diff = std::abs(st.means[a] - st.means[b]);
      if (msw == 0.0) {
        p.q = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
      } else {
        p.q = diff / std::sqrt(msw / nh);
      }
      p.significant = p.q > qcrit;
      pairs.push_back(p);
    }
  }
  return pairs;
}

}  // namespace prosody::eval
