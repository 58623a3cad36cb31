#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prosody/corpus.hpp"

namespace prosody::eval {

using Sequence = std::vector<double>;
// sequences grouped by (sentence_id, emotion)
using GroupKey = std::pair<int, corpus::Emotion>;
using GroupedSequences = std::map<GroupKey, std::vector<Sequence>>;

double rmse(const Sequence& a, const Sequence& b);
// Errors on zero variance rather than inventing a value.
double pcc(const Sequence& a, const Sequence& b);

// Monotone alignment path; steps are (1,0), (0,1) or (1,1).
struct WarpPath {
  std::vector<std::pair<std::size_t, std::size_t>> points;
};

struct DtwResult {
  double distance = 0.0;
  WarpPath path;
};

// Exact DP optimum with |a_i - b_j| local cost; backtrack ties prefer the
// diagonal, then (1,0), then (0,1).
DtwResult dtw(const Sequence& a, const Sequence& b);

enum class FdMode {
  rms,          // sqrt(sum (i-j)^2 / |path|)
  mean_square,  // sum (i-j)^2 / |path|
  sum_root,     // sqrt(sum (i-j)^2)
};

double frame_disturbance(const WarpPath& path, FdMode mode = FdMode::rms);

// Step function standing in for an audio feature track: word k occupies
// round(frame_rate * reference_k * (1 + r_k)) frames with value k+1.
Sequence lengths_to_envelope(const Sequence& relative_lengths,
                             const Sequence& reference_durations,
                             double frame_rate);

// Mean over generated sequences of their mean squared deviation from the
// per-(sentence, emotion) real mean sequence.
double mse_to_population_mean(const GroupedSequences& generated,
                              const GroupedSequences& real);

Sequence mean_sequence(const std::vector<Sequence>& seqs);

struct DistributionSummary {
  // (i, j) -> list of (r_i, r_j) points over sequences covering both indices
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::pair<double, double>>>
      pair_points;
  // per sequence: (mean, population variance)
  std::vector<std::pair<double, double>> mean_variance;
};

DistributionSummary distribution_summary(const std::vector<Sequence>& seqs);

struct AnovaResult {
  double f = 0.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double p_value = 1.0;
  bool significant = false;  // at the alpha passed in
};

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups,
                         double alpha = 0.01);

struct TukeyPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double q = 0.0;
  bool significant = false;
};

// Studentized-range test on all pairs; critical values from an embedded
// table (alpha in {0.01, 0.05}, k <= 10) with 1/df interpolation.
std::vector<TukeyPair> tukey_hsd(const std::vector<std::vector<double>>& groups,
                                 double alpha = 0.01);

double studentized_range_critical(double alpha, std::size_t k, std::size_t df);

}  // namespace prosody::eval
