#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lis/common.hpp"
#include "lis/model.hpp"

namespace lis {

enum class GramKind { ReferenceMC, WeightedIS, ChainEpochAverage, SmcWeighted };

std::string to_string(GramKind kind);
GramKind gram_kind_from_string(const std::string& name);

// Monte Carlo estimate of a gradient Gram matrix. The matrix is symmetrized
// and eigenvalue-floored at zero on construction; variance_estimate is the
// empirical one-sample variance, summed over entries in the Frobenius sense.
struct GramEstimate {
  Mat matrix;
  std::int64_t sample_count = 0;
  GramKind kind = GramKind::ReferenceMC;
  std::optional<double> variance_estimate;
};

GramEstimate make_gram_estimate(Mat raw, std::int64_t sample_count, GramKind kind,
                                std::optional<double> variance_estimate);

// Streaming accumulator over rank-1 terms g g^T. Memory stays O(d^2)
// regardless of the sample count, and two partial accumulators merge
// exactly (sums and counts add), so work may be partitioned across workers.
class GramAccumulator {
 public:
  explicit GramAccumulator(int dim);

  void add(const Vec& gradient);
  void merge(const GramAccumulator& other);
  std::int64_t count() const { return count_; }

  GramEstimate finalize(GramKind kind) const;

 private:
  Mat sum_;
  Mat sum_squares_;  // entrywise squares, for the variance estimate
  std::int64_t count_ = 0;
};

// (1/m) sum of grad log f outer products at i.i.d. standard normal draws.
// Deterministic given the seed; a non-finite gradient aborts with the
// offending sample index in the message.
GramEstimate estimate_reference_gram(const TargetModel& model, std::int64_t m,
                                     std::uint64_t seed);

// Self-normalized weighted average of gradient outer products; invariant to
// shifting all log-weights by a constant. Used with tempering increments as
// log-weights inside SMC and with likelihood ratios elsewhere.
GramEstimate estimate_posterior_gram_weighted(const std::vector<Vec>& gradients,
                                              const std::vector<double>& log_weights);

// Plain average of gradient outer products over chain states (one row per
// state), targeting the posterior Gram matrix when the chain targets pi.
GramEstimate estimate_posterior_gram_chain(const TargetModel& model, const Mat& chain_states);

// Arithmetic mean of history[min(j, burn)..j], the running epoch average of
// the adaptive sampler.
GramEstimate epoch_running_mean(const std::vector<GramEstimate>& history, int j, int burn);

// Unbiased empirical variance of the matrix terms, summed over entries:
// equals m * E |Hhat - H|_F^2 in expectation for i.i.d. terms.
double empirical_one_sample_variance(const std::vector<Mat>& terms);

// CSV (row-major matrix) plus JSON sidecar (m, kind, variance_estimate).
void write_gram_csv(const std::filesystem::path& csv_path, const GramEstimate& estimate);
void write_gram_sidecar(const std::filesystem::path& json_path, const GramEstimate& estimate);

}  // namespace lis
