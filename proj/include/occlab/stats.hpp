#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "occlab/aes_victim.hpp"
#include "occlab/trace.hpp"

namespace occlab {

struct WelchResult {
  double t_statistic = 0.0;
  double dof = 0.0;
  /// Two-sided.
  double p_value = 1.0;
};

/// (x - min) / (max - min). Throws on fewer than two samples or zero range.
std::vector<double> minmax_scale(std::span<const double> samples);

/// Welch's unequal-variance t-test with a two-sided Student-t p-value.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

/// I_x(a, b), the regularized incomplete beta function. `y` must equal 1 - x;
/// passing it separately avoids cancellation near x = 1.
double incomplete_beta(double a, double b, double x, double y);
double incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;

  /// Trapezoidal integral of the density over the grid.
  double integral() const;
  /// First moment of the curve (trapezoidal).
  double mean() const;
};

/// Gaussian KDE. Without a bandwidth, Silverman's 1.06 * sd * n^(-1/5) is used.
/// The grid spans [min - 3h, max + 3h] with `grid_points` >= 2 points.
KdeCurve kde(std::span<const double> samples, std::optional<double> bandwidth, std::size_t grid_points);

inline constexpr double kDefaultTailCut = 3.0;

/// Keeps samples within c * sigma of the median, repeated until nothing more
/// is dropped. Sigma is the MAD scaled to a gaussian sd (1.4826 * MAD). The
/// sample nearest the median always survives. Input order is preserved.
std::vector<double> tail_cut(std::span<const double> samples, double c = kDefaultTailCut);

/// Mean of each group, in order. Throws on an empty group.
std::vector<double> noise_average(const std::vector<std::vector<double>>& groups);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test, asymptotic p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

double mean_of(std::span<const double> xs);
double sample_sd(std::span<const double> xs);
/// (x - mean) / sd over the whole sample.
std::vector<double> standardize(std::span<const double> xs);

using ScoreMatrix = std::array<std::array<double, 256>, 16>;

struct KeyScores {
  ScoreMatrix scores{};
  /// Candidates whose partition had a side with fewer than two traces; scored 0.
  std::array<std::array<bool, 256>, 16> flagged{};
};

/// Pluggable key-byte distinguisher over a trace set.
class KeyByteScorer {
 public:
  virtual ~KeyByteScorer() = default;
  virtual KeyScores score(std::span<const TraceRecord> traces, const TTableLayout& layout,
                          std::uint32_t line_size) const = 0;
};

/// For byte b and candidate k, splits traces by whether T_{b mod 4}[p_b ^ k]
/// shares a first-round line with another position's lookup. The other key
/// bytes are unknown, so those positions are indexed by their plaintext byte
/// alone. Score is |welch_t(no collision, collision)|.
class FirstRoundCollisionScorer final : public KeyByteScorer {
 public:
  static constexpr std::size_t kMinTraces = 100;

  KeyScores score(std::span<const TraceRecord> traces, const TTableLayout& layout,
                  std::uint32_t line_size) const override;
};

KeyScores score_key_bytes(std::span<const TraceRecord> traces, const TTableLayout& layout,
                          std::uint32_t line_size = 64);

struct KeyRanking {
  ScoreMatrix per_byte_scores{};
  /// Average rank over ties, so values like 8.5 occur.
  std::array<double, 16> rank_of_true{};
  double ge_bits = 0.0;
};

/// rank = 1 + (candidates scoring strictly higher) + (other candidates tied) / 2;
/// ge_bits = sum of log2(rank).
KeyRanking guessing_entropy(const ScoreMatrix& scores, const Block& true_key);

inline constexpr double kDefaultLeakThreshold = 4.5;

struct LeakageReport {
  WelchResult welch;
  bool leaks = false;
};

/// Min-max scales the union of both runs, splits it back, then runs welch_t.
LeakageReport leakage_assess(std::span<const double> t1, std::span<const double> t2,
                             double threshold = kDefaultLeakThreshold);
LeakageReport leakage_assess(const TraceSet& t1, const TraceSet& t2, double threshold = kDefaultLeakThreshold);

std::vector<double> timings_of(std::span<const TraceRecord> traces);

}  // namespace occlab
