#include "occlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "occlab/error.hpp"

namespace occlab {

namespace {

double median_of(std::vector<double> xs) {
  const std::size_t n = xs.size();
  const auto mid = xs.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(xs.begin(), mid);
  return (lower + upper) / 2.0;
}

double variance_of(std::span<const double> xs, double mean) {
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  fail(ErrorKind::Runtime, "incomplete beta continued fraction did not converge");
}

void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) fail(ErrorKind::InvalidArgument, std::string(what) + ": non-finite sample");
  }
}

}  // namespace

double mean_of(std::span<const double> xs) {
  if (xs.empty()) fail(ErrorKind::InvalidArgument, "mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) fail(ErrorKind::InvalidArgument, "sd needs at least two samples");
  return std::sqrt(variance_of(xs, mean_of(xs)));
}

std::vector<double> standardize(std::span<const double> xs) {
  const double m = mean_of(xs);
  const double sd = sample_sd(xs);
  if (sd == 0.0) fail(ErrorKind::InvalidArgument, "cannot standardize a constant sample");
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back((x - m) / sd);
  return out;
}

std::vector<double> minmax_scale(std::span<const double> samples) {
  if (samples.size() < 2) fail(ErrorKind::InvalidArgument, "minmax_scale needs at least two samples");
  require_finite(samples, "minmax_scale");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  const double min = *lo;
  const double range = *hi - min;
  if (!(range > 0.0)) fail(ErrorKind::InvalidArgument, "minmax_scale: zero range");
  std::vector<double> out;
  out.reserve(samples.size());
  for (double x : samples) out.push_back((x - min) / range);
  return out;
}

double incomplete_beta(double a, double b, double x, double y) {
  if (!(a > 0.0 && b > 0.0)) fail(ErrorKind::InvalidArgument, "incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorKind::InvalidArgument, "incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (y == 0.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log(y) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_fraction(b, a, y) / b;
}

double incomplete_beta(double a, double b, double x) { return incomplete_beta(a, b, x, 1.0 - x); }

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) fail(ErrorKind::InvalidArgument, "student t: dof must be positive");
  if (std::isnan(t)) fail(ErrorKind::InvalidArgument, "student t: t is NaN");
  if (t == 0.0) return 1.0;
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  const double p = incomplete_beta(dof / 2.0, 0.5, dof / (dof + t2), t2 / (dof + t2));
  return std::clamp(p, 0.0, 1.0);
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorKind::InvalidArgument, "welch_t needs at least two samples per side");
  require_finite(a, "welch_t");
  require_finite(b, "welch_t");
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double va = variance_of(a, ma) / na;
  const double vb = variance_of(b, mb) / nb;
  const double se2 = va + vb;
  if (!(se2 > 0.0)) fail(ErrorKind::InvalidArgument, "welch_t: both samples have zero variance");

  WelchResult r;
  r.t_statistic = (ma - mb) / std::sqrt(se2);
  r.dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  // Reported p stays in (0, 1] even when it underflows.
  r.p_value = std::max(student_t_two_sided_p(r.t_statistic, r.dof), std::numeric_limits<double>::min());
  return r;
}

double KdeCurve::integral() const {
  double s = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) s += (grid[i] - grid[i - 1]) * (density[i] + density[i - 1]) / 2.0;
  return s;
}

double KdeCurve::mean() const {
  double s = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    s += (grid[i] - grid[i - 1]) * (grid[i] * density[i] + grid[i - 1] * density[i - 1]) / 2.0;
  }
  const double mass = integral();
  if (!(mass > 0.0)) fail(ErrorKind::InvalidArgument, "KDE curve has no mass");
  return s / mass;
}

KdeCurve kde(std::span<const double> samples, std::optional<double> bandwidth, std::size_t grid_points) {
  if (samples.size() < 2) fail(ErrorKind::InvalidArgument, "kde needs at least two samples");
  if (grid_points < 2) fail(ErrorKind::InvalidArgument, "kde needs at least two grid points");
  require_finite(samples, "kde");

  double h = 0.0;
  if (bandwidth) {
    h = *bandwidth;
    if (!(h > 0.0) || !std::isfinite(h)) fail(ErrorKind::InvalidArgument, "kde bandwidth must be positive");
  } else {
    const double sd = sample_sd(samples);
    if (!(sd > 0.0)) fail(ErrorKind::InvalidArgument, "kde: zero spread, cannot pick a bandwidth");
    h = 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
  }

  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  const double start = *lo - 3.0 * h;
  const double step = (*hi - *lo + 6.0 * h) / static_cast<double>(grid_points - 1);
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));

  KdeCurve curve;
  curve.bandwidth = h;
  curve.grid.resize(grid_points);
  curve.density.resize(grid_points);
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = start + step * static_cast<double>(g);
    double s = 0.0;
    for (double xi : samples) {
      const double u = (x - xi) / h;
      s += std::exp(-0.5 * u * u);
    }
    curve.grid[g] = x;
    curve.density[g] = s * norm;
  }
  return curve;
}

std::vector<double> tail_cut(std::span<const double> samples, double c) {
  if (samples.size() < 3) fail(ErrorKind::InvalidArgument, "tail_cut needs at least three samples");
  if (!(c > 0.0)) fail(ErrorKind::InvalidArgument, "tail_cut: c must be positive");
  require_finite(samples, "tail_cut");

  std::vector<std::size_t> kept(samples.size());
  std::iota(kept.begin(), kept.end(), 0);
  std::vector<double> values;
  std::vector<double> deviations;
  while (true) {
    values.clear();
    for (std::size_t i : kept) values.push_back(samples[i]);
    const double med = median_of(values);
    deviations.clear();
    for (double x : values) deviations.push_back(std::fabs(x - med));
    const double limit = c * 1.4826 * median_of(deviations);

    const auto nearest = static_cast<std::size_t>(
        std::min_element(deviations.begin(), deviations.end()) - deviations.begin());
    std::vector<std::size_t> next;
    next.reserve(kept.size());
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (deviations[j] <= limit || j == nearest) next.push_back(kept[j]);
    }
    if (next.size() == kept.size()) break;
    kept = std::move(next);
  }

  std::vector<double> out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(samples[i]);
  return out;
}

std::vector<double> noise_average(const std::vector<std::vector<double>>& groups) {
  std::vector<double> out;
  out.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].empty()) fail(ErrorKind::InvalidArgument, "noise_average: group " + std::to_string(i) + " is empty");
    out.push_back(mean_of(groups[i]));
  }
  return out;
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) fail(ErrorKind::InvalidArgument, "ks_two_sample needs non-empty samples");
  std::vector<double> xa(a.begin(), a.end());
  std::vector<double> xb(b.begin(), b.end());
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  const auto na = static_cast<double>(xa.size());
  const auto nb = static_cast<double>(xb.size());

  double d = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < xa.size() && j < xb.size()) {
    const double x = std::min(xa[i], xb[j]);
    while (i < xa.size() && xa[i] == x) ++i;
    while (j < xb.size() && xb[j] == x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }

  KsResult r;
  r.statistic = d;
  const double en = std::sqrt(na * nb / (na + nb));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  // Kolmogorov distribution tail; the series is useless for tiny lambda.
  if (lambda < 0.2) {
    r.p_value = 1.0;
    return r;
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-16 * std::fabs(sum)) break;
    sign = -sign;
  }
  r.p_value = std::clamp(2.0 * sum, 0.0, 1.0);
  return r;
}

KeyScores FirstRoundCollisionScorer::score(std::span<const TraceRecord> traces, const TTableLayout& layout,
                                           std::uint32_t line_size) const {
  if (traces.size() < kMinTraces) {
    fail(ErrorKind::InvalidArgument,
         "key scoring needs at least " + std::to_string(kMinTraces) + " traces, got " + std::to_string(traces.size()));
  }
  layout.validate(line_size);
  const bool varied = std::any_of(traces.begin(), traces.end(),
                                  [&](const TraceRecord& r) { return r.plaintext != traces.front().plaintext; });
  if (!varied) fail(ErrorKind::InvalidArgument, "key scoring needs varying plaintexts; all traces share one");

  // Line of T_t[idx] relative to the table's first line.
  std::array<std::array<std::uint8_t, 256>, 4> local{};
  for (std::uint32_t t = 0; t < 4; ++t) {
    const std::uint64_t first = layout.entry(t, 0).value / line_size;
    for (unsigned idx = 0; idx < 256; ++idx) {
      const std::uint64_t rel = layout.entry(t, static_cast<std::uint8_t>(idx)).value / line_size - first;
      if (rel >= 64) fail(ErrorKind::InvalidArgument, "key scoring supports at most 64 lines per table");
      local[t][idx] = static_cast<std::uint8_t>(rel);
    }
  }

  std::vector<double> x = timings_of(traces);
  const double centre = mean_of(x);
  for (double& v : x) v -= centre;

  struct Moments {
    double n = 0, s = 0, q = 0;
  };
  // [byte][candidate][collision side]
  std::vector<std::array<std::array<Moments, 2>, 256>> acc(16);
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const Block& p = traces[r].plaintext;
    const double v = x[r];
    for (std::size_t b = 0; b < 16; ++b) {
      const std::size_t t = b % 4;
      std::uint64_t others = 0;
      for (std::size_t j = t; j < 16; j += 4) {
        if (j != b) others |= 1ull << local[t][p[j]];
      }
      for (unsigned k = 0; k < 256; ++k) {
        const auto side = static_cast<std::size_t>((others >> local[t][p[b] ^ k]) & 1u);
        Moments& m = acc[b][k][side];
        m.n += 1;
        m.s += v;
        m.q += v * v;
      }
    }
  }

  KeyScores out;
  for (std::size_t b = 0; b < 16; ++b) {
    for (unsigned k = 0; k < 256; ++k) {
      const Moments& miss = acc[b][k][0];
      const Moments& hit = acc[b][k][1];
      if (miss.n < 2 || hit.n < 2) {
        out.flagged[b][k] = true;
        continue;
      }
      const double m0 = miss.s / miss.n;
      const double m1 = hit.s / hit.n;
      const double v0 = std::max(0.0, (miss.q - miss.n * m0 * m0) / (miss.n - 1)) / miss.n;
      const double v1 = std::max(0.0, (hit.q - hit.n * m1 * m1) / (hit.n - 1)) / hit.n;
      const double se2 = v0 + v1;
      out.scores[b][k] = se2 > 0.0 ? std::fabs(m0 - m1) / std::sqrt(se2) : 0.0;
    }
  }
  return out;
}

KeyScores score_key_bytes(std::span<const TraceRecord> traces, const TTableLayout& layout, std::uint32_t line_size) {
  return FirstRoundCollisionScorer{}.score(traces, layout, line_size);
}

KeyRanking guessing_entropy(const ScoreMatrix& scores, const Block& true_key) {
  KeyRanking r;
  r.per_byte_scores = scores;
  for (std::size_t b = 0; b < 16; ++b) {
    const double truth = scores[b][true_key[b]];
    if (!std::isfinite(truth)) fail(ErrorKind::InvalidArgument, "guessing_entropy: non-finite score");
    std::size_t greater = 0;
    std::size_t tied = 0;
    for (unsigned k = 0; k < 256; ++k) {
      if (!std::isfinite(scores[b][k])) fail(ErrorKind::InvalidArgument, "guessing_entropy: non-finite score");
      if (k == true_key[b]) continue;
      if (scores[b][k] > truth) ++greater;
      if (scores[b][k] == truth) ++tied;
    }
    r.rank_of_true[b] = 1.0 + static_cast<double>(greater) + static_cast<double>(tied) / 2.0;
    r.ge_bits += std::log2(r.rank_of_true[b]);
  }
  return r;
}

LeakageReport leakage_assess(std::span<const double> t1, std::span<const double> t2, double threshold) {
  if (t1.empty() || t2.empty()) fail(ErrorKind::InvalidArgument, "leakage_assess needs two non-empty runs");
  std::vector<double> pooled(t1.begin(), t1.end());
  pooled.insert(pooled.end(), t2.begin(), t2.end());
  const std::vector<double> scaled = minmax_scale(pooled);
  const auto split = scaled.begin() + static_cast<std::ptrdiff_t>(t1.size());
  const std::vector<double> a(scaled.begin(), split);
  const std::vector<double> b(split, scaled.end());

  LeakageReport r;
  r.welch = welch_t(a, b);
  r.leaks = std::fabs(r.welch.t_statistic) > threshold;
  return r;
}

LeakageReport leakage_assess(const TraceSet& t1, const TraceSet& t2, double threshold) {
  return leakage_assess(timings_of(t1), timings_of(t2), threshold);
}

std::vector<double> timings_of(std::span<const TraceRecord> traces) {
  std::vector<double> out;
  out.reserve(traces.size());
  for (const TraceRecord& r : traces) out.push_back(static_cast<double>(r.timing));
  return out;
}

}  // namespace occlab
