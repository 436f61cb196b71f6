#include "lfp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "lfp/errors.hpp"
#include "lfp/parallel.hpp"

namespace lfp::analysis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas over the finite entries of f (squared
// distances), evaluated at every index of the row.
void envelope_1d(const std::vector<double>& f, std::vector<double>& out) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v;
  std::vector<double> z;
  v.reserve(static_cast<std::size_t>(n));
  z.reserve(static_cast<std::size_t>(n) + 1);
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[static_cast<std::size_t>(q)])) continue;
    const double fq = f[static_cast<std::size_t>(q)] + static_cast<double>(q) * q;
    while (!v.empty()) {
      const int p = v.back();
      const double s = (fq - (f[static_cast<std::size_t>(p)] + static_cast<double>(p) * p)) /
                       (2.0 * (q - p));
      if (s <= z.back()) {
        v.pop_back();
        z.pop_back();
      } else {
        v.push_back(q);
        z.push_back(s);
        break;
      }
    }
    if (v.empty()) {
      v.push_back(q);
      z.assign(1, -kInf);
    }
  }
  if (v.empty()) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  std::size_t k = 0;
  for (int q = 0; q < n; ++q) {
    while (k + 1 < v.size() && z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[static_cast<std::size_t>(q)] = d * d + f[static_cast<std::size_t>(v[k])];
  }
}

}  // namespace

std::vector<UnknownClass> classify_unknown(const AlphaMatte& alpha_gt, const Trimap& t,
                                           double threshold) {
  require_same_size(alpha_gt.height(), alpha_gt.width(), t.height(), t.width(),
                    "alpha and trimap");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ParameterError("classification threshold must lie in (0, 1)");
  }
  std::vector<UnknownClass> out(t.labels().size(), UnknownClass::Unlabeled);
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (t(y, x) != Label::Unknown) continue;
      out[static_cast<std::size_t>(y) * t.width() + x] =
          alpha_gt(y, x) >= threshold ? UnknownClass::FgLike : UnknownClass::BgLike;
    }
  }
  return out;
}

DistanceMap euclidean_distance(const std::vector<std::uint8_t>& sites, int height, int width) {
  DistanceMap m;
  m.height = height;
  m.width = width;
  m.values.assign(static_cast<std::size_t>(height) * width, kInf);
  m.target_empty = std::none_of(sites.begin(), sites.end(), [](std::uint8_t s) { return s; });
  if (m.target_empty) return m;

  // Column pass: exact 1-D distance to the nearest site in the column.
  std::vector<double> sq(m.values.size(), kInf);
  for (int x = 0; x < width; ++x) {
    int last = -1;
    for (int y = 0; y < height; ++y) {
      if (sites[static_cast<std::size_t>(y) * width + x]) last = y;
      if (last >= 0) {
        const double d = y - last;
        sq[static_cast<std::size_t>(y) * width + x] = d * d;
      }
    }
    last = -1;
    for (int y = height - 1; y >= 0; --y) {
      if (sites[static_cast<std::size_t>(y) * width + x]) last = y;
      if (last >= 0) {
        const double d = last - y;
        double& v = sq[static_cast<std::size_t>(y) * width + x];
        v = std::min(v, d * d);
      }
    }
  }
  // Row pass over the squared column distances.
  std::vector<double> row(static_cast<std::size_t>(width)), out(static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y) {
    std::copy_n(sq.begin() + static_cast<std::ptrdiff_t>(y) * width, width, row.begin());
    envelope_1d(row, out);
    for (int x = 0; x < width; ++x) {
      m.values[static_cast<std::size_t>(y) * width + x] = std::sqrt(out[static_cast<std::size_t>(x)]);
    }
  }
  return m;
}

DistanceMap distance_to_known(const Trimap& t, Label target) {
  std::vector<std::uint8_t> sites(t.labels().size());
  for (std::size_t i = 0; i < sites.size(); ++i) sites[i] = t.labels()[i] == target;
  return euclidean_distance(sites, t.height(), t.width());
}

const char* curve_name(int curve) {
  static const char* names[4] = {"fg_like_to_fg", "fg_like_to_bg", "bg_like_to_fg",
                                 "bg_like_to_bg"};
  return names[curve];
}

double percentile(const std::vector<double>& sorted, double rank) {
  if (sorted.empty()) throw DataError("percentile of an empty set");
  const double pos = rank / 100.0 * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * t;
}

double DistanceStats::cdf(int curve, double d) const {
  const auto& v = distances[static_cast<std::size_t>(curve)];
  if (v.empty()) return 0.0;
  const auto it = std::upper_bound(v.begin(), v.end(), d);
  return static_cast<double>(it - v.begin()) / static_cast<double>(v.size());
}

DistanceStats dataset_distance_stats(const std::vector<std::pair<Trimap, AlphaMatte>>& samples,
                                     unsigned workers, double threshold) {
  if (samples.empty()) throw DataError("distance statistics need at least one sample");
  struct PerSample {
    bool used = false;
    std::array<std::vector<double>, 4> d;
  };
  std::vector<PerSample> parts(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const Trimap& t = samples[i].first;
    const AlphaMatte& a = samples[i].second;
    if (t.count(Label::Foreground) == 0 || t.count(Label::Background) == 0) return;
    const std::vector<UnknownClass> cls = classify_unknown(a, t, threshold);
    const DistanceMap to_fg = distance_to_known(t, Label::Foreground);
    const DistanceMap to_bg = distance_to_known(t, Label::Background);
    PerSample& p = parts[i];
    p.used = true;
    for (std::size_t k = 0; k < cls.size(); ++k) {
      if (cls[k] == UnknownClass::FgLike) {
        p.d[FgLikeToFg].push_back(to_fg.values[k]);
        p.d[FgLikeToBg].push_back(to_bg.values[k]);
      } else if (cls[k] == UnknownClass::BgLike) {
        p.d[BgLikeToFg].push_back(to_fg.values[k]);
        p.d[BgLikeToBg].push_back(to_bg.values[k]);
      }
    }
  });
  DistanceStats s;
  for (const PerSample& p : parts) {
    if (!p.used) {
      ++s.samples_skipped;
      continue;
    }
    ++s.samples_used;
    for (int c = 0; c < 4; ++c) {
      auto& dst = s.distances[static_cast<std::size_t>(c)];
      dst.insert(dst.end(), p.d[static_cast<std::size_t>(c)].begin(),
                 p.d[static_cast<std::size_t>(c)].end());
    }
  }
  if (s.samples_used == 0) {
    throw DataError("every sample lacks known foreground or known background");
  }
  for (int c = 0; c < 4; ++c) {
    auto& v = s.distances[static_cast<std::size_t>(c)];
    std::sort(v.begin(), v.end());
    for (std::size_t r = 0; r < kPercentileRanks.size(); ++r) {
      s.percentiles[static_cast<std::size_t>(c)][r] =
          v.empty() ? std::nan("") : percentile(v, kPercentileRanks[r]);
    }
  }
  return s;
}

std::string stats_to_json(const DistanceStats& s) {
  nlohmann::json j;
  j["samples_used"] = s.samples_used;
  j["samples_skipped"] = s.samples_skipped;
  j["percentile_ranks"] = kPercentileRanks;
  nlohmann::json curves = nlohmann::json::object();
  for (int c = 0; c < 4; ++c) {
    const auto& v = s.distances[static_cast<std::size_t>(c)];
    nlohmann::json cj;
    cj["count"] = v.size();
    nlohmann::json pct = nlohmann::json::array();
    for (double p : s.percentiles[static_cast<std::size_t>(c)]) {
      pct.push_back(std::isnan(p) ? nlohmann::json(nullptr) : nlohmann::json(p));
    }
    cj["percentiles"] = pct;
    // counts[k] = number of distances in [k, k + 1)
    std::vector<std::size_t> hist;
    for (double d : v) {
      const std::size_t k = static_cast<std::size_t>(std::floor(d));
      if (hist.size() <= k) hist.resize(k + 1, 0);
      ++hist[k];
    }
    cj["histogram"] = {{"bin_width", 1.0}, {"counts", hist}};
    curves[curve_name(c)] = cj;
  }
  j["curves"] = curves;
  return j.dump(2);
}

}  // namespace lfp::analysis
