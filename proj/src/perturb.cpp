#include "cetx/perturb.hpp"

#include <algorithm>
#include <cmath>

namespace cetx {

std::string to_string(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::additive: return "additive";
    case PerturbKind::multiplicative: return "multiplicative";
    case PerturbKind::warp: return "warp";
    case PerturbKind::mask: return "mask";
  }
  return "unknown";
}

PerturbKind parse_perturb_kind(const std::string& name) {
  if (name == "additive") return PerturbKind::additive;
  if (name == "multiplicative") return PerturbKind::multiplicative;
  if (name == "warp") return PerturbKind::warp;
  if (name == "mask") return PerturbKind::mask;
  throw ConfigError("perturb.enabled: unknown perturbation '" + name + "'");
}

void PerturbationConfig::validate(std::size_t window_length) const {
  if (!(additive_sigma >= 0.0)) throw ConfigError("perturb.additive_sigma: must be non-negative");
  if (!(multiplicative_sigma >= 0.0)) throw ConfigError("perturb.multiplicative_sigma: must be non-negative");
  if (!(warp_sigma >= 0.0)) throw ConfigError("perturb.warp_sigma: must be non-negative");
  if (warp_knots < 2) throw ConfigError("perturb.warp_knots: must be >= 2");
  if (enabled.empty()) throw ConfigError("perturb.enabled: at least one perturbation is required");
  const bool has_mask = std::find(enabled.begin(), enabled.end(), PerturbKind::mask) != enabled.end();
  if (has_mask && (mask_length == 0 || mask_length >= window_length)) {
    throw ConfigError("perturb.mask_length: must be in [1, window length " + std::to_string(window_length) + ")");
  }
}

Tensor<float> additive_noise(const Tensor<float>& x, double sigma, Rng& rng) {
  Tensor<float> out = x;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& v : out.data()) v = static_cast<float>(v + n(rng));
  return out;
}

Tensor<float> multiplicative_scale(const Tensor<float>& x, double sigma, Rng& rng) {
  Tensor<float> out = x;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> n(1.0, sigma);
  const std::size_t c = x.dim(0), len = x.dim(1);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double s = n(rng);
    for (std::size_t t = 0; t < len; ++t) out.at(ch, t) = static_cast<float>(s * x.at(ch, t));
  }
  return out;
}

namespace {

constexpr double kMinSpeed = 0.05;

/// Second derivatives of the natural cubic spline through (xs, ys).
std::vector<double> natural_spline_moments(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  // Tridiagonal system for interior moments (Thomas algorithm).
  const std::size_t k = n - 2;
  std::vector<double> a(k), b(k), c(k), d(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = xs[i] - xs[i - 1], h1 = xs[i + 1] - xs[i];
    a[i - 1] = h0;
    b[i - 1] = 2.0 * (h0 + h1);
    c[i - 1] = h1;
    d[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < k; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    d[i] -= w * d[i - 1];
  }
  m[k] = d[k - 1] / b[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) m[i + 1] = (d[i] - c[i] * m[i + 2]) / b[i];
  return m;
}

}  // namespace

std::vector<double> warp_positions(std::size_t length, double sigma, std::size_t knots, Rng& rng) {
  if (knots < 2) throw ConfigError("time_warp: knots must be >= 2");
  std::vector<double> pos(length, 0.0);
  if (length < 2) return pos;
  const double last = static_cast<double>(length - 1);

  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> kx(knots), ky(knots);
  for (std::size_t j = 0; j < knots; ++j) {
    kx[j] = last * static_cast<double>(j) / static_cast<double>(knots - 1);
    ky[j] = std::max(kMinSpeed, 1.0 + sigma * n(rng));
  }
  const auto m = natural_spline_moments(kx, ky);

  std::vector<double> speed(length);
  std::size_t seg = 0;
  for (std::size_t t = 0; t < length; ++t) {
    const double x = static_cast<double>(t);
    while (seg + 2 < knots && x > kx[seg + 1]) ++seg;
    const double h = kx[seg + 1] - kx[seg];
    const double u = (x - kx[seg]) / h;
    const double v = 1.0 - u;
    // Written so that equal knot values and zero moments give exactly ky.
    const double s = ky[seg] + (ky[seg + 1] - ky[seg]) * u +
                     h * h / 6.0 * ((u * u * u - u) * m[seg + 1] + (v * v * v - v) * m[seg]);
    speed[t] = std::max(kMinSpeed, s);
  }

  for (std::size_t t = 1; t < length; ++t) pos[t] = pos[t - 1] + 0.5 * (speed[t - 1] + speed[t]);
  const double scale = last / pos[length - 1];
  for (auto& p : pos) p *= scale;
  pos[length - 1] = last;
  return pos;
}

Tensor<float> time_warp(const Tensor<float>& x, double sigma, std::size_t knots, Rng& rng) {
  const std::size_t c = x.dim(0), len = x.dim(1);
  Tensor<float> out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto pos = warp_positions(len, sigma, knots, rng);
    for (std::size_t t = 0; t < len; ++t) {
      const double p = pos[t];
      auto j = static_cast<std::size_t>(std::floor(p));
      if (j >= len - 1) {
        out.at(ch, t) = x.at(ch, len - 1);
        continue;
      }
      const double frac = p - static_cast<double>(j);
      const double a = x.at(ch, j), b = x.at(ch, j + 1);
      out.at(ch, t) = frac == 0.0 ? x.at(ch, j) : static_cast<float>(a + frac * (b - a));
    }
  }
  return out;
}

Tensor<float> mask_segment(const Tensor<float>& x, std::size_t mask_length, Rng& rng) {
  const std::size_t c = x.dim(0), len = x.dim(1);
  if (mask_length == 0 || mask_length >= len) {
    throw Error("mask_segment: mask length " + std::to_string(mask_length) + " must be in [1, " +
                std::to_string(len) + ")");
  }
  std::uniform_int_distribution<std::size_t> start_dist(0, len - mask_length);
  const std::size_t start = start_dist(rng);
  Tensor<float> out = x;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t t = start; t < start + mask_length; ++t) out.at(ch, t) = 0.0f;
  }
  return out;
}

Tensor<float> apply_perturbation(PerturbKind kind, const Tensor<float>& x, const PerturbationConfig& cfg, Rng& rng) {
  switch (kind) {
    case PerturbKind::additive: return additive_noise(x, cfg.additive_sigma, rng);
    case PerturbKind::multiplicative: return multiplicative_scale(x, cfg.multiplicative_sigma, rng);
    case PerturbKind::warp: return time_warp(x, cfg.warp_sigma, cfg.warp_knots, rng);
    case PerturbKind::mask: return mask_segment(x, cfg.mask_length, rng);
  }
  throw Error("unknown perturbation kind");
}

Rng perturbation_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return make_rng(seed, {0x9e27, epoch, index});
}

Tensor<float> perturb_example(const Tensor<float>& x, const PerturbationConfig& cfg, std::uint64_t seed,
                              std::uint64_t epoch, std::uint64_t index, PerturbKind* chosen) {
  if (cfg.enabled.empty()) throw ConfigError("perturb.enabled: at least one perturbation is required");
  Rng rng = perturbation_rng(seed, epoch, index);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.enabled.size() - 1);
  const auto kind = cfg.enabled[pick(rng)];
  if (chosen != nullptr) *chosen = kind;
  return apply_perturbation(kind, x, cfg, rng);
}

std::vector<Tensor<float>> random_perturb(const std::vector<Tensor<float>>& batch, const PerturbationConfig& cfg,
                                          std::uint64_t seed, std::uint64_t epoch, std::uint64_t first_index,
                                          std::vector<PerturbKind>* chosen) {
  std::vector<Tensor<float>> out;
  out.reserve(batch.size());
  if (chosen != nullptr) chosen->clear();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    PerturbKind kind{};
    out.push_back(perturb_example(batch[i], cfg, seed, epoch, first_index + i, &kind));
    if (chosen != nullptr) chosen->push_back(kind);
  }
  return out;
}

}  // namespace cetx
