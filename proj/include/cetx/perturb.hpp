#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cetx/rng.hpp"
#include "cetx/tensor.hpp"

namespace cetx {

enum class PerturbKind : std::uint8_t { additive, multiplicative, warp, mask };

std::string to_string(PerturbKind kind);
PerturbKind parse_perturb_kind(const std::string& name);

struct PerturbationConfig {
  double additive_sigma = 0.2;
  double multiplicative_sigma = 0.2;
  double warp_sigma = 0.3;
  std::size_t warp_knots = 4;
  std::size_t mask_length = 100;
  std::vector<PerturbKind> enabled = {PerturbKind::additive, PerturbKind::multiplicative, PerturbKind::warp,
                                      PerturbKind::mask};

  /// Checks ranges; `window_length` bounds the mask.
  void validate(std::size_t window_length) const;
};

/// x + N(0, sigma) element-wise.
Tensor<float> additive_noise(const Tensor<float>& x, double sigma, Rng& rng);

/// Each channel scaled by its own s_c ~ N(1, sigma).
Tensor<float> multiplicative_scale(const Tensor<float>& x, double sigma, Rng& rng);

/// Warped sample positions for one channel: a cubic spline through `knots`
/// speed values ~ N(1, sigma) (clamped positive) is integrated and rescaled
/// so position 0 maps to 0 and L-1 maps to L-1. Strictly increasing.
std::vector<double> warp_positions(std::size_t length, double sigma, std::size_t knots, Rng& rng);

/// Resamples each channel at its own warped positions (linear interpolation).
Tensor<float> time_warp(const Tensor<float>& x, double sigma, std::size_t knots, Rng& rng);

/// Zeroes one contiguous run of `mask_length` time steps, shared by all
/// channels.
Tensor<float> mask_segment(const Tensor<float>& x, std::size_t mask_length, Rng& rng);

/// Applies `kind` with the parameters in `cfg`.
Tensor<float> apply_perturbation(PerturbKind kind, const Tensor<float>& x, const PerturbationConfig& cfg, Rng& rng);

/// Random stream for example `index` in `epoch`.
Rng perturbation_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

/// Draws one enabled perturbation uniformly from the example's own stream
/// and applies it.
Tensor<float> perturb_example(const Tensor<float>& x, const PerturbationConfig& cfg, std::uint64_t seed,
                              std::uint64_t epoch, std::uint64_t index, PerturbKind* chosen = nullptr);

/// Per example, one enabled perturbation chosen uniformly and applied.
/// Example i of the batch uses perturbation_rng(seed, epoch, first_index + i).
std::vector<Tensor<float>> random_perturb(const std::vector<Tensor<float>>& batch, const PerturbationConfig& cfg,
                                          std::uint64_t seed, std::uint64_t epoch, std::uint64_t first_index = 0,
                                          std::vector<PerturbKind>* chosen = nullptr);

}  // namespace cetx
