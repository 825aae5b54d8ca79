#pragma once

// Differentiable operations over the layer set of the multi-exit CNN.
// Activations are per example: [channels, length] for feature maps and
// [features] for vectors. Instantiated for float (training) and double
// (gradient checking).

#include <cstddef>

#include "cetx/autograd.hpp"
#include "cetx/rng.hpp"

namespace cetx {

/// Stride-1 convolution with zero "same" padding: taps cover
/// [i - K/2, i - K/2 + K). x: [C_in, L], w: [C_out, C_in, K], b: [C_out].
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b);

/// Ceil-mode max pooling over time; a trailing partial window pools over the
/// samples it has. Gradient goes to the first maximal element.
template <typename T>
Var<T> max_pool1d(Var<T> x, std::size_t pool, std::size_t stride);

/// [C, L] -> [C], mean over time.
template <typename T>
Var<T> global_avg_pool(Var<T> x);

/// x: [D_in], w: [D_out, D_in], b: [D_out].
template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b);

/// Parametric ReLU with one slope per channel (dim 0 of x).
template <typename T>
Var<T> prelu(Var<T> x, Var<T> slopes);

enum class NormMode { layer, instance };

inline constexpr double kNormEps = 1e-5;

/// Standardizes x: [C, L] per channel (instance) or over all C*L values
/// (layer), then applies per-channel gain and shift.
template <typename T>
Var<T> normalize(Var<T> x, NormMode mode, Var<T> gain, Var<T> shift, double eps = kNormEps);

/// Inverted dropout. Identity when !training or rate == 0.
template <typename T>
Var<T> dropout(Var<T> x, double rate, bool training, Rng& rng);

template <typename T>
Var<T> softmax(Var<T> logits);

template <typename T>
Var<T> log_softmax(Var<T> logits);

/// -sum(target * log_softmax(logits)); scalar.
template <typename T>
Var<T> cross_entropy_with_logits(Var<T> logits, const Tensor<T>& target);

/// Cross-entropy against a class index (one-hot target).
template <typename T>
Var<T> cross_entropy_with_label(Var<T> logits, std::size_t label);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

/// Sum of all elements; scalar.
template <typename T>
Var<T> sum(Var<T> a);

/// Sum of squared elements; scalar.
template <typename T>
Var<T> sum_squares(Var<T> a);

/// Numerically stable softmax of a plain vector.
template <typename T>
Tensor<T> softmax_values(const Tensor<T>& logits);

}  // namespace cetx
