#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cetx/autograd.hpp"
#include "cetx/ops.hpp"
#include "cetx/rng.hpp"

namespace cetx {

struct BlockSpec {
  std::size_t filters = 8;
  std::size_t kernel = 4;
  std::size_t pool = 4;
  double dropout_rate = 0.0;
};

struct ExitHeadSpec {
  std::size_t hidden_units = 32;
  std::size_t num_classes = 6;
};

/// Five blocks of 8/16/24/32/64 filters, kernel 4, pool 4, dropout 0.1
/// after blocks 2 and 4.
std::vector<BlockSpec> default_blocks();

struct ModelConfig {
  std::size_t channels_in = 3;
  std::size_t length_in = 400;
  std::size_t num_classes = 6;
  std::vector<BlockSpec> blocks = default_blocks();
  std::size_t hidden_units = 32;
  double l2_rate = 1e-4;
  std::uint64_t seed = 0;

  ExitHeadSpec head() const { return {hidden_units, num_classes}; }
  std::size_t num_exits() const { return blocks.size(); }

  /// Throws ConfigError on invalid fields.
  void validate() const;
};

/// Time length after each block (ceil-mode pooling).
std::vector<std::size_t> block_output_lengths(const ModelConfig& cfg);

/// Counts layer evaluations; used to verify that early exit never recomputes
/// the trunk.
struct ForwardCounter {
  std::size_t blocks = 0;
  std::size_t heads = 0;
  std::size_t conv_calls = 0;
};

/// Multi-exit 1-D CNN: instance norm on the input, then per block
/// conv -> layer norm -> PReLU -> max pool [-> dropout], with an exit head
/// (global average pool -> dense -> PReLU -> dense) after every block.
///
/// Exit numbers in the public API are 1-based: exit 1 follows block 1,
/// exit E follows the last block.
template <typename T>
class BasicMultiExitNet {
 public:
  BasicMultiExitNet() = default;
  explicit BasicMultiExitNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::size_t num_exits() const { return blocks_.size(); }
  std::size_t num_classes() const { return config_.num_classes; }

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;

  /// Indices into parameters() owned by block `exit` (1-based) or its head.
  std::vector<std::size_t> block_parameter_indices(std::size_t exit) const;
  std::vector<std::size_t> head_parameter_indices(std::size_t exit) const;

  /// Input normalization; the returned variable feeds block 1.
  Var<T> stem(Tape<T>& tape, const Tensor<T>& x) const;
  /// Applies block `exit` (1-based) to the previous block's output.
  Var<T> block(Tape<T>& tape, std::size_t exit, Var<T> h, bool training, Rng* rng,
               ForwardCounter* counter = nullptr) const;
  /// Exit head `exit` (1-based) on block `exit`'s output; returns logits.
  Var<T> head(Tape<T>& tape, std::size_t exit, Var<T> h, ForwardCounter* counter = nullptr) const;

  /// One logits vector per exit; the trunk is evaluated once.
  std::vector<Var<T>> forward_all_exits(Tape<T>& tape, const Tensor<T>& x, bool training, Rng* rng,
                                        ForwardCounter* counter = nullptr) const;
  /// Blocks 1..exit and head `exit` only (inference mode).
  Var<T> forward_until_exit(Tape<T>& tape, const Tensor<T>& x, std::size_t exit,
                            ForwardCounter* counter = nullptr) const;

  /// Inference-mode logits of every exit, without recording a graph.
  std::vector<Tensor<T>> predict_all(const Tensor<T>& x) const;

  /// l2_rate * sum of squared conv/dense weights.
  Var<T> l2_penalty(Tape<T>& tape) const;
  double l2_penalty_value() const;

  /// Multiply-accumulates of blocks 1..exit plus head `exit`.
  std::size_t macs_until_exit(std::size_t exit) const;

  void zero_grad();

  template <typename U>
  BasicMultiExitNet<U> cast() const {
    BasicMultiExitNet<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i].value = params_[i].value.template cast<U>();
    }
    return out;
  }

 private:
  struct Block {
    std::size_t conv_w, conv_b, norm_gain, norm_shift, slopes;
    BlockSpec spec;
  };
  struct Head {
    std::size_t fc_w, fc_b, slopes, out_w, out_b;
  };

  std::size_t add_param(std::string name, Shape shape, bool decay);
  Var<T> bind(Tape<T>& tape, std::size_t idx) const;
  void check_exit(std::size_t exit) const;
  void check_input(const Tensor<T>& x) const;

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::size_t in_gain_ = 0, in_shift_ = 0;
  std::vector<Block> blocks_;
  std::vector<Head> heads_;
};

using MultiExitNet = BasicMultiExitNet<float>;

/// Validates the config, then builds a seeded network.
MultiExitNet build_network(const ModelConfig& config);

}  // namespace cetx
