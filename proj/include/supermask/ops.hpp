#pragma once

#include "supermask/tape.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace supermask {

enum class BatchNormMode { train, eval };

/// Running statistics for a non-affine batch norm (no learned scale/shift).
template <typename T>
struct BatchNormState {
    static constexpr double kEpsilon = 1e-5;
    static constexpr double kMomentum = 0.1;

    explicit BatchNormState(std::size_t channels = 0)
        : running_mean(channels, T{0}), running_var(channels, T{1}) {}

    std::size_t channels() const noexcept { return running_mean.size(); }

    std::vector<T> running_mean;
    std::vector<T> running_var;
};

namespace ops {

/// a[m x k] * b[k x n].
template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b);

/// Fully connected layer without bias: x[N x in] * w[out x in]^T.
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w);

/// Cross-correlation of x[N,C,H,W] with w[F,C,k,k]; no bias.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::size_t stride = 1, std::size_t pad = 1);

/// max(0, x); the gradient at exactly 0 is 0.
template <typename T>
Var relu(Tape<T>& tape, Var x);

/// Non-overlapping max pooling over size x size windows of [N,C,H,W].
/// Ties resolve to the first element in row-major window order.
template <typename T>
Var max_pool2d(Tape<T>& tape, Var x, std::size_t size = 2);

/// Per-channel normalization over [N,C,H,W] (or [N,C]). Train mode uses the
/// biased batch variance and updates running stats (unbiased variance).
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, BatchNormState<T>& state, BatchNormMode mode);

/// [N, ...] -> [N, prod(...)].
template <typename T>
Var flatten(Tape<T>& tape, Var x);

/// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const std::int32_t> labels);

template <typename T>
Var sum(Tape<T>& tape, Var x);

/// Elementwise product of equal-shape tensors.
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

} // namespace ops
} // namespace supermask
