#pragma once

#include <cstddef>

// Raw dense kernels behind the tape ops. Row-major, no allocation except
// where noted. Every reduction runs in a fixed order so results are
// bit-reproducible.
namespace supermask::kernels {

/// C[m x n] (+)= op(A) * B[k x n], op(A) = A[m x k] or, with trans_a, A[k x m]^T.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool trans_a, const T* b, T* c,
          bool accumulate);

/// C[m x n] (+)= A[m x k] * B[n x k]^T. Transposes B into a scratch buffer.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst);

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t kernel, stride, pad;
    std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
    std::size_t patch_size() const { return channels * kernel * kernel; }
};

/// One image [C, H, W] -> columns [C*k*k, Ho*Wo].
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* cols);

/// Adjoint of im2col: accumulates columns back into image [C, H, W].
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* image);

} // namespace supermask::kernels
