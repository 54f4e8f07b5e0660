#include "supermask/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <type_traits>
#include <utility>
#include <vector>

namespace supermask::kernels {

namespace {

constexpr std::size_t kColumnBlock = 512;

template <typename T>
inline T a_at(const T* a, bool trans, std::size_t m, std::size_t k, std::size_t i, std::size_t p) {
    return trans ? a[p * m + i] : a[i * k + p];
}

/// Output columns [lo, hi) whose input column ox * stride + kx - pad is in range.
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
    const std::size_t ow = g.out_width();
    std::size_t lo = 0;
    while (lo < ow && lo * g.stride + kx < g.pad) ++lo;
    std::size_t hi = lo;
    while (hi < ow && hi * g.stride + kx < g.pad + g.width) ++hi;
    return {lo, hi};
}

} // namespace

namespace {

// Rows [i0, m) of C, four at a time. A 4 x kTile block of C stays in
// registers for the whole p loop; every element still accumulates over p in
// ascending order, so blocking never changes results.
template <typename T>
void gemm_rows(std::size_t i0, std::size_t m, std::size_t n, std::size_t k, const T* a, bool trans_a,
               const T* b, T* c) {
    constexpr std::size_t kTile = 16;
    std::vector<T> apack(4 * k);
    std::size_t i = i0;
    for (; i + 4 <= m; i += 4) {
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t r = 0; r < 4; ++r) apack[p * 4 + r] = a_at(a, trans_a, m, k, i + r, p);
        }
        const T* __restrict ap = apack.data();
        std::size_t j = 0;
        for (; j + kTile <= n; j += kTile) {
            T acc[4][kTile];
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t jj = 0; jj < kTile; ++jj) acc[r][jj] = c[(i + r) * n + j + jj];
            }
            for (std::size_t p = 0; p < k; ++p) {
                const T* __restrict brow = b + p * n + j;
                const T a0 = ap[p * 4 + 0], a1 = ap[p * 4 + 1], a2 = ap[p * 4 + 2], a3 = ap[p * 4 + 3];
                for (std::size_t jj = 0; jj < kTile; ++jj) {
                    const T bv = brow[jj];
                    acc[0][jj] += a0 * bv;
                    acc[1][jj] += a1 * bv;
                    acc[2][jj] += a2 * bv;
                    acc[3][jj] += a3 * bv;
                }
            }
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t jj = 0; jj < kTile; ++jj) c[(i + r) * n + j + jj] = acc[r][jj];
            }
        }
        for (; j < n; ++j) {
            for (std::size_t r = 0; r < 4; ++r) {
                T acc = c[(i + r) * n + j];
                for (std::size_t p = 0; p < k; ++p) acc += ap[p * 4 + r] * b[p * n + j];
                c[(i + r) * n + j] = acc;
            }
        }
    }
    for (; i < m; ++i) {
        for (std::size_t j0 = 0; j0 < n; j0 += kColumnBlock) {
            const std::size_t width = std::min(n, j0 + kColumnBlock) - j0;
            T* __restrict crow = c + i * n + j0;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = a_at(a, trans_a, m, k, i, p);
                const T* __restrict brow = b + p * n + j0;
                for (std::size_t jj = 0; jj < width; ++jj) crow[jj] += av * brow[jj];
            }
        }
    }
}

#if defined(__AVX2__)
typedef float float8 __attribute__((vector_size(32)));

// 8 x 8 float tiles held in eight vector registers. Leftover columns and
// rows go through the generic path; per-element order matches it.
std::size_t gemm_float_tiles(std::size_t m, std::size_t n, std::size_t k, const float* a, bool trans_a,
                             const float* b, float* c) {
    constexpr std::size_t R = 8;
    std::vector<float> apack(R * k);
    std::size_t i = 0;
    for (; i + R <= m; i += R) {
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t r = 0; r < R; ++r) apack[p * R + r] = a_at(a, trans_a, m, k, i + r, p);
        }
        const float* ap = apack.data();
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            float8 acc[R];
            for (std::size_t r = 0; r < R; ++r) std::memcpy(&acc[r], c + (i + r) * n + j, sizeof(float8));
            for (std::size_t p = 0; p < k; ++p) {
                float8 bv;
                std::memcpy(&bv, b + p * n + j, sizeof(float8));
                for (std::size_t r = 0; r < R; ++r) acc[r] += ap[p * R + r] * bv;
            }
            for (std::size_t r = 0; r < R; ++r) std::memcpy(c + (i + r) * n + j, &acc[r], sizeof(float8));
        }
        for (; j < n; ++j) {
            for (std::size_t r = 0; r < R; ++r) {
                float acc = c[(i + r) * n + j];
                for (std::size_t p = 0; p < k; ++p) acc += ap[p * R + r] * b[p * n + j];
                c[(i + r) * n + j] = acc;
            }
        }
    }
    return i;
}
#endif

} // namespace

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool trans_a, const T* b, T* c,
          bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T{0});
    if (m == 0 || n == 0 || k == 0) return;
    std::size_t done = 0;
#if defined(__AVX2__)
    if constexpr (std::is_same_v<T, float>) done = gemm_float_tiles(m, n, k, a, trans_a, b, c);
#endif
    gemm_rows(done, m, n, k, a, trans_a, b, c);
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
    constexpr std::size_t kTile = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
        const std::size_t r1 = std::min(rows, r0 + kTile);
        for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
            const std::size_t c1 = std::min(cols, c0 + kTile);
            for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t col = c0; col < c1; ++col) dst[col * rows + r] = src[r * cols + col];
            }
        }
    }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    std::vector<T> bt(n * k);
    transpose(n, k, b, bt.data());
    gemm(m, n, k, a, false, bt.data(), c, accumulate);
}

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* cols) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const auto pad = static_cast<std::ptrdiff_t>(g.pad);
    const auto h = static_cast<std::ptrdiff_t>(g.height);
    const auto w = static_cast<std::ptrdiff_t>(g.width);
    std::size_t row = 0;
    for (std::size_t ch = 0; ch < g.channels; ++ch) {
        const T* plane = image + ch * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx, ++row) {
                T* out = cols + row * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
                    T* dst = out + oy * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, T{0});
                        continue;
                    }
                    const T* src = plane + iy * w;
                    const auto [lo, hi] = valid_columns(g, kx);
                    std::fill(dst, dst + lo, T{0});
                    if (g.stride == 1) {
                        std::copy(src + lo + kx - g.pad, src + hi + kx - g.pad, dst + lo);
                    } else {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + kx - g.pad];
                    }
                    std::fill(dst + hi, dst + ow, T{0});
                }
            }
        }
    }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* image) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const auto pad = static_cast<std::ptrdiff_t>(g.pad);
    const auto h = static_cast<std::ptrdiff_t>(g.height);
    const auto w = static_cast<std::ptrdiff_t>(g.width);
    std::size_t row = 0;
    for (std::size_t ch = 0; ch < g.channels; ++ch) {
        T* plane = image + ch * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx, ++row) {
                const T* in = cols + row * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = plane + iy * w;
                    const T* src = in + oy * ow;
                    const auto [lo, hi] = valid_columns(g, kx);
                    for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride + kx - g.pad] += src[ox];
                }
            }
        }
    }
}

#define SUPERMASK_INSTANTIATE(T)                                                                   \
    template void gemm<T>(std::size_t, std::size_t, std::size_t, const T*, bool, const T*, T*,    \
                          bool);                                                                   \
    template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
    template void transpose<T>(std::size_t, std::size_t, const T*, T*);                            \
    template void im2col<T>(const ConvGeometry&, const T*, T*);                                    \
    template void col2im<T>(const ConvGeometry&, const T*, T*);

SUPERMASK_INSTANTIATE(float)
SUPERMASK_INSTANTIATE(double)

#undef SUPERMASK_INSTANTIATE

} // namespace supermask::kernels
