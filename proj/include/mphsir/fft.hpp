#pragma once

// Minimal complex FFT used by the predictor's Fourier branch. Iterative
// radix-2 for power-of-two lengths, direct DFT otherwise (desk-scale inputs
// are small, so the quadratic fallback only matters for odd-sized cubes fed
// through the CLI).

#include <complex>
#include <cstdint>
#include <vector>

namespace mphsir::fft {

template <typename S>
using CVec = std::vector<std::complex<S>>;

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place transform of length n with sign = -1 (forward) or +1 (inverse
// kernel, unnormalized).
template <typename S>
void transform(std::complex<S>* x, int n, int sign) {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    if (n <= 1) return;
    if (is_pow2(n)) {
        // Bit-reversal permutation.
        for (int i = 1, j = 0; i < n; ++i) {
            int bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(x[i], x[j]);
        }
        for (int len = 2; len <= n; len <<= 1) {
            const double ang = sign * kTwoPi / len;
            const std::complex<S> wl(static_cast<S>(std::cos(ang)), static_cast<S>(std::sin(ang)));
            for (int i = 0; i < n; i += len) {
                std::complex<S> w(1, 0);
                for (int k = 0; k < len / 2; ++k) {
                    std::complex<S> u = x[i + k];
                    std::complex<S> v = x[i + k + len / 2] * w;
                    x[i + k] = u + v;
                    x[i + k + len / 2] = u - v;
                    w *= wl;
                }
            }
        }
        return;
    }
    // Direct DFT fallback.
    CVec<S> out(static_cast<size_t>(n));
    for (int f = 0; f < n; ++f) {
        std::complex<S> acc(0, 0);
        for (int t = 0; t < n; ++t) {
            const double ang = sign * kTwoPi * f * t / n;
            acc += x[t] * std::complex<S>(static_cast<S>(std::cos(ang)), static_cast<S>(std::sin(ang)));
        }
        out[static_cast<size_t>(f)] = acc;
    }
    for (int i = 0; i < n; ++i) x[i] = out[static_cast<size_t>(i)];
}

// Unnormalized 2-d transform of an h x w complex field stored row-major.
template <typename S>
void transform2d(std::complex<S>* x, int h, int w, int sign) {
    for (int r = 0; r < h; ++r) transform(x + static_cast<std::int64_t>(r) * w, w, sign);
    CVec<S> col(static_cast<size_t>(h));
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) col[static_cast<size_t>(r)] = x[static_cast<std::int64_t>(r) * w + c];
        transform(col.data(), h, sign);
        for (int r = 0; r < h; ++r) x[static_cast<std::int64_t>(r) * w + c] = col[static_cast<size_t>(r)];
    }
}

}  // namespace mphsir::fft
