#pragma once

// im2col-based convolution kernels shared by the Conv*, ConvTranspose2D and
// convolutional recurrent layers. Per-sample input layout is (D, C, H, W); the
// per-sample output layout is (Do, Co, Ho, Wo).

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "latentcast/nn/tensor.hpp"

namespace latentcast::nn::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
    std::size_t depth = 1, channels = 0, height = 0, width = 0;
    std::size_t out_channels = 0;
    std::size_t kd = 1, kh = 1, kw = 1;
    std::size_t sd = 1, sh = 1, sw = 1;
    std::size_t pd = 0, ph = 0, pw = 0;

    std::size_t out_depth() const { return (depth + 2 * pd - kd) / sd + 1; }
    std::size_t out_height() const { return (height + 2 * ph - kh) / sh + 1; }
    std::size_t out_width() const { return (width + 2 * pw - kw) / sw + 1; }
    std::size_t col_rows() const { return channels * kd * kh * kw; }
    std::size_t col_cols() const { return out_depth() * out_height() * out_width(); }
    std::size_t in_size() const { return depth * channels * height * width; }
    std::size_t out_size() const { return out_depth() * out_channels * out_height() * out_width(); }
    bool pointwise() const {
        return depth == 1 && kd == 1 && kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw == 0;
    }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
    const auto D = static_cast<std::ptrdiff_t>(g.depth), H = static_cast<std::ptrdiff_t>(g.height),
               W = static_cast<std::ptrdiff_t>(g.width);
    const std::size_t Do = g.out_depth(), Ho = g.out_height(), Wo = g.out_width();
    T* dst = cols;
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t a = 0; a < g.kd; ++a)
            for (std::size_t b = 0; b < g.kh; ++b)
                for (std::size_t e = 0; e < g.kw; ++e)
                    for (std::size_t od = 0; od < Do; ++od) {
                        const auto id = static_cast<std::ptrdiff_t>(od * g.sd + a) - static_cast<std::ptrdiff_t>(g.pd);
                        if (id < 0 || id >= D) {
                            std::fill(dst, dst + Ho * Wo, T{0});
                            dst += Ho * Wo;
                            continue;
                        }
                        for (std::size_t oh = 0; oh < Ho; ++oh) {
                            const auto ih =
                                static_cast<std::ptrdiff_t>(oh * g.sh + b) - static_cast<std::ptrdiff_t>(g.ph);
                            if (ih < 0 || ih >= H) {
                                std::fill(dst, dst + Wo, T{0});
                                dst += Wo;
                                continue;
                            }
                            const T* src = x + ((static_cast<std::size_t>(id) * g.channels + c) * g.height +
                                                static_cast<std::size_t>(ih)) * g.width;
                            for (std::size_t ow = 0; ow < Wo; ++ow) {
                                const auto iw =
                                    static_cast<std::ptrdiff_t>(ow * g.sw + e) - static_cast<std::ptrdiff_t>(g.pw);
                                *dst++ = (iw >= 0 && iw < W) ? src[iw] : T{0};
                            }
                        }
                    }
}

/// Scatter-adds columns back into an input-shaped buffer (the adjoint of im2col).
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
    const auto D = static_cast<std::ptrdiff_t>(g.depth), H = static_cast<std::ptrdiff_t>(g.height),
               W = static_cast<std::ptrdiff_t>(g.width);
    const std::size_t Do = g.out_depth(), Ho = g.out_height(), Wo = g.out_width();
    const T* src = cols;
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t a = 0; a < g.kd; ++a)
            for (std::size_t b = 0; b < g.kh; ++b)
                for (std::size_t e = 0; e < g.kw; ++e)
                    for (std::size_t od = 0; od < Do; ++od) {
                        const auto id = static_cast<std::ptrdiff_t>(od * g.sd + a) - static_cast<std::ptrdiff_t>(g.pd);
                        if (id < 0 || id >= D) {
                            src += Ho * Wo;
                            continue;
                        }
                        for (std::size_t oh = 0; oh < Ho; ++oh) {
                            const auto ih =
                                static_cast<std::ptrdiff_t>(oh * g.sh + b) - static_cast<std::ptrdiff_t>(g.ph);
                            if (ih < 0 || ih >= H) {
                                src += Wo;
                                continue;
                            }
                            T* row = x + ((static_cast<std::size_t>(id) * g.channels + c) * g.height +
                                          static_cast<std::size_t>(ih)) * g.width;
                            for (std::size_t ow = 0; ow < Wo; ++ow, ++src) {
                                const auto iw =
                                    static_cast<std::ptrdiff_t>(ow * g.sw + e) - static_cast<std::ptrdiff_t>(g.pw);
                                if (iw >= 0 && iw < W) row[iw] += *src;
                            }
                        }
                    }
}

// (Do, Co, HW) <-> (Co, Do*HW) for depth-producing convolutions.
template <typename T>
void depth_major_to_channel_major(const T* src, T* dst, std::size_t depth, std::size_t channels, std::size_t hw) {
    for (std::size_t d = 0; d < depth; ++d)
        for (std::size_t c = 0; c < channels; ++c)
            std::copy_n(src + (d * channels + c) * hw, hw, dst + (c * depth + d) * hw);
}

template <typename T>
void channel_major_to_depth_major(const T* src, T* dst, std::size_t depth, std::size_t channels, std::size_t hw) {
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t d = 0; d < depth; ++d)
            std::copy_n(src + (c * depth + d) * hw, hw, dst + (d * channels + c) * hw);
}

/// y = conv(x, w) + bias for `batch` samples; bias may be null.
template <typename T>
void conv_forward(const ConvGeometry& g, std::size_t batch, const T* x, const T* w, const T* bias, T* y) {
    const auto R = static_cast<Eigen::Index>(g.col_rows());
    const auto P = static_cast<Eigen::Index>(g.col_cols());
    const auto Co = static_cast<Eigen::Index>(g.out_channels);
    const std::size_t Do = g.out_depth();
    ConstMatMap<T> wm(w, Co, R);
    AlignedVector<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(R * P));
    AlignedVector<T> tmp(Do > 1 ? static_cast<std::size_t>(Co * P) : 0);
    for (std::size_t n = 0; n < batch; ++n) {
        const T* xn = x + n * g.in_size();
        T* yn = y + n * g.out_size();
        const T* cptr = xn;
        if (!g.pointwise()) {
            im2col(g, xn, cols.data());
            cptr = cols.data();
        }
        ConstMatMap<T> cm(cptr, R, P);
        MatMap<T> out(Do > 1 ? tmp.data() : yn, Co, P);
        out.noalias() = wm * cm;
        if (bias) {
            for (Eigen::Index c = 0; c < Co; ++c) out.row(c).array() += bias[c];
        }
        if (Do > 1) channel_major_to_depth_major(tmp.data(), yn, Do, g.out_channels, g.out_height() * g.out_width());
    }
}

/// Accumulates weight (and bias) gradients; overwrites gx when it is non-null.
template <typename T>
void conv_backward(const ConvGeometry& g, std::size_t batch, const T* x, const T* w, const T* gy, T* gx, T* gw,
                   T* gb) {
    const auto R = static_cast<Eigen::Index>(g.col_rows());
    const auto P = static_cast<Eigen::Index>(g.col_cols());
    const auto Co = static_cast<Eigen::Index>(g.out_channels);
    const std::size_t Do = g.out_depth();
    ConstMatMap<T> wm(w, Co, R);
    MatMap<T> gwm(gw, Co, R);
    AlignedVector<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(R * P));
    AlignedVector<T> dcols(gx && !g.pointwise() ? static_cast<std::size_t>(R * P) : 0);
    AlignedVector<T> tmp(Do > 1 ? static_cast<std::size_t>(Co * P) : 0);
    for (std::size_t n = 0; n < batch; ++n) {
        const T* xn = x + n * g.in_size();
        const T* gyn = gy + n * g.out_size();
        if (Do > 1) {
            depth_major_to_channel_major(gyn, tmp.data(), Do, g.out_channels, g.out_height() * g.out_width());
            gyn = tmp.data();
        }
        ConstMatMap<T> gm(gyn, Co, P);
        if (gb) {
            for (Eigen::Index c = 0; c < Co; ++c) gb[c] += gm.row(c).sum();
        }
        const T* cptr = xn;
        if (!g.pointwise()) {
            im2col(g, xn, cols.data());
            cptr = cols.data();
        }
        ConstMatMap<T> cm(cptr, R, P);
        gwm.noalias() += gm * cm.transpose();
        if (gx) {
            T* gxn = gx + n * g.in_size();
            if (g.pointwise()) {
                MatMap<T>(gxn, R, P).noalias() = wm.transpose() * gm;
            } else {
                MatMap<T>(dcols.data(), R, P).noalias() = wm.transpose() * gm;
                std::fill(gxn, gxn + g.in_size(), T{0});
                col2im(g, dcols.data(), gxn);
            }
        }
    }
}

} // namespace latentcast::nn::detail
