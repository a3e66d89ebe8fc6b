#include "kernels.hpp"

#include <algorithm>

#include <Eigen/Core>

namespace xfer::ag::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

// Patch matrix [C*K*K, Ho*Wo] for one sample; column p holds the receptive field of output pixel p.
void im2col(const double* x, const ConvDims& d, RowMat& col) {
    const std::size_t ho = d.out_height();
    const std::size_t wo = d.out_width();
    const std::size_t k = d.kernel;
    col.resize(static_cast<Eigen::Index>(d.patch()), static_cast<Eigen::Index>(ho * wo));
    double* dst = col.data();
    for (std::size_t c = 0; c < d.in_channels; ++c) {
        const double* plane = x + c * d.height * d.width;
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
                for (std::size_t i = 0; i < ho; ++i) {
                    const double* src = plane + (i + a) * d.width + b;
                    for (std::size_t j = 0; j < wo; ++j) *dst++ = src[j];
                }
    }
}

void col2im_add(const RowMat& col, double* dx, const ConvDims& d) {
    const std::size_t ho = d.out_height();
    const std::size_t wo = d.out_width();
    const std::size_t k = d.kernel;
    const double* src = col.data();
    for (std::size_t c = 0; c < d.in_channels; ++c) {
        double* plane = dx + c * d.height * d.width;
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
                for (std::size_t i = 0; i < ho; ++i) {
                    double* dst = plane + (i + a) * d.width + b;
                    for (std::size_t j = 0; j < wo; ++j) dst[j] += *src++;
                }
    }
}

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool transpose_a, bool transpose_b) {
    const auto ra = static_cast<Eigen::Index>(transpose_a ? k : m);
    const auto ca = static_cast<Eigen::Index>(transpose_a ? m : k);
    const auto rb = static_cast<Eigen::Index>(transpose_b ? n : k);
    const auto cb = static_cast<Eigen::Index>(transpose_b ? k : n);
    ConstMap A(a.data(), ra, ca);
    ConstMap B(b.data(), rb, cb);
    Map C(c.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    if (!transpose_a && !transpose_b) C.noalias() = A * B;
    else if (transpose_a && !transpose_b) C.noalias() = A.transpose() * B;
    else if (!transpose_a && transpose_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
}

void conv2d(std::span<const double> x, std::span<const double> w, std::span<double> y,
            const ConvDims& d) {
    const std::size_t pixels = d.out_height() * d.out_width();
    ConstMap W(w.data(), idx(d.out_channels), idx(d.patch()));
    RowMat col;
    for (std::size_t n = 0; n < d.batch; ++n) {
        im2col(x.data() + n * d.in_channels * d.height * d.width, d, col);
        Map Y(y.data() + n * d.out_channels * pixels, idx(d.out_channels), idx(pixels));
        Y.noalias() = W * col;
    }
}

void conv2d_input_grad(std::span<const double> g, std::span<const double> w,
                       std::span<double> dx, const ConvDims& d) {
    const std::size_t pixels = d.out_height() * d.out_width();
    ConstMap W(w.data(), idx(d.out_channels), idx(d.patch()));
    std::fill(dx.begin(), dx.end(), 0.0);
    RowMat col(idx(d.patch()), idx(pixels));
    for (std::size_t n = 0; n < d.batch; ++n) {
        ConstMap G(g.data() + n * d.out_channels * pixels, idx(d.out_channels), idx(pixels));
        col.noalias() = W.transpose() * G;
        col2im_add(col, dx.data() + n * d.in_channels * d.height * d.width, d);
    }
}

void conv2d_weight_grad(std::span<const double> x, std::span<const double> g,
                        std::span<double> dw, const ConvDims& d) {
    const std::size_t pixels = d.out_height() * d.out_width();
    Map DW(dw.data(), idx(d.out_channels), idx(d.patch()));
    DW.setZero();
    RowMat col;
    for (std::size_t n = 0; n < d.batch; ++n) {
        im2col(x.data() + n * d.in_channels * d.height * d.width, d, col);
        ConstMap G(g.data() + n * d.out_channels * pixels, idx(d.out_channels), idx(pixels));
        DW.noalias() += G * col.transpose();
    }
}

void maxpool2x2(std::span<const double> x, std::size_t planes, std::size_t height,
                std::size_t width, std::span<double> y, std::span<std::uint32_t> argmax) {
    const std::size_t ho = height / 2;
    const std::size_t wo = width / 2;
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t base = p * height * width;
        for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
                std::size_t best = base + 2 * i * width + 2 * j;
                // Row-major scan with strict '>' keeps the lowest flat index on ties.
                for (std::size_t a = 0; a < 2; ++a)
                    for (std::size_t b = 0; b < 2; ++b) {
                        const std::size_t idx = base + (2 * i + a) * width + 2 * j + b;
                        if (x[idx] > x[best]) best = idx;
                    }
                const std::size_t out = (p * ho + i) * wo + j;
                y[out] = x[best];
                argmax[out] = static_cast<std::uint32_t>(best);
            }
        }
    }
}

}  // namespace xfer::ag::kernels
