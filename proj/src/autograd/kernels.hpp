// Raw numeric kernels behind the autograd ops. No graph awareness.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace xfer::ag::kernels {

struct ConvDims {
    std::size_t batch = 0;
    std::size_t in_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;

    std::size_t out_height() const { return height - kernel + 1; }
    std::size_t out_width() const { return width - kernel + 1; }
    std::size_t patch() const { return in_channels * kernel * kernel; }
};

/// C[m,n] = op(A) op(B), where op(A) is [m,k] and op(B) is [k,n].
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool transpose_a, bool transpose_b);

void conv2d(std::span<const double> x, std::span<const double> w, std::span<double> y,
            const ConvDims& d);
void conv2d_input_grad(std::span<const double> g, std::span<const double> w,
                       std::span<double> dx, const ConvDims& d);
void conv2d_weight_grad(std::span<const double> x, std::span<const double> g,
                        std::span<double> dw, const ConvDims& d);

/// 2x2/2 max pooling on [N,C,H,W]. argmax receives flat input indices.
void maxpool2x2(std::span<const double> x, std::size_t planes, std::size_t height,
                std::size_t width, std::span<double> y, std::span<std::uint32_t> argmax);

}  // namespace xfer::ag::kernels
