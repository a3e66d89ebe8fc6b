#pragma once

#include <initializer_list>

#include "xfer/autograd.hpp"

namespace xfer::ag::detail {

/// Graph the result should be recorded on, or nullptr for a constant result.
Graph* recording_graph(std::initializer_list<const Tensor*> inputs);

/// Validates finiteness and either records a node or returns a constant.
Tensor finish(OpKind kind, std::initializer_list<const Tensor*> inputs, Shape shape,
              std::vector<double> values, Attrs attrs = {});

}  // namespace xfer::ag::detail
