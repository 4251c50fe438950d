#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Dense>

#include "stochinv/forward_model.hpp"

namespace stochinv {

// Runs fn(i) for every i in [0, n). Iterations are spread across OpenMP
// threads; each index owns its output slot, so results match the serial
// loop bit for bit at any thread count. Every index is attempted even if
// some throw; the exception from the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Model responses for a batch of inputs, one column per input column.
Eigen::MatrixXd eval_batch(const ForwardModel& model,
                           const Eigen::MatrixXd& xs);

// Reference loop the parallel kernel is checked against.
Eigen::MatrixXd eval_batch_serial(const ForwardModel& model,
                                  const Eigen::MatrixXd& xs);

}  // namespace stochinv
