#include "stochinv/batch.hpp"

#include <exception>

#include "stochinv/error.hpp"

namespace stochinv {

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::exception_ptr err;
  std::size_t err_index = n;
  const auto record = [&](std::size_t i) {
    if (i < err_index) {
      err_index = i;
      err = std::current_exception();
    }
  };
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(stochinv_parallel_for_err)
      record(static_cast<std::size_t>(i));
    }
  }
#else
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      record(i);
    }
  }
#endif
  if (err) std::rethrow_exception(err);
}

Eigen::MatrixXd eval_batch(const ForwardModel& model,
                           const Eigen::MatrixXd& xs) {
  if (xs.rows() != model.input_dim()) {
    throw DataError("eval_batch: input rows do not match model '" +
                    model.name() + "' input dimension");
  }
  Eigen::MatrixXd out(model.output_dim(), xs.cols());
  parallel_for(static_cast<std::size_t>(xs.cols()), [&](std::size_t i) {
    const auto j = static_cast<Eigen::Index>(i);
    out.col(j) = model.eval(xs.col(j));
  });
  return out;
}

Eigen::MatrixXd eval_batch_serial(const ForwardModel& model,
                                  const Eigen::MatrixXd& xs) {
  if (xs.rows() != model.input_dim()) {
    throw DataError("eval_batch_serial: input rows do not match model '" +
                    model.name() + "' input dimension");
  }
  Eigen::MatrixXd out(model.output_dim(), xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    out.col(j) = model.eval(xs.col(j));
  }
  return out;
}

}  // namespace stochinv
