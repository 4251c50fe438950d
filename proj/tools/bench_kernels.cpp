#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "stochinv/batch.hpp"
#include "stochinv/forward_model.hpp"
#include "stochinv/pce.hpp"
#include "stochinv/rng.hpp"

namespace {

double time_seconds(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

double best_of(int reps, const std::function<void()>& fn) {
  double best = time_seconds(fn);
  for (int r = 1; r < reps; ++r) best = std::min(best, time_seconds(fn));
  return best;
}

Eigen::MatrixXd box_points(const stochinv::Box& box, Eigen::Index n,
                           stochinv::RandomSource& rng) {
  Eigen::MatrixXd xs(box.dim(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < box.dim(); ++j) {
      xs(j, i) = rng.uniform(box.lo(j), box.hi(j));
    }
  }
  return xs;
}

}  // namespace

int main() {
  using namespace stochinv;

#ifdef _OPENMP
  std::printf("openmp enabled, max threads %d\n\n", omp_get_max_threads());
#else
  std::printf("openmp disabled, serial build\n\n");
#endif

  const ToyCyclicModel model;
  RandomSource rng(99, 0);

  std::printf("%-28s %10s %12s %12s %9s\n", "kernel", "n", "serial [s]",
              "parallel [s]", "speedup");
  for (const Eigen::Index n : {256, 1024, 4096}) {
    const Eigen::MatrixXd xs = box_points(model.feasible_domain(), n, rng);
    Eigen::MatrixXd ser, par;
    const double ts = best_of(3, [&] { ser = eval_batch_serial(model, xs); });
    const double tp = best_of(3, [&] { par = eval_batch(model, xs); });
    if ((ser - par).cwiseAbs().maxCoeff() != 0.0) {
      std::printf("eval_batch mismatch at n=%ld\n", static_cast<long>(n));
      return 1;
    }
    std::printf("%-28s %10ld %12.4f %12.4f %8.2fx\n", "eval_batch(toy_cyclic)",
                static_cast<long>(n), ts, tp, ts / tp);
  }

  const MultiIndexSet indices = MultiIndexSet::total_degree(6, 5);
  Standardization std_map;
  std_map.shift = Eigen::VectorXd::Constant(6, 0.5);
  std_map.scale = Eigen::VectorXd::Constant(6, 0.2887);
  for (const Eigen::Index n : {2048, 8192, 32768}) {
    const Eigen::MatrixXd xs = box_points(model.feasible_domain(), n, rng);
    Eigen::MatrixXd ser, par;
    const double ts =
        best_of(3, [&] { ser = pce_design_matrix_serial(indices, std_map, xs); });
    const double tp =
        best_of(3, [&] { par = pce_design_matrix(indices, std_map, xs); });
    if ((ser - par).cwiseAbs().maxCoeff() != 0.0) {
      std::printf("pce_design_matrix mismatch at n=%ld\n", static_cast<long>(n));
      return 1;
    }
    std::printf("%-28s %10ld %12.4f %12.4f %8.2fx\n",
                "pce_design_matrix(d6 p5)", static_cast<long>(n), ts, tp,
                ts / tp);
  }
  return 0;
}
