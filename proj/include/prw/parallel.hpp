#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace prw {

enum class ExecMode { Serial, Parallel };

// Execution options threaded through every data-parallel fan-out (variant
// scoring, per-task evaluation, batch rollouts, corpus metric scoring).
// Serial is the reference path: results must be byte-identical to Parallel,
// which the test suite asserts and the bench tool times.
struct RunOptions {
  ExecMode mode = ExecMode::Parallel;
  int threads = 0;  // 0 = OpenMP default

  static RunOptions serial() { return {ExecMode::Serial, 0}; }
};

// Index loop over [0, n). Bodies write only to their own slot of a
// preallocated output, so scheduling never changes results. Exceptions are
// captured per index and the lowest-index one is rethrown after the loop,
// which keeps error reporting deterministic as well.
template <class Fn>
void for_each_index(std::size_t n, const RunOptions& opt, Fn&& fn) {
  if (n == 0) return;
#ifdef _OPENMP
  if (opt.mode == ExecMode::Parallel && n > 1) {
    std::vector<std::exception_ptr> errors(n);
    const int threads = opt.threads > 0 ? opt.threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    return;
  }
#endif
  (void)opt;
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace prw
