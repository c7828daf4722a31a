#pragma once

#include <omp.h>

namespace dsvt {

// Restores the previous OpenMP thread count on scope exit. n <= 0 keeps the
// current setting.
class ThreadScope {
 public:
  explicit ThreadScope(int n) : previous_(omp_get_max_threads()) {
    if (n > 0) omp_set_num_threads(n);
  }
  ~ThreadScope() { omp_set_num_threads(previous_); }
  ThreadScope(const ThreadScope&) = delete;
  ThreadScope& operator=(const ThreadScope&) = delete;

 private:
  int previous_;
};

}  // namespace dsvt
