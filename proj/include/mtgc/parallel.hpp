// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mtgc {

/// Fixed set of worker threads running index-parallel loops. Each index is
/// executed exactly once; results must be written to per-index slots. When
/// several indices throw, the exception of the lowest index is rethrown so
/// failures are reported identically for any thread count.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t threads) : n_threads_(threads == 0 ? 1 : threads) {
    for (std::size_t w = 1; w < n_threads_; ++w) workers_.emplace_back([this] { worker_loop(); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
  }

  std::size_t threads() const noexcept { return n_threads_; }

  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n_threads_ == 1 || n <= 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    {
      std::lock_guard lock(mu_);
      job_ = &fn;
      n_ = n;
      next_.store(0);
      pending_ = workers_.size();
      errors_.assign(n, nullptr);
      ++generation_;
    }
    cv_.notify_all();
    run_indices();
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
    for (auto& e : errors_)
      if (e) std::rethrow_exception(e);
  }

 private:
  void run_indices() {
    for (;;) {
      const std::size_t i = next_.fetch_add(1);
      if (i >= n_) return;
      try {
        (*job_)(i);
      } catch (...) {
        errors_[i] = std::current_exception();
      }
    }
  }

  void worker_loop() {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
      }
      run_indices();
      {
        std::lock_guard lock(mu_);
        --pending_;
      }
      done_cv_.notify_one();
    }
  }

  std::size_t n_threads_;
  std::vector<std::jthread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t n_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
  std::vector<std::exception_ptr> errors_;
};

}  // namespace mtgc
