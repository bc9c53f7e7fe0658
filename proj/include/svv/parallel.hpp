#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "svv/errors.hpp"

namespace svv {

inline unsigned effective_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

inline std::size_t num_chunks(std::size_t count, std::size_t chunk_size) {
  if (chunk_size == 0) throw InvalidArgument("chunk_size must be positive");
  return (count + chunk_size - 1) / chunk_size;
}

// Runs fn(chunk_index, begin, end) over [0, count) split into fixed-size chunks.
// Chunks are claimed through an atomic counter, so any thread may run any chunk,
// but the chunk boundaries themselves never depend on the thread count.  Callers
// that accumulate results must write them into per-chunk slots and merge in
// chunk-index order; that discipline is what makes reductions reproducible.
template <class Fn>
void parallel_chunks(std::size_t count, std::size_t chunk_size, unsigned threads, Fn&& fn) {
  const std::size_t chunks = num_chunks(count, chunk_size);
  if (count == 0) return;
  const unsigned nthreads = std::min<std::size_t>(effective_threads(threads), chunks);

  if (nthreads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t b = c * chunk_size;
      const std::size_t e = std::min(count, b + chunk_size);
      fn(c, b, e);
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&]() {
    for (;;) {
      const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= chunks) return;
      const std::size_t b = c * chunk_size;
      const std::size_t e = std::min(count, b + chunk_size);
      try {
        fn(c, b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (unsigned i = 0; i < nthreads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace svv
