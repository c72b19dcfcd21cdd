#include "mpfio/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mpfio {

namespace {

std::atomic<int>& workers_setting() {
  static std::atomic<int> value{0};
  return value;
}

}  // namespace

int worker_count() {
  int w = workers_setting().load();
  if (w > 0) return w;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void set_worker_count(int workers) { workers_setting().store(workers < 0 ? 0 : workers); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk) {
  if (n == 0) return;
  std::size_t workers = static_cast<std::size_t>(worker_count());
  min_chunk = std::max<std::size_t>(1, min_chunk);
  if (workers <= 1 || n <= min_chunk) {
    body(0, n);
    return;
  }
  std::size_t chunks = std::min(workers * 4, (n + min_chunk - 1) / min_chunk);
  std::size_t step = (n + chunks - 1) / chunks;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;

  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      std::size_t b = c * step;
      std::size_t e = std::min(n, b + step);
      if (b >= e) continue;
      try {
        body(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> g(failure_lock);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  std::vector<std::thread> pool;
  std::size_t spawn = std::min(workers, chunks) - 1;
  pool.reserve(spawn);
  for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mpfio
