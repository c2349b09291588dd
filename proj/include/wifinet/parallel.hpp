#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace wifinet {

inline int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

inline int resolve_threads(int requested) {
  return requested <= 0 ? hardware_threads() : requested;
}

struct ChunkRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
};

// Fixed chunk count: floating-point reductions that accumulate per chunk and
// combine in chunk order give identical results for any thread count.
inline constexpr int kParallelChunks = 8;

inline std::vector<ChunkRange> make_chunks(std::int64_t n, int max_chunks = kParallelChunks) {
  std::vector<ChunkRange> chunks;
  if (n <= 0) return chunks;
  const std::int64_t n_chunks = std::min<std::int64_t>(n, max_chunks);
  const std::int64_t base = n / n_chunks;
  const std::int64_t rem = n % n_chunks;
  std::int64_t pos = 0;
  for (std::int64_t i = 0; i < n_chunks; ++i) {
    const std::int64_t len = base + (i < rem ? 1 : 0);
    chunks.push_back({pos, pos + len});
    pos += len;
  }
  return chunks;
}

// Runs fn(chunk_index, begin, end) for every chunk, using up to `threads`
// workers. Chunks may execute in any order; callers that reduce must write
// into per-chunk buffers and combine serially afterwards.
template <class Fn>
void run_chunks(const std::vector<ChunkRange>& chunks, int threads, Fn&& fn) {
  const int n = static_cast<int>(chunks.size());
  if (n == 0) return;
  threads = std::min(resolve_threads(threads), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i, chunks[i].begin, chunks[i].end);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      fn(i, chunks[i].begin, chunks[i].end);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 0; t < threads - 1; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

template <class Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
  run_chunks(make_chunks(n), threads,
             [&](int, std::int64_t b, std::int64_t e) {
               for (std::int64_t i = b; i < e; ++i) fn(i);
             });
}

}  // namespace wifinet
