#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace purelab {

// Work is always split into the same fixed chunk grid and partial results are
// combined in chunk order, so floating-point totals are bitwise identical for
// every thread count (threads only change who computes which chunk).
inline constexpr int kChunkGrid = 64;

struct ChunkRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
};

inline std::vector<ChunkRange> chunk_ranges(std::int64_t n) {
  std::vector<ChunkRange> out;
  if (n <= 0) return out;
  std::int64_t chunks = std::min<std::int64_t>(kChunkGrid, n);
  std::int64_t base = n / chunks, extra = n % chunks;
  std::int64_t pos = 0;
  for (std::int64_t c = 0; c < chunks; ++c) {
    std::int64_t len = base + (c < extra ? 1 : 0);
    out.push_back({pos, pos + len});
    pos += len;
  }
  return out;
}

// Runs fn(chunk_index, begin, end) over the fixed chunk grid.
// fn must only write to chunk-private or chunk-indexed storage.
inline void parallel_chunks(std::int64_t n, int threads,
                            const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  auto ranges = chunk_ranges(n);
  if (ranges.empty()) return;
  int nthreads = std::max(1, threads);
  if (nthreads == 1 || ranges.size() == 1) {
    for (int c = 0; c < static_cast<int>(ranges.size()); ++c)
      fn(c, ranges[c].begin, ranges[c].end);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::atomic<int> next{0};
  int total = static_cast<int>(ranges.size());
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        int c = next.fetch_add(1);
        if (c >= total) break;
        fn(c, ranges[c].begin, ranges[c].end);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace purelab
