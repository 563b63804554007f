#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace tsdfslam {

// Splits [0, count) into contiguous static ranges, one per worker thread.
// With threads <= 1 the function runs inline. Results that need reduction
// should be written into per-chunk slots and combined afterwards in index
// order so that the outcome does not depend on the thread count.
template <typename Fn>
void ParallelFor(std::size_t count, int threads, const Fn& fn) {
    if (count == 0) return;
    if (threads <= 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// Evaluates chunk_fn(c) for every chunk in parallel, then folds the partial
// results into init sequentially in chunk order. The fixed fold order makes
// floating-point reductions independent of the thread count.
template <typename Acc, typename ChunkFn, typename Combine>
Acc OrderedReduce(std::size_t chunks, int threads, Acc init, const ChunkFn& chunk_fn,
                  const Combine& combine) {
    std::vector<Acc> partial(chunks, init);
    ParallelFor(chunks, threads, [&](std::size_t c) { partial[c] = chunk_fn(c); });
    Acc acc = init;
    for (std::size_t c = 0; c < chunks; ++c) acc = combine(acc, partial[c]);
    return acc;
}

}  // namespace tsdfslam
