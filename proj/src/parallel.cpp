#include "dcnn/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace dcnn {

void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (count == 0) return;
  std::size_t workers = std::min(hw, count / std::max<std::size_t>(grain, 1));
  if (workers <= 1) {
    fn(0, count);
    return;
  }
  const std::size_t block = (count + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(count, begin + block);
    if (begin >= end) break;
    threads.emplace_back(fn, begin, end);
  }
  fn(0, std::min(count, block));
  for (auto& t : threads) t.join();
}

}  // namespace dcnn
