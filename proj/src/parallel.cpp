#include "mixdd/parallel.hpp"

namespace mixdd {

namespace {
std::atomic<int> g_threads{std::max(1, static_cast<int>(std::thread::hardware_concurrency()))};
}

int num_threads() { return g_threads.load(); }

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }

} // namespace mixdd
