#pragma once

#include <cstdint>
#include <functional>

namespace gw {

// Static partition of [0, n) across worker threads. Every index is handled by
// exactly one thread with the same inner iteration order regardless of the
// thread count, so results stay bitwise deterministic.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

void set_num_threads(int n);
int num_threads();

}  // namespace gw
