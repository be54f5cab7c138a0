#pragma once

#include <functional>

namespace ep {

// Worker count used by parallel_for. Results never depend on it: every index
// writes only its own output slot.
void set_threads(int n);
int threads();

void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace ep
