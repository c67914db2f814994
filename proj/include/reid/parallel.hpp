#pragma once

namespace reid {

// Caps the number of OpenMP workers used by the row-parallel kernels.
// n <= 0 restores the library default (all hardware threads). Every kernel
// produces bit-identical output for any worker count.
void set_max_workers(int n);
int max_workers();

}  // namespace reid
