#pragma once

namespace dvton {

// Keeps freed heap memory in the process so the large per-step temporaries of
// training reuse pages instead of faulting them in again.
void tune_allocator();

}  // namespace dvton
