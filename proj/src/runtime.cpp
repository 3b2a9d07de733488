#include "dvton/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dvton {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_TOP_PAD, 512 * 1024 * 1024);
#endif
}

}  // namespace dvton
