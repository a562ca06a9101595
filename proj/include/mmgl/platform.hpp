#pragma once

namespace mmgl {

// Keeps large freed blocks on the heap (glibc) so the N x N temporaries of
// every epoch are not mapped and unmapped afresh. No-op elsewhere.
void tune_allocator();

}  // namespace mmgl
