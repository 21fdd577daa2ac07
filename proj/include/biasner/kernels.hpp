#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

// Dense double-precision kernels used by the transformer. Every ISA variant
// implements the same table; the scalar one is the reference the others are
// tested against. Results may differ between ISAs by summation order only,
// and are bitwise stable for a fixed ISA.
namespace biasner::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, size_t n);
  // x[i] *= alpha
  void (*scale)(double alpha, double* x, size_t n);
  // out[r] = dot(w + r * cols, x, cols) for r in [0, rows)
  void (*gemv)(const double* w, const double* x, double* out, size_t rows, size_t cols);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled into this build.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool cpu_supports(Isa isa);
std::vector<Isa> available_isas();

// Best supported ISA, unless BIASNER_ISA=scalar|avx2|neon overrides it.
const KernelTable& active();
// Throws kConfig for ISAs this build or CPU cannot run.
void select(Isa isa);

}  // namespace biasner::kernels
