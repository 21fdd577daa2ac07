#include <atomic>
#include <cstdlib>
#include <string>

#include "biasner/error.hpp"
#include "biasner/kernels.hpp"

namespace biasner::kernels {

#ifndef BIASNER_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#ifndef BIASNER_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "scalar";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(BIASNER_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#ifdef BIASNER_HAVE_NEON
      return true;  // mandatory on AArch64
#else
      return false;
#endif
  }
  return false;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::kScalar};
  if (cpu_supports(Isa::kAvx2)) out.push_back(Isa::kAvx2);
  if (cpu_supports(Isa::kNeon)) out.push_back(Isa::kNeon);
  return out;
}

namespace {

const KernelTable* table_for(Isa isa) {
  if (!cpu_supports(isa)) return nullptr;
  switch (isa) {
    case Isa::kScalar: return &scalar_table();
    case Isa::kAvx2: return avx2_table();
    case Isa::kNeon: return neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("BIASNER_ISA")) {
    const std::string want(env);
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon})
      if (want == isa_name(isa))
        if (const KernelTable* t = table_for(isa)) return t;
  }
  const auto isas = available_isas();
  return table_for(isas.back());
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) fail(ErrorKind::kConfig, "ISA '" + std::string(isa_name(isa)) + "' is not available");
  current().store(t, std::memory_order_release);
}

}  // namespace biasner::kernels
