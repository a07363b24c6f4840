#pragma once

// Dense inner loops behind the tensor primitives.
//
// Each instruction set provides one KernelTable. The scalar table is the
// reference; vector tables perform the same operations per element in the
// same order (no fused multiply-add, no reassociated reductions), so every
// table produces bit-identical results. tests/test_kernels.cpp holds them to
// that.

#include <cstddef>
#include <string_view>

namespace gnasforge::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

struct AdamCoefficients {
  double lr;
  double beta1;
  double one_minus_beta1;
  double beta2;
  double one_minus_beta2;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
  double epsilon;
  double weight_decay;
};

struct KernelTable {
  Isa isa;

  // c[m x n] += a[m x k] * b[k x n], all row-major.
  void (*gemm_acc)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                   const double* b, double* c);

  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  void (*sub)(std::size_t n, const double* a, const double* b, double* out);
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  void (*div)(std::size_t n, const double* a, const double* b, double* out);

  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out = alpha * x
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);

  // One Adam step with L2 weight decay folded into the gradient.
  void (*adam)(std::size_t n, const AdamCoefficients& c, double* param, const double* grad,
               double* m, double* v);
};

const KernelTable& scalar_table();

/// nullptr when the table was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_table();

/// Table used by the tensor primitives. Chosen once: the best supported ISA,
/// unless GNASFORGE_KERNELS=scalar is set in the environment.
const KernelTable& active();

}  // namespace gnasforge::kernels
