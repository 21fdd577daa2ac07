#pragma once

#include <span>
#include <string>

namespace biasner {

struct AgreementReport {
  double observed_agreement = 0.0;
  double expected_agreement = 0.0;
  double kappa = 0.0;
  size_t n_items = 0;

  bool operator==(const AgreementReport&) const = default;
};

// Cohen's kappa between two annotators' labels for the same items.
//   po = fraction of items with equal labels
//   pe = sum over labels c of p_a(c) * p_b(c)
//   kappa = (po - pe) / (1 - pe)
// When pe == 1 (both annotators used one identical label throughout) the
// ratio is undefined; kappa is then 1 if po == 1 and 0 otherwise.
AgreementReport cohen_kappa(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace biasner
