#include "biasner/agreement.hpp"

#include <map>

#include "biasner/error.hpp"

namespace biasner {

AgreementReport cohen_kappa(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() != b.size())
    fail(ErrorKind::kContract, "kappa inputs differ in length: " + std::to_string(a.size()) + " vs " +
                                   std::to_string(b.size()));
  require(!a.empty(), "kappa needs at least one item");

  std::map<std::string, std::pair<size_t, size_t>> marginals;
  size_t agree = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) ++agree;
    ++marginals[a[i]].first;
    ++marginals[b[i]].second;
  }
  const double n = static_cast<double>(a.size());
  AgreementReport r;
  r.n_items = a.size();
  r.observed_agreement = static_cast<double>(agree) / n;
  for (const auto& [label, counts] : marginals)
    r.expected_agreement += (static_cast<double>(counts.first) / n) * (static_cast<double>(counts.second) / n);

  if (r.expected_agreement >= 1.0)
    r.kappa = r.observed_agreement >= 1.0 ? 1.0 : 0.0;
  else
    r.kappa = (r.observed_agreement - r.expected_agreement) / (1.0 - r.expected_agreement);
  return r;
}

}  // namespace biasner
