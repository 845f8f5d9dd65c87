#include "epifc/mask.hpp"

#include <algorithm>

#include "epifc/error.hpp"
#include "text_io.hpp"

namespace epifc {

std::string_view to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::NoFS: return "NoFS";
    case SelectionMethod::PCorr: return "PCorr";
    case SelectionMethod::RFS: return "RFS";
    case SelectionMethod::Lasso: return "Lasso";
  }
  return "unknown";
}

std::optional<SelectionMethod> parse_selection_method(std::string_view text) {
  for (auto m : kAllMethods) {
    if (detail::iequals(to_string(m), detail::trim(text))) return m;
  }
  return std::nullopt;
}

bool SelectionMask::contains(std::size_t feature) const {
  return std::binary_search(indices.begin(), indices.end(), feature);
}

void SelectionMask::validate(std::size_t num_features) const {
  if (indices.empty()) throw Error(ErrorCode::InvalidArgument, "selection mask is empty");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= num_features) {
      throw Error(ErrorCode::InvalidArgument, "mask index " + std::to_string(indices[i]) +
                                                  " out of range");
    }
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw Error(ErrorCode::InvalidArgument, "mask indices not strictly increasing");
    }
  }
}

std::string format_mask(const SelectionMask& mask, const std::vector<std::string>& names) {
  std::string out = "method: " + std::string(to_string(mask.method)) + "\n";
  if (mask.threshold) out += "threshold: " + detail::format_double(*mask.threshold) + "\n";
  if (mask.prefix_size) out += "prefix_size: " + std::to_string(*mask.prefix_size) + "\n";
  if (mask.lambda) out += "lambda: " + detail::format_double(*mask.lambda) + "\n";
  if (mask.fold) out += "fold: " + std::to_string(*mask.fold) + "\n";
  if (mask.fallback) out += "fallback: true\n";
  out += "count: " + std::to_string(mask.size()) + "\n";
  for (auto i : mask.indices) {
    out += std::to_string(i) + "\t" + (i < names.size() ? names[i] : std::string("?")) + "\n";
  }
  return out;
}

}  // namespace epifc
