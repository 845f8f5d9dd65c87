#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace epifc {

enum class SelectionMethod { NoFS = 0, PCorr = 1, RFS = 2, Lasso = 3 };

inline constexpr SelectionMethod kAllMethods[] = {SelectionMethod::NoFS, SelectionMethod::PCorr,
                                                  SelectionMethod::RFS, SelectionMethod::Lasso};

std::string_view to_string(SelectionMethod method);
std::optional<SelectionMethod> parse_selection_method(std::string_view text);

/// Retained feature indices (strictly increasing, non-empty) plus the
/// parameters of the selection run that produced them.
struct SelectionMask {
  std::vector<std::size_t> indices;
  SelectionMethod method = SelectionMethod::NoFS;
  std::optional<double> threshold;          // PCorr p*
  std::optional<std::size_t> prefix_size;   // RFS N*
  std::optional<double> lambda;             // Lasso lambda*
  std::optional<int> fold;                  // Lasso winning fold
  bool fallback = false;                    // Lasso empty-support fallback used

  std::size_t size() const { return indices.size(); }
  bool contains(std::size_t feature) const;

  /// Throws InvalidArgument unless the invariants hold for `num_features`.
  void validate(std::size_t num_features) const;

  bool operator==(const SelectionMask&) const = default;
};

/// Text document: method, metadata and one retained feature name per line.
std::string format_mask(const SelectionMask& mask, const std::vector<std::string>& feature_names);

}  // namespace epifc
