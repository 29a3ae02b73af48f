#pragma once

// Branch variants and the named-loss report passed between training stages.

#include <map>
#include <stdexcept>
#include <string>

namespace sslse {

/// Which feature stream feeds the context network.
enum class BranchVariant {
  EW2,              // noisy features
  SEW2,             // enhanced features
  EW2_SEW2,         // dual-attention fusion of both
  EW2_SEW2_CONCAT,  // concatenation baseline
};

inline std::string to_string(BranchVariant v) {
  switch (v) {
    case BranchVariant::EW2: return "EW2";
    case BranchVariant::SEW2: return "SEW2";
    case BranchVariant::EW2_SEW2: return "EW2_SEW2";
    case BranchVariant::EW2_SEW2_CONCAT: return "EW2_SEW2_CONCAT";
  }
  return "?";
}

inline BranchVariant parse_branch(const std::string& s) {
  if (s == "EW2") return BranchVariant::EW2;
  if (s == "SEW2") return BranchVariant::SEW2;
  if (s == "EW2_SEW2") return BranchVariant::EW2_SEW2;
  if (s == "EW2_SEW2_CONCAT") return BranchVariant::EW2_SEW2_CONCAT;
  throw std::invalid_argument("unknown branch '" + s + "' (expected EW2, SEW2, EW2_SEW2 or EW2_SEW2_CONCAT)");
}

inline bool uses_enhancer(BranchVariant v) { return v != BranchVariant::EW2; }
inline bool uses_noisy(BranchVariant v) { return v != BranchVariant::SEW2; }

/// Named scalar loss terms plus the weighted total.
struct LossReport {
  std::map<std::string, double> terms;
  double total = 0.0;

  bool has(const std::string& name) const { return terms.count(name) != 0; }
  double at(const std::string& name) const {
    auto it = terms.find(name);
    if (it == terms.end()) throw std::out_of_range("loss report has no term " + name);
    return it->second;
  }
};

}  // namespace sslse
