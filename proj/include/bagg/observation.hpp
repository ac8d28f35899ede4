#pragma once

#include <string>
#include <vector>

namespace bagg {

struct AugmentedText {
  std::string method;
  std::string text;
  bool operator==(const AugmentedText&) const = default;
};

/// One sampling unit: the original text, the texts augmented from it, and the
/// shared label. `augmented` is empty in baseline mode and on test splits.
struct Observation {
  std::string id;
  std::string original;
  std::vector<AugmentedText> augmented;
  int label = 0;

  std::size_t group_size() const { return 1 + augmented.size(); }
  bool operator==(const Observation&) const = default;
};

}  // namespace bagg
