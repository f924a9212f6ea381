#include "hcnf/data/sample.hpp"

namespace hcnf::data {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

ClassCounts class_counts(const std::vector<Sample>& samples) {
  ClassCounts c{};
  for (const auto& s : samples) ++c[static_cast<int>(s.label)];
  return c;
}

}  // namespace hcnf::data
