#include "svebm/example.hpp"

#include <string>

#include "svebm/errors.hpp"

namespace svebm {

Modality parse_modality(std::string_view name) {
  if (name == "points") return Modality::Points;
  if (name == "sequence") return Modality::Sequence;
  if (name == "document") return Modality::Document;
  throw ConfigError("unknown modality '" + std::string(name) + "' (expected points, sequence or document)");
}

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::Points:
      return "points";
    case Modality::Sequence:
      return "sequence";
    case Modality::Document:
      return "document";
  }
  return "points";
}

int DocumentExample::total() const {
  int t = 0;
  for (const auto& c : counts) t += c.count;
  return t;
}

Modality modality_of(const Observation& x) {
  switch (x.index()) {
    case 0:
      return Modality::Points;
    case 1:
      return Modality::Sequence;
    default:
      return Modality::Document;
  }
}

}  // namespace svebm
