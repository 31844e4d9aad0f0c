#pragma once

#include <cstddef>
#include <string>

#include "bgmhan/errors.hpp"

namespace bgmhan {

// One applicant record: four semi-structured text fields plus the binary
// decision label.
struct Profile {
  std::string id;
  std::string gcea;        // A-level subject/grade pairs
  std::string gceo;        // O-level results
  std::string leadership;  // role / year / category / level entries
  std::string piq;         // free-form essay answers
  int label = 0;
};

constexpr std::size_t kFieldCount = 4;

// Fixed field order used for embedding, serialization, and reports.
inline const char* field_name(std::size_t i) {
  switch (i) {
    case 0: return "gcea";
    case 1: return "gceo";
    case 2: return "leadership";
    case 3: return "piq";
    default: throw ContractError("field index " + std::to_string(i) + " out of range");
  }
}

inline const std::string& field_text(const Profile& p, std::size_t i) {
  switch (i) {
    case 0: return p.gcea;
    case 1: return p.gceo;
    case 2: return p.leadership;
    case 3: return p.piq;
    default: throw ContractError("field index " + std::to_string(i) + " out of range");
  }
}

inline std::string& field_text(Profile& p, std::size_t i) {
  return const_cast<std::string&>(field_text(static_cast<const Profile&>(p), i));
}

}  // namespace bgmhan
