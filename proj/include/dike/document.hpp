#pragma once

#include <map>
#include <string>
#include <vector>

namespace dike {

struct Document {
  std::string id;
  std::string text;
  std::string source;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const Document&, const Document&) = default;
};

using DocumentSet = std::vector<Document>;

}  // namespace dike
