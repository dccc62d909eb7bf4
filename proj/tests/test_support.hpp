#pragma once

#include <string>

#include "songci/corpus.hpp"
#include "songci/utf8.hpp"

namespace songci::test {

inline std::string data_path(const std::string& name) { return std::string(SONGCI_DATA_DIR) + "/" + name; }

inline std::u32string u32(const std::string& s) { return utf8::decode(s); }

// Table 1's Beauty Yu.
inline Iambic beauty_yu() {
  return load_corpus(data_path("beauty_yu_table.txt")).front();
}

}  // namespace songci::test
