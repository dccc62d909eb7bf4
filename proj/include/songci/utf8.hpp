#pragma once

#include <string>
#include <string_view>

namespace songci::utf8 {

// Throws DataError on malformed input.
std::u32string decode(std::string_view bytes);
std::string encode(std::u32string_view text);
std::string encode(char32_t ch);

}  // namespace songci::utf8
