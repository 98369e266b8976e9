#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace evrag::detail {

inline constexpr char32_t kReplacementChar = 0xFFFD;

/// Decodes UTF-8; each invalid byte becomes U+FFFD.
std::u32string decode_utf8(std::string_view bytes);
void append_utf8(std::string& out, char32_t cp);

std::string to_lower_ascii(std::string_view s);
std::string_view trim(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Removes markup tags ("<b>", "</p>", "<!-- -->", "<c.yellow>"). Block-level
/// tags become newlines when keep_blocks is set. A '<' that does not open a
/// tag is kept verbatim.
std::string strip_tags(std::string_view s, bool keep_blocks);

/// Decodes named and numeric character references; unknown ones are kept.
std::string decode_entities(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

std::string shell_quote(std::string_view s);

}  // namespace evrag::detail
