#include "iviq/common.hpp"

#include <algorithm>
#include <cctype>

namespace iviq {

std::string_view to_string(Segment s) noexcept {
  switch (s) {
    case Segment::whole:
      return "whole";
    case Segment::first_half:
      return "first_half";
    case Segment::second_half:
      return "second_half";
  }
  return "whole";
}

Segment segment_from_string(std::string_view s) {
  if (s == "whole") return Segment::whole;
  if (s == "first_half") return Segment::first_half;
  if (s == "second_half") return Segment::second_half;
  throw ParseError("unknown segment '" + std::string(s) + "'");
}

namespace text {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_answer(std::string_view s) { return to_lower(trim(s)); }

std::vector<std::string> tokenize(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.compare(i, 5, "[SEP]") == 0) {
      cleaned.push_back(' ');
      i += 4;
      continue;
    }
    const auto c = static_cast<unsigned char>(s[i]);
    // Bytes >= 0x80 belong to UTF-8 sequences and are kept verbatim.
    if (std::isalnum(c) != 0 || c >= 0x80) {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && cleaned[i] == ' ') ++i;
    std::size_t j = i;
    while (j < cleaned.size() && cleaned[j] != ' ') ++j;
    if (j > i) tokens.emplace_back(cleaned.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) noexcept {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace text

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view key) noexcept {
  return fnv1a64(key) ^ (seed * 0x9e3779b97f4a7c15ULL);
}

}  // namespace iviq
