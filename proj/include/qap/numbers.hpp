#pragma once

#include <optional>
#include <string>
#include <vector>

namespace qap {

// Canonical form of a number token: commas, "$" and "%" stripped, one
// trailing "." removed, leading "+" dropped. Does not validate.
std::string canonicalize_number(const std::string& token);

// Parses a canonicalized number; nullopt when not a finite decimal.
std::optional<double> parse_decimal(const std::string& canonical);

struct NumberToken {
  size_t pos = 0;     // offset of the first character of the token
  std::string text;   // raw token, e.g. "$1,080."
};

// Scans free text for number tokens: digit runs with optional thousands
// commas and one decimal part, an optional "$" prefix, "%" suffix, and a
// sign when it clearly starts the token. Tokens glued to letters
// ("QAP150") are skipped.
std::vector<NumberToken> find_numbers(const std::string& text);

}  // namespace qap
