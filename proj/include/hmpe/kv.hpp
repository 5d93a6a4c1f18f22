#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hmpe {

/// Flat key=value text: one pair per line, '#' starts a comment, blank lines
/// ignored, surrounding whitespace trimmed. Duplicate keys: last one wins.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

std::vector<double> parse_number_list(const std::string& text);
double parse_number(const std::string& text, const std::string& key);

/// Shortest decimal form that round-trips a float exactly.
std::string format_float(float v);

}  // namespace hmpe
