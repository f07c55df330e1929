#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace lmdrop {

// Flat `key = value` text. Blank lines and lines starting with '#' are ignored.
// Later duplicates of a key are rejected.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in, const std::string& source_name);
KeyValues read_key_values(const std::filesystem::path& path);

// Writes entries in the given order, one `key = value` per line.
void write_key_values(std::ostream& out,
                      const std::vector<std::pair<std::string, std::string>>& entries);
void write_key_values(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& entries);

std::string trim(const std::string& s);
std::vector<std::string> split_list(const std::string& s);  // comma or whitespace separated
double parse_double(const std::string& s, const std::string& what);
long parse_long(const std::string& s, const std::string& what);
bool parse_bool(const std::string& s, const std::string& what);

// Round-trippable text form of a double (17 significant digits).
std::string format_double(double v);

}  // namespace lmdrop
