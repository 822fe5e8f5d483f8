#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sfim {

// "key = value" lines grouped under "[section]" headers. '#' and ';' start
// comments. Keys before the first header land in section "".
class Ini {
public:
    using Section = std::map<std::string, std::string>;

    static Ini parse(const std::string& text);
    static Ini load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    const std::string& get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    const std::map<std::string, Section>& sections() const { return sections_; }
    bool has_section(const std::string& section) const { return sections_.count(section) != 0; }

    // Sections and keys in sorted order, so equal contents give equal text.
    std::string to_string() const;

private:
    std::map<std::string, Section> sections_;
};

// Comma-separated list helpers.
std::vector<std::string> split_list(const std::string& s);
std::vector<std::size_t> parse_size_list(const std::string& s);
std::string join_sizes(const std::vector<std::size_t>& v);

std::uint64_t fnv1a64(const std::string& bytes);

} // namespace sfim
