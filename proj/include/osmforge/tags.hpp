#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace osmforge {

/// Key/value tags of one OSM element. Keys are unique and kept sorted so
/// iteration order (and therefore serialization) is canonical.
class TagMap {
public:
    using Storage = std::map<std::string, std::string, std::less<>>;

    TagMap() = default;
    TagMap(std::initializer_list<std::pair<const std::string, std::string>> init);

    /// Throws std::invalid_argument on an empty key or value.
    void set(std::string key, std::string value);
    bool erase(std::string_view key);

    std::optional<std::string_view> get(std::string_view key) const;
    bool has(std::string_view key) const { return m_entries.find(key) != m_entries.end(); }
    bool empty() const noexcept { return m_entries.empty(); }
    std::size_t size() const noexcept { return m_entries.size(); }

    Storage::const_iterator begin() const noexcept { return m_entries.begin(); }
    Storage::const_iterator end() const noexcept { return m_entries.end(); }

    friend bool operator==(const TagMap&, const TagMap&) = default;

private:
    Storage m_entries;
};

/// One constraint on a single key.
struct TagCondition {
    enum class Op { Any, OneOf, NotEqual };

    std::string key;
    Op op = Op::Any;
    std::vector<std::string> values; ///< OneOf: allowed values; NotEqual: the excluded value

    bool matches(const TagMap& tags) const;
};

/// Conjunction of conditions.
struct TagPattern {
    std::vector<TagCondition> conditions;

    bool matches(const TagMap& tags) const;

    /// True when every tag set matching `*this` also matches `other`, i.e. a
    /// rule using `other` placed earlier makes `*this` unreachable.
    bool implies(const TagPattern& other) const;
};

/// Disjunction of patterns.
struct TagPredicate {
    std::vector<TagPattern> any_of;

    bool matches(const TagMap& tags) const;
};

/// Parses `{"key": "*" | "value" | "!value" | ["v1", "v2"], ...}`.
TagPattern parse_tag_pattern(const nlohmann::json& j);
/// Accepts a single pattern object or an array of them.
TagPredicate parse_tag_predicate(const nlohmann::json& j);

} // namespace osmforge
