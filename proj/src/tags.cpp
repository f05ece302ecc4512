#include "osmforge/tags.hpp"

#include "osmforge/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <stdexcept>

namespace osmforge {

TagMap::TagMap(std::initializer_list<std::pair<const std::string, std::string>> init)
{
    for (const auto& [k, v] : init) {
        set(k, v);
    }
}

void TagMap::set(std::string key, std::string value)
{
    if (key.empty() || value.empty()) {
        throw std::invalid_argument("tag keys and values must be non-empty");
    }
    m_entries.insert_or_assign(std::move(key), std::move(value));
}

bool TagMap::erase(std::string_view key)
{
    auto it = m_entries.find(key);
    if (it == m_entries.end()) {
        return false;
    }
    m_entries.erase(it);
    return true;
}

std::optional<std::string_view> TagMap::get(std::string_view key) const
{
    auto it = m_entries.find(key);
    if (it == m_entries.end()) {
        return std::nullopt;
    }
    return std::string_view(it->second);
}

bool TagCondition::matches(const TagMap& tags) const
{
    auto v = tags.get(key);
    if (!v) {
        return false;
    }
    switch (op) {
    case Op::Any:
        return true;
    case Op::OneOf:
        return std::find(values.begin(), values.end(), *v) != values.end();
    case Op::NotEqual:
        return *v != values.front();
    }
    return false;
}

bool TagPattern::matches(const TagMap& tags) const
{
    return std::all_of(conditions.begin(), conditions.end(),
                       [&](const TagCondition& c) { return c.matches(tags); });
}

namespace {

// Does condition `b` (on the same key) imply condition `a`?
bool condition_implies(const TagCondition& b, const TagCondition& a)
{
    using Op = TagCondition::Op;
    switch (a.op) {
    case Op::Any:
        return true;
    case Op::OneOf:
        return b.op == Op::OneOf && std::all_of(b.values.begin(), b.values.end(), [&](const auto& v) {
                   return std::find(a.values.begin(), a.values.end(), v) != a.values.end();
               });
    case Op::NotEqual:
        if (b.op == Op::NotEqual) {
            return b.values.front() == a.values.front();
        }
        return b.op == Op::OneOf &&
               std::find(b.values.begin(), b.values.end(), a.values.front()) == b.values.end();
    }
    return false;
}

} // namespace

bool TagPattern::implies(const TagPattern& other) const
{
    // Every condition of `other` must be implied by some condition of ours on
    // the same key.
    return std::all_of(other.conditions.begin(), other.conditions.end(), [&](const TagCondition& a) {
        return std::any_of(conditions.begin(), conditions.end(), [&](const TagCondition& b) {
            return b.key == a.key && condition_implies(b, a);
        });
    });
}

bool TagPredicate::matches(const TagMap& tags) const
{
    return std::any_of(any_of.begin(), any_of.end(),
                       [&](const TagPattern& p) { return p.matches(tags); });
}

TagPattern parse_tag_pattern(const nlohmann::json& j)
{
    if (!j.is_object() || j.empty()) {
        throw ConfigError("tag pattern must be a non-empty object: " + j.dump());
    }
    TagPattern pattern;
    for (const auto& [key, spec] : j.items()) {
        TagCondition cond{key, TagCondition::Op::Any, {}};
        if (spec.is_array()) {
            cond.op = TagCondition::Op::OneOf;
            for (const auto& v : spec) {
                cond.values.push_back(v.get<std::string>());
            }
            if (cond.values.empty()) {
                throw ConfigError("empty value list for key '" + key + "'");
            }
        } else if (spec.is_string()) {
            auto s = spec.get<std::string>();
            if (s == "*") {
                cond.op = TagCondition::Op::Any;
            } else if (s.size() > 1 && s.front() == '!') {
                cond.op = TagCondition::Op::NotEqual;
                cond.values.push_back(s.substr(1));
            } else if (!s.empty()) {
                cond.op = TagCondition::Op::OneOf;
                cond.values.push_back(std::move(s));
            } else {
                throw ConfigError("empty value for key '" + key + "'");
            }
        } else {
            throw ConfigError("tag condition for '" + key + "' must be a string or array");
        }
        pattern.conditions.push_back(std::move(cond));
    }
    return pattern;
}

TagPredicate parse_tag_predicate(const nlohmann::json& j)
{
    TagPredicate pred;
    if (j.is_array()) {
        for (const auto& p : j) {
            pred.any_of.push_back(parse_tag_pattern(p));
        }
    } else {
        pred.any_of.push_back(parse_tag_pattern(j));
    }
    if (pred.any_of.empty()) {
        throw ConfigError("empty tag predicate");
    }
    return pred;
}

} // namespace osmforge
