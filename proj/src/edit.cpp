#include "osmforge/edit.hpp"

#include "osmforge/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <unordered_map>
#include <unordered_set>

namespace osmforge {

using nlohmann::json;

namespace {

struct Working {
    // Input order followed by additions; removed slots become nullopt.
    std::vector<std::optional<OsmElement>> slots;
    std::unordered_map<ElementRef, std::size_t, ElementRefHash> index;

    bool contains(const ElementRef& r) const { return index.count(r) != 0; }
};

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<ElementRef> references_of(const OsmElement& e)
{
    std::vector<ElementRef> out;
    if (e.kind() == ElementKind::Way) {
        for (auto id : e.as_way().refs) {
            out.push_back({ElementKind::Node, id});
        }
    } else if (e.kind() == ElementKind::Relation) {
        for (const auto& m : e.as_relation().members) {
            out.push_back({m.kind, m.ref});
        }
    }
    return out;
}

} // namespace

OsmDocument apply_edit(const OsmDocument& doc, const EditScript& script)
{
    Working w;
    w.slots.reserve(doc.size());
    for (const auto& e : doc.elements()) {
        w.index.emplace(e.ref(), w.slots.size());
        w.slots.emplace_back(e);
    }

    std::unordered_map<ElementRef, std::size_t, ElementRefHash> removed_by;
    std::unordered_map<ElementRef, std::size_t, ElementRefHash> added_by;

    for (std::size_t op_index = 0; op_index < script.ops.size(); ++op_index) {
        std::visit(
            Overloaded{
                [&](const AddFeature& op) {
                    if (op.elements.empty()) {
                        throw EditError("add op carries no elements", op_index);
                    }
                    for (const auto& e : op.elements) {
                        if (w.contains(e.ref())) {
                            throw EditError("element " + to_string(e.ref()) + " already exists", op_index);
                        }
                        w.index.emplace(e.ref(), w.slots.size());
                        w.slots.emplace_back(e);
                        added_by[e.ref()] = op_index;
                        removed_by.erase(e.ref());
                    }
                },
                [&](const RemoveFeature& op) {
                    auto it = w.index.find(op.target);
                    if (it == w.index.end()) {
                        throw EditError("cannot remove missing element " + to_string(op.target), op_index);
                    }
                    w.slots[it->second].reset();
                    w.index.erase(it);
                    removed_by[op.target] = op_index;
                    added_by.erase(op.target);
                },
                [&](const ChangeTags& op) {
                    auto it = w.index.find(op.target);
                    if (it == w.index.end()) {
                        throw EditError("cannot retag missing element " + to_string(op.target), op_index);
                    }
                    auto& slot = w.slots[it->second];
                    TagMap tags = slot->tags();
                    for (const auto& k : op.unset) {
                        tags.erase(k);
                    }
                    for (const auto& [k, v] : op.set) {
                        tags.set(k, v);
                    }
                    slot = slot->with_tags(std::move(tags));
                },
            },
            script.ops[op_index]);
    }

    // Reference closure: a dangling reference is the fault of whichever op
    // removed its target, or of the op that added the referencing element.
    for (const auto& slot : w.slots) {
        if (!slot) {
            continue;
        }
        for (const auto& target : references_of(*slot)) {
            if (w.contains(target)) {
                continue;
            }
            if (auto r = removed_by.find(target); r != removed_by.end()) {
                throw EditError(to_string(target) + " is still referenced by " + to_string(slot->ref()),
                                r->second);
            }
            if (auto a = added_by.find(slot->ref()); a != added_by.end()) {
                throw EditError(to_string(slot->ref()) + " references missing " + to_string(target), a->second);
            }
        }
    }

    std::vector<OsmElement> out;
    out.reserve(w.index.size());
    for (auto& slot : w.slots) {
        if (slot) {
            out.push_back(std::move(*slot));
        }
    }
    return OsmDocument(std::move(out), doc.capture_timestamp(), doc.source_bounds());
}

ChangeSet diff_documents(const OsmDocument& before, const OsmDocument& after)
{
    ChangeSet cs;
    for (const auto& e : before.elements()) {
        const auto* other = after.find(e.ref());
        if (other == nullptr) {
            cs.removed.push_back(e.ref());
            continue;
        }
        if (other->with_tags({}) != e.with_tags({})) {
            cs.modified.push_back(e.ref());
        } else if (other->tags() != e.tags()) {
            cs.retagged.push_back({e.ref(), e.tags(), other->tags()});
        }
    }
    for (const auto& e : after.elements()) {
        if (!before.contains(e.ref())) {
            cs.added.push_back(e.ref());
        }
    }
    return cs;
}

EditScript script_from_changeset(const ChangeSet& changes, const OsmDocument& after)
{
    EditScript script;
    for (const auto& r : changes.retagged) {
        ChangeTags op{r.target, {}, {}};
        for (const auto& [k, v] : r.after) {
            if (r.before.get(k) != std::optional<std::string_view>(v)) {
                op.set.set(k, v);
            }
        }
        for (const auto& [k, v] : r.before) {
            if (!r.after.has(k)) {
                op.unset.push_back(k);
            }
        }
        script.ops.emplace_back(std::move(op));
    }
    for (const auto& ref : changes.modified) {
        script.ops.emplace_back(RemoveFeature{ref});
        script.ops.emplace_back(AddFeature{{after.at(ref)}});
    }
    if (!changes.added.empty()) {
        AddFeature add;
        for (const auto& ref : changes.added) {
            add.elements.push_back(after.at(ref));
        }
        script.ops.emplace_back(std::move(add));
    }
    // Relations first, nodes last, so nothing is removed while still referenced.
    auto removed = changes.removed;
    std::stable_sort(removed.begin(), removed.end(), [](const ElementRef& a, const ElementRef& b) {
        return static_cast<int>(a.kind) > static_cast<int>(b.kind);
    });
    for (const auto& ref : removed) {
        script.ops.emplace_back(RemoveFeature{ref});
    }
    return script;
}

std::vector<ElementRef> touched_elements(const EditScript& script)
{
    std::vector<ElementRef> out;
    for (const auto& op : script.ops) {
        std::visit(Overloaded{
                       [&](const AddFeature& a) {
                           for (const auto& e : a.elements) {
                               out.push_back(e.ref());
                           }
                       },
                       [&](const RemoveFeature& r) { out.push_back(r.target); },
                       [&](const ChangeTags& c) { out.push_back(c.target); },
                   },
                   op);
    }
    return out;
}

namespace {

ElementRef parse_target(const json& j, std::size_t index)
{
    try {
        return {parse_element_kind(j.at("type").get<std::string>()), j.at("id").get<std::int64_t>()};
    } catch (const std::exception& e) {
        throw SchemaError("edit op " + std::to_string(index) + ": bad target: " + e.what(), index);
    }
}

json target_json(const ElementRef& r)
{
    return {{"type", std::string(to_string(r.kind))}, {"id", r.id}};
}

} // namespace

EditScript parse_edit_script(std::string_view json_text)
{
    json root;
    try {
        root = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    if (!root.is_array()) {
        throw SchemaError("edit script must be a JSON array", 0);
    }
    EditScript script;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const auto& j = root[i];
        if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) {
            throw SchemaError("edit op " + std::to_string(i) + " lacks an 'op' string", i);
        }
        const auto op = j["op"].get<std::string>();
        if (op == "add") {
            if (!j.contains("elements") || !j["elements"].is_array()) {
                throw SchemaError("edit op " + std::to_string(i) + " lacks 'elements'", i);
            }
            // Reuse the document parser for element validation.
            json wrapper = {{"elements", j["elements"]}};
            OsmDocument parsed;
            try {
                parsed = parse_osm_json(wrapper.dump());
            } catch (const SchemaError& e) {
                throw SchemaError("edit op " + std::to_string(i) + ": " + e.what(), i);
            }
            script.ops.emplace_back(
                AddFeature{{parsed.elements().begin(), parsed.elements().end()}});
        } else if (op == "remove") {
            script.ops.emplace_back(RemoveFeature{parse_target(j, i)});
        } else if (op == "change") {
            ChangeTags change{parse_target(j, i), {}, {}};
            try {
                if (auto s = j.find("set"); s != j.end()) {
                    for (const auto& [k, v] : s->items()) {
                        change.set.set(k, v.get<std::string>());
                    }
                }
                if (auto u = j.find("unset"); u != j.end()) {
                    change.unset = u->get<std::vector<std::string>>();
                }
            } catch (const std::exception& e) {
                throw SchemaError("edit op " + std::to_string(i) + ": " + e.what(), i);
            }
            script.ops.emplace_back(std::move(change));
        } else {
            throw SchemaError("edit op " + std::to_string(i) + " has unknown op '" + op + "'", i);
        }
    }
    return script;
}

std::string serialize_edit_script(const EditScript& script)
{
    json out = json::array();
    for (const auto& op : script.ops) {
        std::visit(Overloaded{
                       [&](const AddFeature& a) {
                           json elements = json::array();
                           for (const auto& e : a.elements) {
                               elements.push_back(element_to_json(e));
                           }
                           out.push_back({{"op", "add"}, {"elements", std::move(elements)}});
                       },
                       [&](const RemoveFeature& r) {
                           auto j = target_json(r.target);
                           j["op"] = "remove";
                           out.push_back(std::move(j));
                       },
                       [&](const ChangeTags& c) {
                           auto j = target_json(c.target);
                           j["op"] = "change";
                           json set = json::object();
                           for (const auto& [k, v] : c.set) {
                               set[k] = v;
                           }
                           j["set"] = std::move(set);
                           j["unset"] = c.unset;
                           out.push_back(std::move(j));
                       },
                   },
                   op);
    }
    return out.dump(1);
}

} // namespace osmforge
