#pragma once

#include "osmforge/osm.hpp"

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace osmforge {

/// Inserts new elements. Nodes must precede the ways that reference them
/// only in the sense that all references resolve once the op completes.
struct AddFeature {
    std::vector<OsmElement> elements;
    friend bool operator==(const AddFeature&, const AddFeature&) = default;
};

struct RemoveFeature {
    ElementRef target;
    friend bool operator==(const RemoveFeature&, const RemoveFeature&) = default;
};

/// New tags are `old - unset + set`.
struct ChangeTags {
    ElementRef target;
    TagMap set;
    std::vector<std::string> unset;
    friend bool operator==(const ChangeTags&, const ChangeTags&) = default;
};

using EditOp = std::variant<AddFeature, RemoveFeature, ChangeTags>;

struct EditScript {
    std::vector<EditOp> ops;
    friend bool operator==(const EditScript&, const EditScript&) = default;
};

struct Retag {
    ElementRef target;
    TagMap before;
    TagMap after;
    friend bool operator==(const Retag&, const Retag&) = default;
};

/// Element-level difference between two documents. `modified` holds
/// elements whose coordinates, node list or members changed; the edit ops
/// never produce it, but arbitrary document pairs can.
struct ChangeSet {
    std::vector<ElementRef> added;
    std::vector<ElementRef> removed;
    std::vector<Retag> retagged;
    std::vector<ElementRef> modified;

    bool empty() const noexcept
    {
        return added.empty() && removed.empty() && retagged.empty() && modified.empty();
    }
    friend bool operator==(const ChangeSet&, const ChangeSet&) = default;
};

/// Applies `script` op by op and returns a new document; `doc` is untouched.
///
/// Removed elements disappear, added ones are appended in op order and
/// retagged ones keep their position. Once every op has run, references from
/// ways and relations must resolve unless they were already dangling in
/// `doc`. Throws EditError naming the offending op.
OsmDocument apply_edit(const OsmDocument& doc, const EditScript& script);

/// Lists per-element differences, in `after` order for additions and
/// `before` order for everything else.
ChangeSet diff_documents(const OsmDocument& before, const OsmDocument& after);

/// Builds a script that turns `before` into `after` given their diff. Elements
/// in `modified` become a remove followed by an add of the new version.
EditScript script_from_changeset(const ChangeSet& changes, const OsmDocument& after);

/// Every element ref the script names, in op order.
std::vector<ElementRef> touched_elements(const EditScript& script);

/// Script JSON: an array of
///   {"op": "add", "elements": [<Overpass element>...]}
///   {"op": "remove", "type": "way", "id": 7}
///   {"op": "change", "type": "way", "id": 7, "set": {...}, "unset": ["k"]}
/// Throws ParseError / SchemaError (index = op position).
EditScript parse_edit_script(std::string_view json_text);
std::string serialize_edit_script(const EditScript& script);

} // namespace osmforge
