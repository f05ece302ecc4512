#include "support.hpp"

#include "osmforge/edit.hpp"
#include "osmforge/errors.hpp"
#include "osmforge/geometry.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace osmforge;

namespace {

AreaTagRule default_area_rule()
{
    return test::rules().area_rule();
}

OsmDocument square_doc(TagMap tags)
{
    return OsmDocument({OsmElement::node(1, 0, 0), OsmElement::node(2, 0, 1), OsmElement::node(3, 1, 1),
                        OsmElement::node(4, 1, 0), OsmElement::way(10, {1, 2, 3, 4, 1}, std::move(tags))});
}

} // namespace

TEST_CASE("tag map keeps keys unique and rejects empty strings")
{
    TagMap t;
    t.set("b", "2");
    t.set("a", "1");
    t.set("a", "3");
    CHECK(t.size() == 2);
    CHECK(t.get("a") == "3");
    CHECK(t.begin()->first == "a");
    CHECK_THROWS_AS(t.set("", "x"), std::invalid_argument);
    CHECK_THROWS_AS(t.set("k", ""), std::invalid_argument);
    CHECK(t.erase("a"));
    CHECK_FALSE(t.has("a"));
}

TEST_CASE("element invariants")
{
    CHECK_THROWS_AS(OsmElement::node(1, 181, 0), RangeError);
    CHECK_THROWS_AS(OsmElement::node(1, 0, -90.5), RangeError);
    CHECK_THROWS_AS(OsmElement::way(1, {5}), std::invalid_argument);
    CHECK_THROWS_AS(OsmElement::relation(1, {}), std::invalid_argument);
}

TEST_CASE("parse: empty and minimal documents")
{
    const auto empty = parse_osm_json(R"({"elements":[]})");
    CHECK(empty.size() == 0);

    const auto one = parse_osm_json(R"({"elements":[{"type":"node","id":1,"lat":0,"lon":0}]})");
    CHECK(one.count(ElementKind::Node) == 1);
    CHECK(one.count(ElementKind::Way) == 0);
}

TEST_CASE("parse: errors carry positions")
{
    try {
        parse_osm_json(R"({"elements":[}")");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 14);
    }
    try {
        parse_osm_json(R"({"elements":[{"type":"node","id":1,"lat":0,"lon":0},{"type":"node","lat":0,"lon":0}]})");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.index() == 1);
    }
    CHECK_THROWS_AS(parse_osm_json(R"({"elements":[{"id":3}]})"), SchemaError);
    CHECK_THROWS_AS(parse_osm_json(R"({"elements":[{"type":"node","id":1,"lat":95,"lon":0}]})"), RangeError);
    CHECK_THROWS_AS(parse_osm_json(R"({"nodes":[]})"), SchemaError);
}

TEST_CASE("parse: unknown fields ignored, order preserved")
{
    const auto doc = parse_osm_json(R"({"generator":"x","elements":[
        {"type":"way","id":5,"nodes":[2,1],"extra":true},
        {"type":"node","id":2,"lat":1,"lon":1},
        {"type":"node","id":1,"lat":0,"lon":0,"tags":{"a":"b"}}]})");
    REQUIRE(doc.size() == 3);
    CHECK(doc.elements()[0].ref() == ElementRef{ElementKind::Way, 5});
    CHECK(doc.elements()[2].tags().get("a") == "b");
}

TEST_CASE("parse: recursion repeats merge, conflicting repeats fail")
{
    const auto doc = parse_osm_json(R"({"elements":[
        {"type":"node","id":1,"lat":0,"lon":0,"tags":{"a":"b"}},
        {"type":"node","id":1,"lat":0,"lon":0}]})");
    CHECK(doc.size() == 1);
    CHECK(doc.elements()[0].tags().get("a") == "b");
    CHECK_THROWS_AS(parse_osm_json(R"({"elements":[
        {"type":"node","id":1,"lat":0,"lon":0},
        {"type":"node","id":1,"lat":1,"lon":0}]})"),
                    SchemaError);
}

TEST_CASE("parse: fixture element counts match a generic tree walk")
{
    // Counted by walking the JSON tree for objects typed node/way/relation,
    // distinct by (type, id).
    const auto doc = test::fixture_doc();
    CHECK(doc.count(ElementKind::Node) == 57);
    CHECK(doc.count(ElementKind::Way) == 14);
    CHECK(doc.count(ElementKind::Relation) == 1);
    REQUIRE(doc.capture_timestamp());
    CHECK(doc.capture_timestamp()->year == 2023);
    REQUIRE(doc.source_bounds());
    CHECK(doc.source_bounds()->valid());
}

TEST_CASE("parse is deterministic and serialization round-trips")
{
    const auto bytes = read_file(test::fixtures() / "overpass/18/74975/100281.json");
    const auto a = parse_osm_json(bytes);
    const auto b = parse_osm_json(bytes);
    CHECK(a == b);
    CHECK(document_fingerprint(a) == document_fingerprint(b));
    const auto again = parse_osm_json(serialize_osm_json(a));
    CHECK(again == a);
}

TEST_CASE("geometry: closed building way is a polygon")
{
    const auto doc = square_doc({{"building", "yes"}});
    const auto g = resolve_geometry(doc, {ElementKind::Way, 10}, default_area_rule());
    REQUIRE(std::holds_alternative<Polygon>(g));
    const auto& p = std::get<Polygon>(g);
    CHECK(p.outer.size() == 5);
    CHECK(p.outer.front() == p.outer.back());
    CHECK(p.holes.empty());
}

TEST_CASE("geometry: two-node road is a polyline")
{
    const OsmDocument doc({OsmElement::node(1, 0, 0), OsmElement::node(2, 1, 0),
                           OsmElement::way(3, {1, 2}, {{"highway", "residential"}})});
    const auto g = resolve_geometry(doc, {ElementKind::Way, 3}, default_area_rule());
    REQUIRE(std::holds_alternative<Polyline>(g));
    CHECK(std::get<Polyline>(g).vertices.size() == 2);
}

TEST_CASE("geometry: closed highway stays a line unless area=yes")
{
    auto g = resolve_geometry(square_doc({{"highway", "pedestrian"}}), {ElementKind::Way, 10}, default_area_rule());
    CHECK(std::holds_alternative<Polyline>(g));
    g = resolve_geometry(square_doc({{"highway", "pedestrian"}, {"area", "yes"}}), {ElementKind::Way, 10},
                         default_area_rule());
    CHECK(std::holds_alternative<Polygon>(g));
}

TEST_CASE("geometry: duplicate consecutive vertices collapse")
{
    const OsmDocument doc({OsmElement::node(1, 0, 0), OsmElement::node(2, 1, 0), OsmElement::node(3, 1, 0),
                           OsmElement::way(3, {1, 2, 3, 2}, {{"highway", "service"}})});
    const auto g = resolve_geometry(doc, {ElementKind::Way, 3}, default_area_rule());
    CHECK(std::get<Polyline>(g).vertices.size() == 2);
}

TEST_CASE("geometry: dangling node and unsupported relation")
{
    const OsmDocument doc({OsmElement::node(1, 0, 0), OsmElement::way(3, {1, 77}, {{"highway", "service"}}),
                           OsmElement::relation(4, {{3, ElementKind::Way, ""}}, {{"type", "route"}})});
    try {
        resolve_geometry(doc, {ElementKind::Way, 3}, default_area_rule());
        FAIL("expected MissingNodeError");
    } catch (const MissingNodeError& e) {
        CHECK(e.node_id() == 77);
    }
    CHECK_THROWS_AS(resolve_geometry(doc, {ElementKind::Relation, 4}, default_area_rule()), GeometryError);
}

TEST_CASE("geometry: self-intersecting ring is rejected")
{
    const OsmDocument doc({OsmElement::node(1, 0, 0), OsmElement::node(2, 1, 1), OsmElement::node(3, 1, 0),
                           OsmElement::node(4, 0, 1),
                           OsmElement::way(5, {1, 2, 3, 4, 1}, {{"building", "yes"}})});
    CHECK_THROWS_AS(resolve_geometry(doc, {ElementKind::Way, 5}, default_area_rule()), GeometryError);
}

TEST_CASE("geometry: fixture multipolygon joins split outers and keeps the hole")
{
    const auto doc = test::fixture_doc();
    const auto g = resolve_geometry(doc, {ElementKind::Relation, 11}, default_area_rule());
    REQUIRE(std::holds_alternative<Polygon>(g));
    const auto& p = std::get<Polygon>(g);
    REQUIRE(p.holes.size() == 1);
    for (const auto& ring : {p.outer, p.holes[0]}) {
        CHECK(ring.front() == ring.back());
    }
    // Independent shoelace over the inner way's raw node coordinates.
    const auto& inner = doc.at({ElementKind::Way, 114}).as_way();
    double acc = 0;
    for (std::size_t i = 0; i + 1 < inner.refs.size(); ++i) {
        const auto& a = doc.at({ElementKind::Node, inner.refs[i]}).as_node();
        const auto& b = doc.at({ElementKind::Node, inner.refs[i + 1]}).as_node();
        acc += a.lon * b.lat - b.lon * a.lat;
    }
    CHECK(std::abs(signed_ring_area(p.holes[0])) == doctest::Approx(std::abs(acc) / 2).epsilon(1e-12));
}

TEST_CASE("geometry: relation without a valid outer ring")
{
    const OsmDocument doc({OsmElement::node(1, 0, 0), OsmElement::node(2, 1, 0), OsmElement::node(3, 1, 1),
                           OsmElement::way(4, {1, 2, 3}),
                           OsmElement::relation(5, {{4, ElementKind::Way, "outer"}},
                                                {{"type", "multipolygon"}, {"landuse", "grass"}})});
    std::vector<std::string> warnings;
    CHECK_THROWS_AS(resolve_geometry(doc, {ElementKind::Relation, 5}, default_area_rule(), &warnings),
                    GeometryError);
    CHECK_FALSE(warnings.empty());
}

TEST_CASE("edit: empty script is identity")
{
    const auto doc = test::fixture_doc();
    CHECK(apply_edit(doc, {}) == doc);
}

TEST_CASE("edit: add stadium adds one way and leaves the rest untouched")
{
    const auto doc = test::fixture_doc();
    const auto before_fp = document_fingerprint(doc);
    const auto script = parse_edit_script(read_file(test::fixtures() / "edits/add_stadium.json"));
    const auto after = apply_edit(doc, script);
    CHECK(after.count(ElementKind::Way) == doc.count(ElementKind::Way) + 1);
    for (const auto& e : doc.elements()) {
        REQUIRE(after.find(e.ref()) != nullptr);
        CHECK(element_fingerprint(*after.find(e.ref())) == element_fingerprint(e));
    }
    CHECK(document_fingerprint(doc) == before_fp);
}

TEST_CASE("edit: change lake to grass keeps geometry and flips the class")
{
    const auto doc = test::fixture_doc();
    const auto after = apply_edit(doc, parse_edit_script(read_file(test::fixtures() / "edits/change_lake_to_grass.json")));
    const ElementRef lake{ElementKind::Way, 101};
    CHECK(after.at(lake).as_way() == doc.at(lake).as_way());
    CHECK(classify_general(doc.at(lake).tags(), test::rules()) == GeneralClass::Water);
    CHECK(classify_general(after.at(lake).tags(), test::rules()) == GeneralClass::Vegetation);
}

TEST_CASE("edit: errors name the offending op")
{
    const auto doc = test::fixture_doc();
    EditScript s;
    s.ops.push_back(ChangeTags{{ElementKind::Way, 101}, {{"name", "x"}}, {}});
    s.ops.push_back(RemoveFeature{{ElementKind::Way, 99999}});
    try {
        apply_edit(doc, s);
        FAIL("expected EditError");
    } catch (const EditError& e) {
        CHECK(e.op_index() == 1);
    }
    EditScript collide;
    collide.ops.push_back(AddFeature{{OsmElement::node(1000, 0, 0)}});
    CHECK_THROWS_AS(apply_edit(doc, collide), EditError);

    EditScript dangling;
    dangling.ops.push_back(RemoveFeature{{ElementKind::Node, doc.at({ElementKind::Way, 101}).as_way().refs[0]}});
    try {
        apply_edit(doc, dangling);
        FAIL("expected EditError");
    } catch (const EditError& e) {
        CHECK(e.op_index() == 0);
    }
}

TEST_CASE("diff: identical documents give an empty change set")
{
    const auto doc = test::fixture_doc();
    CHECK(diff_documents(doc, doc).empty());
}

TEST_CASE("diff: edit round trip for every fixture script")
{
    const auto doc = test::fixture_doc();
    for (const auto& entry : std::filesystem::directory_iterator(test::fixtures() / "edits")) {
        CAPTURE(entry.path().string());
        const auto script = parse_edit_script(read_file(entry.path()));
        const auto after = apply_edit(doc, script);
        const auto changes = diff_documents(doc, after);
        CHECK_FALSE(changes.empty());

        auto touched = touched_elements(script);
        std::vector<ElementRef> listed = changes.added;
        listed.insert(listed.end(), changes.removed.begin(), changes.removed.end());
        for (const auto& r : changes.retagged) {
            listed.push_back(r.target);
        }
        std::sort(touched.begin(), touched.end());
        std::sort(listed.begin(), listed.end());
        CHECK(touched == listed);

        const auto rebuilt = apply_edit(doc, script_from_changeset(changes, after));
        CHECK(diff_documents(rebuilt, after).empty());
    }
}

TEST_CASE("diff: three hand-listed differences")
{
    const auto doc = test::fixture_doc();
    std::vector<OsmElement> elements(doc.elements().begin(), doc.elements().end());
    // Drop the traffic signal tags, delete the footway, add a new node.
    std::vector<OsmElement> edited;
    for (const auto& e : elements) {
        if (e.ref() == ElementRef{ElementKind::Way, 111}) {
            continue;
        }
        if (e.kind() == ElementKind::Node && e.tags().has("highway")) {
            edited.push_back(e.with_tags({}));
            continue;
        }
        edited.push_back(e);
    }
    edited.push_back(OsmElement::node(-5, -77.037, 38.898, {{"amenity", "bench"}}));
    const OsmDocument after(edited);
    const auto changes = diff_documents(doc, after);

    // Oracle: set difference over per-element fingerprints.
    std::vector<std::string> fa;
    std::vector<std::string> fb;
    for (const auto& e : doc.elements()) {
        fa.push_back(element_fingerprint(e));
    }
    for (const auto& e : after.elements()) {
        fb.push_back(element_fingerprint(e));
    }
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    std::vector<std::string> only_a;
    std::vector<std::string> only_b;
    std::set_difference(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(only_a));
    std::set_difference(fb.begin(), fb.end(), fa.begin(), fa.end(), std::back_inserter(only_b));
    CHECK(only_a.size() == 2);
    CHECK(only_b.size() == 2);

    CHECK(changes.added == std::vector<ElementRef>{{ElementKind::Node, -5}});
    CHECK(changes.removed == std::vector<ElementRef>{{ElementKind::Way, 111}});
    REQUIRE(changes.retagged.size() == 1);
    CHECK(changes.retagged[0].after.empty());
    CHECK(changes.modified.empty());
}

TEST_CASE("diff: geometry changes are reported as modified")
{
    const OsmDocument a({OsmElement::node(1, 0, 0)});
    const OsmDocument b({OsmElement::node(1, 0.5, 0)});
    const auto changes = diff_documents(a, b);
    CHECK(changes.modified == std::vector<ElementRef>{{ElementKind::Node, 1}});
    CHECK(apply_edit(a, script_from_changeset(changes, b)) == b);
}

TEST_CASE("edit script JSON round trip")
{
    for (const auto& entry : std::filesystem::directory_iterator(test::fixtures() / "edits")) {
        const auto script = parse_edit_script(read_file(entry.path()));
        CHECK(parse_edit_script(serialize_edit_script(script)) == script);
    }
    CHECK_THROWS_AS(parse_edit_script(R"([{"op":"move"}])"), SchemaError);
    CHECK_THROWS_AS(parse_edit_script(R"([{"op":"remove","type":"way"}])"), SchemaError);
    CHECK_THROWS_AS(parse_edit_script("[{"), ParseError);
}

TEST_CASE("documents are shareable and immutable")
{
    const auto doc = test::fixture_doc();
    const auto copy = doc;
    const auto fp = document_fingerprint(doc);
    const auto edited = apply_edit(copy, parse_edit_script(read_file(test::fixtures() / "edits/remove_buildings.json")));
    CHECK(document_fingerprint(doc) == fp);
    CHECK(document_fingerprint(copy) == fp);
    CHECK(edited.size() < doc.size());
}
