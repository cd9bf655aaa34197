#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "synthcp/errors.hpp"
#include "synthcp/hashing.hpp"
#include "synthcp/json_util.hpp"
#include "synthcp/scenegen.hpp"

using namespace synthcp;
using namespace synthcp::scenegen;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
    const fs::path p = fs::temp_directory_path() / "synthcp_scenegen" / name;
    fs::remove_all(p);
    return p;
}

int count_label(const Sample& s, int id) {
    int n = 0;
    for (int v : s.label.values()) n += v == id ? 1 : 0;
    return n;
}

}  // namespace

TEST_SUITE("scenegen") {
    TEST_CASE("empty noiseless scene is pure background") {
        auto spec = default_scene_spec();
        spec.noise_level = 0.0;
        spec.min_shapes = 0;
        spec.max_shapes = 0;
        const auto s = generate_scene(spec, 0, false);
        CHECK(count_label(s, LabelSpace::background_id) == spec.width * spec.height);
        const auto box = spec.background.color_box();
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                CHECK(box.contains({s.image.at(0, 0, y, x), s.image.at(0, 1, y, x), s.image.at(0, 2, y, x)}, 1e-6));
    }

    TEST_CASE("same spec and index give identical samples") {
        const auto spec = default_scene_spec(6, 32, 32, 99);
        for (int i : {0, 5, 17}) {
            const auto a = generate_scene(spec, i, i == 17);
            const auto b = generate_scene(spec, i, i == 17);
            CHECK(a.image.storage() == b.image.storage());
            CHECK(a.label.storage() == b.label.storage());
        }
        CHECK(generate_scene(spec, 1, false).image.storage() != generate_scene(spec, 2, false).image.storage());
    }

    TEST_CASE("axis-aligned square rasterizes to its analytic pixel area") {
        auto spec = default_scene_spec();
        spec.noise_level = 0.0;
        SceneObject sq;
        sq.class_id = 3;
        sq.geometry = Geometry::Rect;
        sq.cx = 10.0;
        sq.cy = 12.0;
        sq.rx = 4.0;
        sq.ry = 4.0;
        sq.color = {0.2, 0.3, 0.9};
        const auto s = render_scene(spec, {0.0, 0.0, 0.0}, {sq}, 1);
        // Pixel centres x + 0.5 strictly inside (cx - r, cx + r).
        auto span = [](double c, double r) {
            int n = 0;
            for (int x = 0; x < 64; ++x) n += std::abs(x + 0.5 - c) < r ? 1 : 0;
            return n;
        };
        const int expected = span(10.0, 4.0) * span(12.0, 4.0);
        CHECK(expected == 64);
        CHECK(count_label(s, 3) == expected);
        int x0 = 99, x1 = -1, y0 = 99, y1 = -1;
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                if (s.label.at(0, 0, y, x) == 3) {
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                }
        CHECK((x1 - x0 + 1) * (y1 - y0 + 1) == expected);
    }

    TEST_CASE("anomaly samples carry exactly one anomaly object") {
        const auto spec = default_scene_spec();
        for (int i = 0; i < 20; ++i) {
            const auto a = generate_scene(spec, i, true);
            CHECK(count_label(a, spec.labels.anomaly_id()) > 0);
            const auto n = generate_scene(spec, i, false);
            CHECK(count_label(n, spec.labels.anomaly_id()) == 0);
        }
    }

    TEST_CASE("noiseless class pixels use only their declared colours") {
        auto spec = default_scene_spec();
        spec.noise_level = 0.0;
        for (int i = 0; i < 30; ++i) {
            const auto s = generate_scene(spec, i, i % 3 == 0);
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x) {
                    const int id = s.label.at(0, 0, y, x);
                    const Rgb c{s.image.at(0, 0, y, x), s.image.at(0, 1, y, x), s.image.at(0, 2, y, x)};
                    ColorBox box = spec.background.color_box();
                    for (const auto& k : spec.shape_kinds)
                        if (k.class_id == id) box = k.color_box();
                    if (id == spec.labels.anomaly_id()) {
                        bool any = false;
                        for (const auto& k : spec.anomaly_kinds) any = any || k.color_box().contains(c, 1e-6);
                        CHECK(any);
                    } else {
                        CHECK(box.contains(c, 1e-6));
                    }
                }
        }
    }

    TEST_CASE("invalid specs are configuration errors") {
        auto spec = default_scene_spec();
        spec.width = 0;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
        CHECK_THROWS_AS(generate_scene(spec, 0, false), ConfigError);
        CHECK_THROWS_AS(default_scene_spec(0), ConfigError);
        auto overlap = default_scene_spec();
        overlap.anomaly_kinds[0].color = overlap.shape_kinds[0].color;
        overlap.anomaly_kinds[0].geometry = overlap.shape_kinds[0].geometry;
        CHECK_THROWS_AS(overlap.validate(), ConfigError);
        CHECK_THROWS_AS(scene_spec_from_json(Json{{"widht", 32}}), ConfigError);
    }

    TEST_CASE("build_dataset bookkeeping, split purity and byte-identical rebuild") {
        const auto spec = default_scene_spec(6, 32, 32, 5);
        const SplitCounts counts{8, 2, 2, 2};
        const auto a = scratch("a");
        const auto b = scratch("b");
        const auto m = build_dataset(spec, counts, a);
        build_dataset(spec, counts, b);
        CHECK(m.total() == 14);
        CHECK(m.splits.at(Split::Train).size() == 8);
        CHECK(m.splits.at(Split::Val).size() == 2);
        CHECK(m.splits.at(Split::Test).size() == 2);
        CHECK(m.splits.at(Split::Anomaly).size() == 2);
        CHECK(sha256_tree(a) == sha256_tree(b));

        const auto ds = load_dataset(a);
        std::set<int> train_classes;
        for (Split s : {Split::Train, Split::Val, Split::Test})
            for (int id : ds.ids(s))
                for (int v : ds.labels[static_cast<std::size_t>(id)].values()) {
                    CHECK(v >= 1);
                    CHECK(v <= 6);
                    if (s == Split::Train) train_classes.insert(v);
                }
        CHECK(train_classes.size() == 6);
        for (int id : ds.ids(Split::Anomaly)) {
            int anomalies = 0;
            for (int v : ds.labels[static_cast<std::size_t>(id)].values()) anomalies += v == 7 ? 1 : 0;
            CHECK(anomalies > 0);
        }
        for (const auto& [id, rel] : ds.manifest.image_paths) CHECK(fs::exists(a / rel));
        const auto j = read_json_file(a / "manifest.json");
        CHECK(j.contains("version"));
        CHECK(j.contains("spec"));
        CHECK(j.contains("splits"));
    }

    TEST_CASE("scene spec json round trip") {
        const auto spec = default_scene_spec(4, 32, 48, 77);
        const auto back = scene_spec_from_json(to_json(spec));
        CHECK(to_json(back) == to_json(spec));
        CHECK(generate_scene(back, 3, true).image.storage() == generate_scene(spec, 3, true).image.storage());
    }
}
