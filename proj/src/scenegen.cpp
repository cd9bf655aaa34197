#include "synthcp/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "synthcp/errors.hpp"
#include "synthcp/image_io.hpp"
#include "synthcp/json_util.hpp"
#include "synthcp/rng.hpp"

namespace synthcp::scenegen {

namespace fs = std::filesystem;

bool ColorBox::contains(const Rgb& c, double tol) const {
    for (int k = 0; k < 3; ++k)
        if (c[k] < lo[k] - tol || c[k] > hi[k] + tol) return false;
    return true;
}

bool ColorBox::disjoint(const ColorBox& other) const {
    for (int k = 0; k < 3; ++k)
        if (hi[k] < other.lo[k] || other.hi[k] < lo[k]) return true;
    return false;
}

namespace {

ColorBox make_box(const Rgb& lo, const Rgb& hi, double spread) {
    ColorBox b;
    for (int k = 0; k < 3; ++k) {
        b.lo[k] = std::clamp(lo[k] - spread, 0.0, 1.0);
        b.hi[k] = std::clamp(hi[k] + spread, 0.0, 1.0);
    }
    return b;
}

double texture_offset(Texture t, double amplitude, int period, int phase, int x, int y) {
    switch (t) {
        case Texture::Solid:
            return 0.0;
        case Texture::Stripes:
            return ((x + y + phase) / period) % 2 == 0 ? amplitude : -amplitude;
        case Texture::Checker:
            return ((x + phase) / period + y / period) % 2 == 0 ? amplitude : -amplitude;
    }
    return 0.0;
}

}  // namespace

ColorBox ShapeKind::color_box() const { return make_box(color, color, jitter + texture_amplitude); }

ColorBox BackgroundKind::color_box() const {
    Rgb lo{};
    Rgb hi{};
    for (int k = 0; k < 3; ++k) {
        lo[k] = std::min(top[k], bottom[k]);
        hi[k] = std::max(top[k], bottom[k]);
    }
    return make_box(lo, hi, jitter + texture_amplitude);
}

void SceneSpec::validate() const {
    if (labels.num_classes < 1) throw ConfigError("scene spec: num_classes must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("scene spec: image dimensions must be positive");
    if (min_shapes < 0 || max_shapes < min_shapes) throw ConfigError("scene spec: invalid shapes_per_scene range");
    if (noise_level < 0.0 || noise_level > 1.0) throw ConfigError("scene spec: noise_level must lie in [0, 1]");
    if (max_shapes > 0 && shape_kinds.empty()) throw ConfigError("scene spec: shapes requested but no shape kinds");
    for (const auto& k : shape_kinds) {
        if (k.class_id < 1 || k.class_id > labels.num_classes)
            throw ConfigError("scene spec: shape kind class id " + std::to_string(k.class_id) + " out of range");
        if (k.class_id == LabelSpace::background_id)
            throw ConfigError("scene spec: shape kinds may not use the background id");
        if (k.min_radius <= 0.0 || k.max_radius < k.min_radius) throw ConfigError("scene spec: invalid radius range");
        if (k.texture_period < 1) throw ConfigError("scene spec: texture period must be positive");
    }
    std::set<Geometry> in_geometry;
    std::vector<ColorBox> in_boxes{background.color_box()};
    for (const auto& k : shape_kinds) {
        in_geometry.insert(k.geometry);
        in_boxes.push_back(k.color_box());
    }
    for (const auto& a : anomaly_kinds) {
        if (in_geometry.count(a.geometry))
            throw ConfigError("scene spec: anomaly geometry is shared with an in-distribution kind");
        for (const auto& b : in_boxes)
            if (!a.color_box().disjoint(b))
                throw ConfigError("scene spec: anomaly colour range overlaps an in-distribution colour range");
        if (a.min_radius <= 0.0 || a.max_radius < a.min_radius) throw ConfigError("scene spec: invalid radius range");
        if (2.0 * a.max_radius >= std::min(width, height))
            throw ConfigError("scene spec: anomaly objects do not fit inside the image");
    }
}

SceneSpec default_scene_spec(int num_classes, int width, int height, std::uint64_t seed) {
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.labels.num_classes = num_classes;
    spec.rng_seed = seed;
    spec.background = BackgroundKind{{0.55, 0.60, 0.66}, {0.36, 0.40, 0.30}, 0.04, Texture::Checker, 0.03, 4};

    const double scale = std::min(width, height) / 32.0;
    // Cycled for classes 2..L.
    const std::vector<ShapeKind> palette = {
        {2, Geometry::Disc, {0.82, 0.20, 0.20}, 0.06, Texture::Solid, 0.0, 3, 3.0, 7.0},
        {3, Geometry::Rect, {0.20, 0.30, 0.82}, 0.06, Texture::Stripes, 0.08, 2, 3.0, 7.0},
        {4, Geometry::Triangle, {0.18, 0.68, 0.22}, 0.06, Texture::Solid, 0.0, 3, 4.0, 8.0},
        {5, Geometry::Ellipse, {0.88, 0.80, 0.22}, 0.05, Texture::Checker, 0.06, 2, 3.0, 7.0},
        {6, Geometry::Ring, {0.82, 0.42, 0.18}, 0.06, Texture::Solid, 0.0, 3, 4.0, 8.0},
    };
    for (int id = 2; id <= num_classes; ++id) {
        ShapeKind k = palette[static_cast<std::size_t>(id - 2) % palette.size()];
        k.class_id = id;
        k.min_radius *= scale;
        k.max_radius *= scale;
        spec.shape_kinds.push_back(k);
    }
    const int anomaly_id = spec.labels.anomaly_id();
    spec.anomaly_kinds = {
        {anomaly_id, Geometry::Cross, {0.76, 0.12, 0.78}, 0.05, Texture::Solid, 0.0, 3, 4.0 * scale, 7.0 * scale},
        {anomaly_id, Geometry::Diamond, {0.10, 0.84, 0.84}, 0.05, Texture::Solid, 0.0, 3, 4.0 * scale, 7.0 * scale},
    };
    spec.validate();
    return spec;
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train:
            return "train";
        case Split::Val:
            return "val";
        case Split::Test:
            return "test";
        case Split::Anomaly:
            return "anomaly";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    for (Split s : {Split::Train, Split::Val, Split::Test, Split::Anomaly})
        if (split_name(s) == name) return s;
    throw ConfigError("unknown split '" + name + "'");
}

bool SceneObject::covers(double px, double py) const {
    const double dx = px - cx;
    const double dy = py - cy;
    switch (geometry) {
        case Geometry::Disc:
            return dx * dx + dy * dy < rx * rx;
        case Geometry::Rect:
            return std::abs(dx) < rx && std::abs(dy) < ry;
        case Geometry::Triangle: {
            if (dy <= -ry || dy >= ry) return false;
            const double half = rx * (dy + ry) / (2.0 * ry);
            return std::abs(dx) < half;
        }
        case Geometry::Ellipse:
            return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) < 1.0;
        case Geometry::Ring: {
            const double d2 = dx * dx + dy * dy;
            const double inner = 0.55 * rx;
            return d2 < rx * rx && d2 >= inner * inner;
        }
        case Geometry::Cross:
            return (std::abs(dx) < rx && std::abs(dy) < ry / 3.0) || (std::abs(dx) < rx / 3.0 && std::abs(dy) < ry);
        case Geometry::Diamond:
            return std::abs(dx) / rx + std::abs(dy) / ry < 1.0;
    }
    return false;
}

Sample render_scene(const SceneSpec& spec, const Rgb& background_shift, const std::vector<SceneObject>& objects,
                    std::uint64_t noise_seed) {
    const int w = spec.width;
    const int h = spec.height;
    Sample s;
    s.image = nn::Tensor<float>(nn::Shape{1, 3, h, w});
    s.label = nn::Tensor<int>(nn::Shape{1, 1, h, w}, LabelSpace::background_id);
    const auto& bg = spec.background;
    Rng noise(noise_seed);

    for (int y = 0; y < h; ++y) {
        const double t = (y + 0.5) / h;
        for (int x = 0; x < w; ++x) {
            Rgb c{};
            for (int k = 0; k < 3; ++k) c[k] = bg.top[k] * (1.0 - t) + bg.bottom[k] * t + background_shift[k];
            double tex = texture_offset(bg.texture, bg.texture_amplitude, bg.texture_period, 0, x, y);
            int label = LabelSpace::background_id;
            for (const auto& obj : objects) {
                if (!obj.covers(x + 0.5, y + 0.5)) continue;
                label = obj.class_id;
                c = obj.color;
                tex = texture_offset(obj.texture, obj.texture_amplitude, obj.texture_period, obj.texture_phase, x, y);
            }
            s.label.at(0, 0, y, x) = label;
            for (int k = 0; k < 3; ++k) {
                double v = std::clamp(c[k] + tex, 0.0, 1.0);
                if (spec.noise_level > 0.0) v = std::clamp(v + spec.noise_level * noise.normal(), 0.0, 1.0);
                s.image.at(0, k, y, x) = static_cast<float>(v);
            }
        }
    }
    return s;
}

namespace {

SceneObject sample_object(const ShapeKind& kind, const SceneSpec& spec, Rng& rng, bool inside) {
    SceneObject o;
    o.class_id = kind.class_id;
    o.geometry = kind.geometry;
    const double r = rng.uniform(kind.min_radius, kind.max_radius);
    o.rx = r;
    o.ry = (kind.geometry == Geometry::Rect || kind.geometry == Geometry::Ellipse) ? r * rng.uniform(0.6, 1.0) : r;
    if (inside) {
        o.cx = rng.uniform(o.rx, spec.width - o.rx);
        o.cy = rng.uniform(o.ry, spec.height - o.ry);
    } else {
        o.cx = rng.uniform(0.0, spec.width);
        o.cy = rng.uniform(0.0, spec.height);
    }
    for (int k = 0; k < 3; ++k) o.color[k] = std::clamp(kind.color[k] + rng.uniform(-kind.jitter, kind.jitter), 0.0, 1.0);
    o.texture = kind.texture;
    o.texture_amplitude = kind.texture_amplitude;
    o.texture_period = kind.texture_period;
    o.texture_phase = rng.uniform_int(0, 2 * kind.texture_period - 1);
    return o;
}

}  // namespace

Sample generate_scene(const SceneSpec& spec, int index, bool allow_anomaly) {
    if (index < 0) throw InputError("generate_scene: negative sample index");
    spec.validate();
    if (allow_anomaly && spec.anomaly_kinds.empty()) throw ConfigError("generate_scene: no anomaly kinds configured");

    Rng rng(mix_seed(spec.rng_seed, static_cast<std::uint64_t>(index)));
    Rgb shift{};
    for (auto& v : shift) v = rng.uniform(-spec.background.jitter, spec.background.jitter);

    std::vector<SceneObject> objects;
    const int count = rng.uniform_int(spec.min_shapes, spec.max_shapes);
    for (int i = 0; i < count; ++i) {
        const auto& kind = spec.shape_kinds[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(spec.shape_kinds.size()) - 1))];
        objects.push_back(sample_object(kind, spec, rng, false));
    }
    if (allow_anomaly) {
        const auto& kind = spec.anomaly_kinds[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(spec.anomaly_kinds.size()) - 1))];
        objects.push_back(sample_object(kind, spec, rng, true));
    }
    Sample s = render_scene(spec, shift, objects, rng.next_u64());
    s.id = index;
    s.split = allow_anomaly ? Split::Anomaly : Split::Train;
    return s;
}

std::size_t DatasetManifest::total() const {
    std::size_t n = 0;
    for (const auto& [split, ids] : splits) n += ids.size();
    return n;
}

namespace {

Image8 to_image8(const nn::Tensor<float>& image) {
    const auto s = image.shape();
    Image8 out{s.w, s.h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(s.w) * s.h * 3)};
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
            for (int k = 0; k < 3; ++k) {
                const float v = std::clamp(image.at(0, k, y, x), 0.0f, 1.0f);
                out.pixels[(static_cast<std::size_t>(y) * s.w + x) * 3 + k] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    return out;
}

Image8 to_image8(const nn::Tensor<int>& label) {
    const auto s = label.shape();
    Image8 out{s.w, s.h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(s.w) * s.h)};
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = static_cast<std::uint8_t>(label[i]);
    return out;
}

std::string numbered(const char* dir, int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s/%06d.png", dir, id);
    return buf;
}

}  // namespace

DatasetManifest build_dataset(const SceneSpec& spec, const SplitCounts& counts, const fs::path& out_dir) {
    spec.validate();
    if (counts.train < 1 || counts.val < 0 || counts.test < 0 || counts.anomaly < 0)
        throw ConfigError("build_dataset: invalid split counts");
    if (spec.labels.num_classes > 254) throw ConfigError("build_dataset: label ids must fit in 8 bits");
    try {
        fs::create_directories(out_dir);
        fs::remove_all(out_dir / "images");
        fs::remove_all(out_dir / "labels");
        fs::create_directories(out_dir / "images");
        fs::create_directories(out_dir / "labels");
    } catch (const fs::filesystem_error& e) {
        throw IoError("cannot prepare dataset directory " + out_dir.string() + ": " + e.what());
    }

    DatasetManifest m;
    m.spec = spec;
    const std::pair<Split, int> layout[] = {
        {Split::Train, counts.train}, {Split::Val, counts.val}, {Split::Test, counts.test}, {Split::Anomaly, counts.anomaly}};
    std::set<int> train_classes;
    int id = 0;
    for (const auto& [split, n] : layout) {
        auto& ids = m.splits[split];
        for (int i = 0; i < n; ++i, ++id) {
            const Sample s = generate_scene(spec, id, split == Split::Anomaly);
            if (split == Split::Train)
                for (int v : s.label.values()) train_classes.insert(v);
            m.image_paths[id] = numbered("images", id);
            m.label_paths[id] = numbered("labels", id);
            write_png(out_dir / m.image_paths[id], to_image8(s.image));
            write_png(out_dir / m.label_paths[id], to_image8(s.label));
            ids.push_back(id);
        }
    }
    if (train_classes.count(spec.labels.anomaly_id())) throw std::logic_error("anomaly id leaked into train split");
    for (int c = 1; c <= spec.labels.num_classes; ++c)
        if (!train_classes.count(c))
            throw ConfigError("build_dataset: class " + std::to_string(c) + " never appears in the train split");

    write_json_atomic(out_dir / "manifest.json", to_json(m));
    return m;
}

const std::vector<int>& Dataset::ids(Split s) const {
    static const std::vector<int> empty;
    const auto it = manifest.splits.find(s);
    return it == manifest.splits.end() ? empty : it->second;
}

Dataset load_dataset(const fs::path& root) {
    if (!fs::exists(root / "manifest.json")) throw IoError("no dataset manifest at " + (root / "manifest.json").string());
    Dataset d;
    d.root = root;
    d.manifest = manifest_from_json(read_json_file(root / "manifest.json"));
    const auto& spec = d.manifest.spec;
    const std::size_t n = d.manifest.total();
    d.images.resize(n);
    d.labels.resize(n);
    for (const auto& [split, ids] : d.manifest.splits) {
        const int max_label = split == Split::Anomaly ? spec.labels.anomaly_id() : spec.labels.num_classes;
        for (int id : ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= n) throw IoError("manifest: sample id out of range");
            const fs::path ip = root / d.manifest.image_paths.at(id);
            const fs::path lp = root / d.manifest.label_paths.at(id);
            const Image8 img = read_png(ip);
            const Image8 lab = read_png(lp);
            if (img.channels != 3 || lab.channels != 1 || img.width != spec.width || img.height != spec.height ||
                lab.width != spec.width || lab.height != spec.height)
                throw IoError("dataset sample " + ip.string() + " has unexpected dimensions");
            nn::Tensor<float> image(nn::Shape{1, 3, spec.height, spec.width});
            nn::Tensor<int> label(nn::Shape{1, 1, spec.height, spec.width});
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * spec.width + x;
                    for (int k = 0; k < 3; ++k) image.at(0, k, y, x) = img.pixels[p * 3 + k] / 255.0f;
                    const int v = lab.pixels[p];
                    if (v < 1 || v > max_label)
                        throw IoError(lp.string() + ": label " + std::to_string(v) + " invalid for split " +
                                      split_name(split));
                    label[p] = v;
                }
            d.images[static_cast<std::size_t>(id)] = std::move(image);
            d.labels[static_cast<std::size_t>(id)] = std::move(label);
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const char* geometry_name(Geometry g) {
    switch (g) {
        case Geometry::Disc: return "disc";
        case Geometry::Rect: return "rect";
        case Geometry::Triangle: return "triangle";
        case Geometry::Ellipse: return "ellipse";
        case Geometry::Ring: return "ring";
        case Geometry::Cross: return "cross";
        case Geometry::Diamond: return "diamond";
    }
    return "disc";
}

Geometry geometry_from(const std::string& s) {
    for (Geometry g : {Geometry::Disc, Geometry::Rect, Geometry::Triangle, Geometry::Ellipse, Geometry::Ring,
                       Geometry::Cross, Geometry::Diamond})
        if (s == geometry_name(g)) return g;
    throw ConfigError("unknown geometry '" + s + "'");
}

const char* texture_name(Texture t) {
    switch (t) {
        case Texture::Solid: return "solid";
        case Texture::Stripes: return "stripes";
        case Texture::Checker: return "checker";
    }
    return "solid";
}

Texture texture_from(const std::string& s) {
    for (Texture t : {Texture::Solid, Texture::Stripes, Texture::Checker})
        if (s == texture_name(t)) return t;
    throw ConfigError("unknown texture '" + s + "'");
}

Json kind_json(const ShapeKind& k) {
    return Json{{"class_id", k.class_id},
                {"geometry", geometry_name(k.geometry)},
                {"color", k.color},
                {"jitter", k.jitter},
                {"texture", texture_name(k.texture)},
                {"texture_amplitude", k.texture_amplitude},
                {"texture_period", k.texture_period},
                {"radius", {k.min_radius, k.max_radius}}};
}

ShapeKind kind_from(const Json& j) {
    require_known_keys(j, {"class_id", "geometry", "color", "jitter", "texture", "texture_amplitude",
                           "texture_period", "radius"},
                       "shape kind");
    try {
        ShapeKind k;
        k.class_id = j.at("class_id").get<int>();
        k.geometry = geometry_from(j.at("geometry").get<std::string>());
        k.color = j.at("color").get<Rgb>();
        k.jitter = j.value("jitter", k.jitter);
        k.texture = texture_from(j.value("texture", std::string("solid")));
        k.texture_amplitude = j.value("texture_amplitude", 0.0);
        k.texture_period = j.value("texture_period", 3);
        const auto r = j.at("radius").get<std::array<double, 2>>();
        k.min_radius = r[0];
        k.max_radius = r[1];
        return k;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("shape kind: ") + e.what());
    }
}

}  // namespace

Json to_json(const SceneSpec& spec) {
    Json kinds = Json::array();
    for (const auto& k : spec.shape_kinds) kinds.push_back(kind_json(k));
    Json anomalies = Json::array();
    for (const auto& k : spec.anomaly_kinds) anomalies.push_back(kind_json(k));
    const auto& bg = spec.background;
    return Json{{"width", spec.width},
                {"height", spec.height},
                {"num_classes", spec.labels.num_classes},
                {"shapes_per_scene", {spec.min_shapes, spec.max_shapes}},
                {"noise_level", spec.noise_level},
                {"rng_seed", spec.rng_seed},
                {"background",
                 {{"top", bg.top},
                  {"bottom", bg.bottom},
                  {"jitter", bg.jitter},
                  {"texture", texture_name(bg.texture)},
                  {"texture_amplitude", bg.texture_amplitude},
                  {"texture_period", bg.texture_period}}},
                {"shape_kinds", kinds},
                {"anomaly_kinds", anomalies}};
}

SceneSpec scene_spec_from_json(const Json& j) {
    require_known_keys(j, {"width", "height", "num_classes", "shapes_per_scene", "noise_level", "rng_seed",
                           "background", "shape_kinds", "anomaly_kinds"},
                       "dataset.spec");
    const int classes = value_or(j, "num_classes", 6, "dataset.spec");
    const int width = value_or(j, "width", 32, "dataset.spec");
    const int height = value_or(j, "height", 32, "dataset.spec");
    if (classes < 1) throw ConfigError("dataset.spec: num_classes must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("dataset.spec: image dimensions must be positive");
    SceneSpec spec = default_scene_spec(classes, width, height, value_or<std::uint64_t>(j, "rng_seed", 1, "dataset.spec"));
    spec.noise_level = value_or(j, "noise_level", spec.noise_level, "dataset.spec");
    try {
        if (j.contains("shapes_per_scene")) {
            const auto r = j.at("shapes_per_scene").get<std::array<int, 2>>();
            spec.min_shapes = r[0];
            spec.max_shapes = r[1];
        }
        if (j.contains("background")) {
            const auto& b = j.at("background");
            require_known_keys(b, {"top", "bottom", "jitter", "texture", "texture_amplitude", "texture_period"},
                               "dataset.spec.background");
            auto& bg = spec.background;
            bg.top = b.value("top", bg.top);
            bg.bottom = b.value("bottom", bg.bottom);
            bg.jitter = b.value("jitter", bg.jitter);
            bg.texture = texture_from(b.value("texture", std::string(texture_name(bg.texture))));
            bg.texture_amplitude = b.value("texture_amplitude", bg.texture_amplitude);
            bg.texture_period = b.value("texture_period", bg.texture_period);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("dataset.spec: ") + e.what());
    }
    if (j.contains("shape_kinds")) {
        spec.shape_kinds.clear();
        for (const auto& k : j.at("shape_kinds")) spec.shape_kinds.push_back(kind_from(k));
    }
    if (j.contains("anomaly_kinds")) {
        spec.anomaly_kinds.clear();
        for (const auto& k : j.at("anomaly_kinds")) spec.anomaly_kinds.push_back(kind_from(k));
    }
    spec.validate();
    return spec;
}

Json to_json(const DatasetManifest& m) {
    Json splits = Json::object();
    Json counts = Json::object();
    for (const auto& [split, ids] : m.splits) {
        splits[split_name(split)] = ids;
        counts[split_name(split)] = ids.size();
    }
    Json files = Json::object();
    for (const auto& [id, path] : m.image_paths)
        files[std::to_string(id)] = {{"image", path}, {"label", m.label_paths.at(id)}};
    return Json{{"version", m.version}, {"spec", to_json(m.spec)}, {"counts", counts}, {"splits", splits}, {"files", files}};
}

DatasetManifest manifest_from_json(const Json& j) {
    DatasetManifest m;
    try {
        m.version = j.at("version").get<std::string>();
        if (m.version != DatasetManifest::kVersion) throw IoError("unsupported dataset manifest version " + m.version);
        m.spec = scene_spec_from_json(j.at("spec"));
        for (auto it = j.at("splits").begin(); it != j.at("splits").end(); ++it)
            m.splits[split_from_name(it.key())] = it.value().get<std::vector<int>>();
        for (auto it = j.at("files").begin(); it != j.at("files").end(); ++it) {
            const int id = std::stoi(it.key());
            m.image_paths[id] = it.value().at("image").get<std::string>();
            m.label_paths[id] = it.value().at("label").get<std::string>();
        }
        if (j.contains("counts"))
            for (auto it = j.at("counts").begin(); it != j.at("counts").end(); ++it)
                if (m.splits[split_from_name(it.key())].size() != it.value().get<std::size_t>())
                    throw IoError("manifest counts do not match listed entries");
    } catch (const Json::exception& e) {
        throw IoError(std::string("malformed dataset manifest: ") + e.what());
    }
    for (const auto& [split, ids] : m.splits)
        for (int id : ids)
            if (!m.image_paths.count(id) || !m.label_paths.count(id))
                throw IoError("manifest lists sample " + std::to_string(id) + " without file paths");
    return m;
}

}  // namespace synthcp::scenegen
