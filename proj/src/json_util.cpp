#include "synthcp/json_util.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include "synthcp/errors.hpp"

namespace synthcp {

void require_known_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view context) {
    if (!j.is_object()) throw ConfigError(std::string(context) + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (auto a : allowed) known = known || it.key() == a;
        if (!known) throw ConfigError(std::string(context) + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
T value_or(const Json& j, const char* key, T fallback, std::string_view context) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string(context) + "." + key + ": " + e.what());
    }
}

template int value_or(const Json&, const char*, int, std::string_view);
template double value_or(const Json&, const char*, double, std::string_view);
template bool value_or(const Json&, const char*, bool, std::string_view);
template std::uint64_t value_or(const Json&, const char*, std::uint64_t, std::string_view);
template std::string value_or(const Json&, const char*, std::string, std::string_view);

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

}  // namespace synthcp
