#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "synthcp/errors.hpp"
#include "synthcp/hashing.hpp"
#include "synthcp/image_io.hpp"
#include "synthcp/json_util.hpp"
#include "synthcp/nn/tensor.hpp"
#include "synthcp/rng.hpp"

using namespace synthcp;
namespace fs = std::filesystem;

TEST_SUITE("core") {
    TEST_CASE("rng streams are reproducible and seed-dependent") {
        Rng a(42);
        Rng b(42);
        Rng c(43);
        bool differs = false;
        for (int i = 0; i < 100; ++i) {
            const auto x = a.next_u64();
            CHECK(x == b.next_u64());
            differs = differs || x != c.next_u64();
        }
        CHECK(differs);
        CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    }

    TEST_CASE("rng mappings stay in range and have plausible moments") {
        Rng r(7);
        double sum = 0.0;
        double sq = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const double u = r.uniform();
            REQUIRE(u >= 0.0);
            REQUIRE(u < 1.0);
            const int k = r.uniform_int(-2, 3);
            REQUIRE(k >= -2);
            REQUIRE(k <= 3);
            const double z = r.normal();
            sum += z;
            sq += z * z;
            REQUIRE(std::abs(r.truncated_normal(0.5)) <= 1.0);
        }
        CHECK(std::abs(sum / n) < 0.05);
        CHECK(std::abs(sq / n - 1.0) < 0.05);
    }

    TEST_CASE("sha256 of known strings") {
        CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    TEST_CASE("tree hash depends on names and contents only") {
        const fs::path a = fs::temp_directory_path() / "synthcp_tree_a";
        const fs::path b = fs::temp_directory_path() / "synthcp_tree_b";
        for (const auto& d : {a, b}) {
            fs::remove_all(d);
            fs::create_directories(d / "sub");
        }
        std::ofstream(a / "x.txt") << "one";
        std::ofstream(a / "sub" / "y.txt") << "two";
        std::ofstream(b / "sub" / "y.txt") << "two";
        std::ofstream(b / "x.txt") << "one";
        CHECK(sha256_tree(a) == sha256_tree(b));
        std::ofstream(b / "x.txt") << "ONE";
        CHECK(sha256_tree(a) != sha256_tree(b));
    }

    TEST_CASE("json helpers reject unknown keys and bad types") {
        const Json j = Json::parse(R"({"a": 1, "b": "x"})");
        CHECK_NOTHROW(require_known_keys(j, {"a", "b"}, "t"));
        CHECK_THROWS_AS(require_known_keys(j, {"a"}, "t"), ConfigError);
        CHECK(value_or(j, "a", 5, "t") == 1);
        CHECK(value_or(j, "missing", 5, "t") == 5);
        CHECK_THROWS_AS(value_or(j, "b", 5, "t"), ConfigError);
    }

    TEST_CASE("atomic json write leaves no temporary file") {
        const fs::path dir = fs::temp_directory_path() / "synthcp_atomic";
        fs::remove_all(dir);
        fs::create_directories(dir);
        write_json_atomic(dir / "f.json", Json{{"k", 3}});
        CHECK(read_json_file(dir / "f.json").at("k") == 3);
        int files = 0;
        for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
        CHECK(files == 1);
    }

    TEST_CASE("png round trip and deterministic bytes") {
        const fs::path dir = fs::temp_directory_path() / "synthcp_png";
        fs::create_directories(dir);
        Image8 img{5, 3, 3, {}};
        for (int i = 0; i < 45; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 5));
        write_png(dir / "a.png", img);
        write_png(dir / "b.png", img);
        CHECK(sha256_file(dir / "a.png") == sha256_file(dir / "b.png"));
        const auto back = read_png(dir / "a.png");
        CHECK(back.width == 5);
        CHECK(back.height == 3);
        CHECK(back.channels == 3);
        CHECK(back.pixels == img.pixels);
        CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
    }

    TEST_CASE("tensor storage is 64-byte aligned and indexes NCHW") {
        nn::Tensor<float> t(nn::Shape{2, 3, 4, 5});
        CHECK(reinterpret_cast<std::uintptr_t>(t.data()) % 64 == 0);
        t.at(1, 2, 3, 4) = 7.0f;
        CHECK(t[t.size() - 1] == 7.0f);
        CHECK(t.image(1).size() == 60);
        CHECK_THROWS_AS(t.reshape(nn::Shape{1, 1, 1, 7}), ShapeError);
        CHECK_THROWS_AS(nn::Tensor<float>(nn::Shape{1, 1, 1, 2}, std::vector<float>{1.0f}), ShapeError);
    }
}
