#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "s2a/container.hpp"
#include "s2a/errors.hpp"
#include "s2a/rng.hpp"

using namespace s2a;

namespace {

ContainerFile random_file(RngState& rng) {
    ContainerFile f;
    const int n = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < n; ++i) {
        const int rank = 1 + static_cast<int>(rng.below(3));
        std::vector<int64_t> shape;
        for (int d = 0; d < rank; ++d) shape.push_back(1 + static_cast<int64_t>(rng.below(6)));
        Tensor<float> t(shape);
        for (auto& v : t.data) v = static_cast<float>(rng.normal());
        f.add("t" + std::to_string(i) + std::string(static_cast<size_t>(rng.below(5)), 'x'),
              std::move(t));
    }
    f.metadata_json = "{\"case\":" + std::to_string(rng.below(1000)) + "}";
    return f;
}

bool same(const ContainerFile& a, const ContainerFile& b) {
    if (a.metadata_json != b.metadata_json || a.tensors.size() != b.tensors.size()) return false;
    for (size_t i = 0; i < a.tensors.size(); ++i) {
        if (a.tensors[i].first != b.tensors[i].first) return false;
        const auto& x = a.tensors[i].second;
        const auto& y = b.tensors[i].second;
        if (x.shape != y.shape) return false;
        if (std::memcmp(x.data.data(), y.data.data(), x.data.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

std::string msg_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("100 random containers survive memory and file round-trips bit-exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "s2a_container_rt";
    fs::create_directories(dir);
    RngState rng(7);
    for (int c = 0; c < 100; ++c) {
        const ContainerFile f = random_file(rng);

        const std::vector<uint8_t> bytes = serialize_container(f);
        CHECK(same(f, parse_container(bytes, "mem")));

        const std::string path = (dir / ("c" + std::to_string(c) + ".bin")).string();
        write_container(path, f);
        CHECK(same(f, read_container(path)));

        // A second serialization is byte-identical.
        CHECK(serialize_container(f) == bytes);
    }
    fs::remove_all(dir);
}

TEST_CASE("serializer rejects invalid tensors and names") {
    ContainerFile f;
    f.add("", Tensor<float>({2}, {1, 2}));
    CHECK_THROWS_AS(serialize_container(f), ValueError);

    ContainerFile g;
    g.add(std::string(0x10000, 'n'), Tensor<float>({2}, {1, 2}));
    CHECK_THROWS_AS(serialize_container(g), ValueError);

    ContainerFile h;
    h.add("scalar", Tensor<float>());
    CHECK_THROWS_AS(serialize_container(h), ValueError);
}

TEST_CASE("parser reports corruption with byte offsets") {
    ContainerFile f;
    f.add("weights", Tensor<float>({3, 4}, std::vector<float>(12, 0.5f)));
    f.metadata_json = "{\"k\":1}";
    const std::vector<uint8_t> good = serialize_container(f);
    REQUIRE(same(f, parse_container(good, "mem")));

    SUBCASE("bad magic") {
        auto b = good;
        b[0] = 'X';
        const std::string m = msg_of([&] { parse_container(b, "mem"); });
        CHECK(m.find("bad magic") != std::string::npos);
        CHECK_THROWS_AS(parse_container(b, "mem"), IoError);
    }

    SUBCASE("unsupported version") {
        auto b = good;
        b[4] = 9;
        const std::string m = msg_of([&] { parse_container(b, "mem"); });
        CHECK(m.find("unsupported container version") != std::string::npos);
    }

    SUBCASE("truncation at every prefix is caught and names the offset") {
        // Every strict prefix either fails a read (with the offset in the
        // message) or, for prefixes inside the trailing JSON length field
        // region, reports truncation; none may parse successfully.
        for (size_t len = 0; len < good.size(); ++len) {
            std::vector<uint8_t> b(good.begin(), good.begin() + static_cast<long>(len));
            const std::string m = msg_of([&] { parse_container(b, "mem"); });
            REQUIRE(!m.empty());
            CHECK(m.find("truncated") != std::string::npos);
            CHECK(m.find("byte offset") != std::string::npos);
        }
    }

    SUBCASE("trailing bytes rejected") {
        auto b = good;
        b.push_back(0);
        const std::string m = msg_of([&] { parse_container(b, "mem"); });
        CHECK(m.find("trailing bytes") != std::string::npos);
    }

    SUBCASE("zero-length tensor name") {
        // name_len lives right after the 12-byte header.
        auto b = good;
        b[12] = 0;
        b[13] = 0;
        const std::string m = msg_of([&] { parse_container(b, "mem"); });
        CHECK(m.find("zero-length tensor name") != std::string::npos);
    }

    SUBCASE("rank 0 rejected") {
        auto b = good;
        const size_t rank_at = 12 + 2 + 7;  // header, name_len, "weights"
        REQUIRE(b[rank_at] == 2);
        b[rank_at] = 0;
        const std::string m = msg_of([&] { parse_container(b, "mem"); });
        CHECK(m.find("rank 0") != std::string::npos);
    }

    SUBCASE("zero extent rejected") {
        auto b = good;
        const size_t ext_at = 12 + 2 + 7 + 1;
        REQUIRE(b[ext_at] == 3);
        std::memset(b.data() + ext_at, 0, 4);
        const std::string m = msg_of([&] { parse_container(b, "mem"); });
        CHECK(m.find("zero extent") != std::string::npos);
    }
}

TEST_CASE("find and require behave on present and missing names") {
    ContainerFile f;
    f.add("a", Tensor<float>({1}, {4.0f}));
    CHECK(f.find("a") != nullptr);
    CHECK(f.find("b") == nullptr);
    CHECK(f.require("a").data[0] == 4.0f);
    CHECK_THROWS_AS(f.require("b"), IoError);
    const std::string m = msg_of([&] { f.require("b"); });
    CHECK(m.find("b") != std::string::npos);
}

TEST_CASE("read_container refuses a missing path") {
    CHECK_THROWS_AS(read_container("/nonexistent/s2a/file.bin"), IoError);
}
