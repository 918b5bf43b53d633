#include "s2a/container.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "s2a/errors.hpp"

namespace s2a {

static const char kMagic[4] = {'S', '2', 'A', '1'};
static const uint32_t kVersion = 1;

const Tensor<float>* ContainerFile::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

const Tensor<float>& ContainerFile::require(const std::string& name) const {
    const Tensor<float>* t = find(name);
    if (!t) throw IoError("container is missing tensor '" + name + "'");
    return *t;
}

void ContainerFile::add(const std::string& name, Tensor<float> t) {
    tensors.emplace_back(name, std::move(t));
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Cursor {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;
    const std::string& origin;

    void need(size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw IoError(origin + ": truncated while reading " + what + " at byte offset " +
                          std::to_string(pos) + " (file has " + std::to_string(bytes.size()) +
                          " bytes)");
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
    float f32(const char* what) {
        uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

std::vector<uint8_t> serialize_container(const ContainerFile& file) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(file.tensors.size()));
    for (const auto& [name, t] : file.tensors) {
        if (name.empty()) throw ValueError("container tensor names must be non-empty");
        if (name.size() > 0xffff) throw ValueError("container tensor name too long: " + name);
        if (t.rank() < 1 || t.rank() > 255)
            throw ValueError("container tensor '" + name + "' has unsupported rank " +
                             std::to_string(t.rank()));
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<uint8_t>(t.rank()));
        for (int64_t e : t.shape) {
            if (e <= 0 || e > 0xffffffffLL)
                throw ValueError("container tensor '" + name + "' extent out of range: " +
                                 std::to_string(e));
            put_u32(out, static_cast<uint32_t>(e));
        }
        for (float v : t.data) put_f32(out, v);
    }
    put_u32(out, static_cast<uint32_t>(file.metadata_json.size()));
    out.insert(out.end(), file.metadata_json.begin(), file.metadata_json.end());
    return out;
}

ContainerFile parse_container(const std::vector<uint8_t>& bytes, const std::string& origin) {
    Cursor c{bytes, 0, origin};
    c.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw IoError(origin + ": bad magic, not an S2A1 container");
    c.pos = 4;
    const uint32_t version = c.u32("version");
    if (version != kVersion)
        throw IoError(origin + ": unsupported container version " + std::to_string(version) +
                      " (expected " + std::to_string(kVersion) + ")");
    const uint32_t count = c.u32("tensor count");
    ContainerFile file;
    file.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = c.u16("tensor name length");
        if (name_len == 0)
            throw IoError(origin + ": zero-length tensor name at byte offset " +
                          std::to_string(c.pos - 2));
        c.need(name_len, "tensor name");
        std::string name(bytes.begin() + static_cast<long>(c.pos),
                         bytes.begin() + static_cast<long>(c.pos + name_len));
        c.pos += name_len;
        const uint8_t rank = c.u8("tensor rank");
        if (rank == 0)
            throw IoError(origin + ": tensor '" + name + "' has rank 0 at byte offset " +
                          std::to_string(c.pos - 1));
        std::vector<int64_t> shape(rank);
        int64_t numel = 1;
        for (uint8_t r = 0; r < rank; ++r) {
            const uint32_t e = c.u32("tensor extent");
            if (e == 0)
                throw IoError(origin + ": tensor '" + name + "' has zero extent at byte offset " +
                              std::to_string(c.pos - 4));
            shape[r] = static_cast<int64_t>(e);
            numel *= shape[r];
        }
        c.need(static_cast<size_t>(numel) * 4, "tensor payload");
        Tensor<float> t(shape);
        for (int64_t j = 0; j < numel; ++j)
            t.data[static_cast<size_t>(j)] = c.f32("tensor payload");
        file.tensors.emplace_back(std::move(name), std::move(t));
    }
    const uint32_t json_len = c.u32("metadata length");
    c.need(json_len, "metadata");
    file.metadata_json.assign(bytes.begin() + static_cast<long>(c.pos),
                              bytes.begin() + static_cast<long>(c.pos + json_len));
    c.pos += json_len;
    if (c.pos != bytes.size())
        throw IoError(origin + ": " + std::to_string(bytes.size() - c.pos) +
                      " trailing bytes after metadata at byte offset " + std::to_string(c.pos));
    return file;
}

void write_container(const std::string& path, const ContainerFile& file) {
    const std::vector<uint8_t> bytes = serialize_container(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

ContainerFile read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse_container(bytes, path);
}

}  // namespace s2a
