#include "ecgtcn/container.hpp"

#include <cstring>
#include <fstream>

namespace ecgtcn {

namespace {

constexpr char kMagic[4] = {'E', 'T', 'C', 'N'};

void put_u32(std::ostream& out, std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v & 0xff),
                         static_cast<std::uint8_t>((v >> 8) & 0xff),
                         static_cast<std::uint8_t>((v >> 16) & 0xff),
                         static_cast<std::uint8_t>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw DataError(std::string("container truncated reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::Real32: return 4;
        case DType::Int8: return 1;
        case DType::Int32: return 4;
    }
    throw DataError("unknown dtype code");
}

std::size_t TensorBlob::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

TensorBlob TensorBlob::from_f32(std::string name, std::vector<std::uint32_t> dims,
                                const float* values) {
    TensorBlob t;
    t.name = std::move(name);
    t.dtype = DType::Real32;
    t.dims = std::move(dims);
    t.data.resize(t.element_count() * 4);
    std::memcpy(t.data.data(), values, t.data.size());
    return t;
}

TensorBlob TensorBlob::from_i8(std::string name, std::vector<std::uint32_t> dims,
                               const std::int8_t* values) {
    TensorBlob t;
    t.name = std::move(name);
    t.dtype = DType::Int8;
    t.dims = std::move(dims);
    t.data.resize(t.element_count());
    std::memcpy(t.data.data(), values, t.data.size());
    return t;
}

TensorBlob TensorBlob::from_i32(std::string name, std::vector<std::uint32_t> dims,
                                const std::int32_t* values) {
    TensorBlob t;
    t.name = std::move(name);
    t.dtype = DType::Int32;
    t.dims = std::move(dims);
    t.data.resize(t.element_count() * 4);
    std::memcpy(t.data.data(), values, t.data.size());
    return t;
}

const float* TensorBlob::as_f32() const {
    if (dtype != DType::Real32) throw DataError("tensor " + name + " is not real32");
    return reinterpret_cast<const float*>(data.data());
}

const std::int8_t* TensorBlob::as_i8() const {
    if (dtype != DType::Int8) throw DataError("tensor " + name + " is not int8");
    return reinterpret_cast<const std::int8_t*>(data.data());
}

const std::int32_t* TensorBlob::as_i32() const {
    if (dtype != DType::Int32) throw DataError("tensor " + name + " is not int32");
    return reinterpret_cast<const std::int32_t*>(data.data());
}

const std::string& Container::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError("container metadata missing key '" + key + "'");
    return it->second;
}

long Container::meta_long(const std::string& key) const { return std::stol(meta_at(key)); }

double Container::meta_double(const std::string& key) const { return std::stod(meta_at(key)); }

const TensorBlob& Container::tensor(const std::string& name) const {
    const TensorBlob* t = find(name);
    if (!t) throw DataError("container missing tensor '" + name + "'");
    return *t;
}

const TensorBlob* Container::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

void write_container(const std::string& path, const Container& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, Container::kVersion);

    std::string meta_text;
    for (const auto& [k, v] : c.meta) meta_text += k + "=" + v + "\n";
    put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));

    for (const auto& t : c.tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.dtype));
        put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) put_u32(out, d);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size()));
    }
    if (!out) throw DataError("write failed: " + path);
}

Container read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("bad magic: not an ETCN container: " + path);
    }
    const std::uint32_t version = get_u32(in, "version");
    if (version != Container::kVersion) {
        throw DataError("unsupported container version " + std::to_string(version));
    }

    Container c;
    const std::uint32_t meta_len = get_u32(in, "metadata length");
    std::string meta_text(meta_len, '\0');
    in.read(meta_text.data(), meta_len);
    if (in.gcount() != static_cast<std::streamsize>(meta_len)) {
        throw DataError("container truncated reading metadata");
    }
    std::size_t pos = 0;
    while (pos < meta_text.size()) {
        std::size_t nl = meta_text.find('\n', pos);
        if (nl == std::string::npos) nl = meta_text.size();
        const std::string line = meta_text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw DataError("malformed metadata line: " + line);
        c.meta[line.substr(0, eq)] = line.substr(eq + 1);
    }

    while (true) {
        std::uint8_t peek_byte;
        in.read(reinterpret_cast<char*>(&peek_byte), 1);
        if (in.gcount() == 0) break;  // clean EOF
        in.putback(static_cast<char>(peek_byte));

        TensorBlob t;
        const std::uint32_t name_len = get_u32(in, "tensor name length");
        t.name.resize(name_len);
        in.read(t.name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len)) {
            throw DataError("container truncated reading tensor name");
        }
        const std::uint32_t dtype_code = get_u32(in, "dtype");
        if (dtype_code > 2) throw DataError("tensor " + t.name + ": unknown dtype code");
        t.dtype = static_cast<DType>(dtype_code);
        const std::uint32_t rank = get_u32(in, "rank");
        t.dims.resize(rank);
        for (std::uint32_t i = 0; i < rank; ++i) t.dims[i] = get_u32(in, "dim");
        const std::size_t bytes = t.element_count() * dtype_size(t.dtype);
        t.data.resize(bytes);
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(bytes));
        if (in.gcount() != static_cast<std::streamsize>(bytes)) {
            throw DataError("container truncated reading tensor " + t.name);
        }
        c.tensors.push_back(std::move(t));
    }
    return c;
}

}  // namespace ecgtcn
