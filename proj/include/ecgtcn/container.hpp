#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ecgtcn/errors.hpp"

namespace ecgtcn {

// "ETCN" model container, little-endian throughout:
//   magic "ETCN" | version u32 | meta_len u32 | meta (key=value lines, UTF-8)
//   then per tensor until EOF:
//     name_len u32 | name | dtype u32 (0=real32, 1=int8, 2=int32)
//     rank u32 | dims u32 each | raw data

enum class DType : std::uint32_t { Real32 = 0, Int8 = 1, Int32 = 2 };

std::size_t dtype_size(DType t);

struct TensorBlob {
    std::string name;
    DType dtype = DType::Real32;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;

    std::size_t element_count() const;

    static TensorBlob from_f32(std::string name, std::vector<std::uint32_t> dims,
                               const float* values);
    static TensorBlob from_i8(std::string name, std::vector<std::uint32_t> dims,
                              const std::int8_t* values);
    static TensorBlob from_i32(std::string name, std::vector<std::uint32_t> dims,
                               const std::int32_t* values);

    const float* as_f32() const;
    const std::int8_t* as_i8() const;
    const std::int32_t* as_i32() const;
};

struct Container {
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, std::string> meta;
    std::vector<TensorBlob> tensors;

    bool has_meta(const std::string& key) const { return meta.count(key) != 0; }
    const std::string& meta_at(const std::string& key) const;
    long meta_long(const std::string& key) const;
    double meta_double(const std::string& key) const;

    const TensorBlob& tensor(const std::string& name) const;
    const TensorBlob* find(const std::string& name) const;

    bool quantized() const { return has_meta("quantized") && meta.at("quantized") == "1"; }
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

}  // namespace ecgtcn
