#pragma once

#include "robin_homog/types.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

namespace robin_homog::detail {

template <class T>
void write_le(std::ostream& os, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(bytes, sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
    char bytes[sizeof(T)];
    is.read(bytes, sizeof(T));
    if (!is) throw PreconditionError("truncated binary file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

template <class T>
void write_array_le(std::ostream& os, const T* data, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    } else {
        for (std::size_t i = 0; i < count; ++i) write_le(os, data[i]);
    }
}

template <class T>
void read_array_le(std::istream& is, T* data, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
        if (!is) throw PreconditionError("truncated binary file");
    } else {
        for (std::size_t i = 0; i < count; ++i) data[i] = read_le<T>(is);
    }
}

}  // namespace robin_homog::detail
