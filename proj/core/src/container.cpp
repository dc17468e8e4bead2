#include "pr/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pr {
namespace {

static_assert(std::endian::native == std::endian::little,
              "container io assumes a little-endian host");

constexpr char kMagic[4] = {'P', 'R', 'T', 'C'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::u8; }

template <typename T>
void save_impl(const Tensor<T>& t, const std::string& path) {
    if (t.ndim() == 0 || t.ndim() > 255) {
        throw std::invalid_argument("save_container: ndim must be in [1, 255]");
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_container: cannot open " + path);
    f.write(kMagic, 4);
    std::uint8_t version = kVersion;
    std::uint8_t dtype = static_cast<std::uint8_t>(dtype_of<T>());
    std::uint8_t ndim = static_cast<std::uint8_t>(t.ndim());
    f.put(static_cast<char>(version));
    f.put(static_cast<char>(dtype));
    f.put(static_cast<char>(ndim));
    for (std::size_t d : t.shape()) {
        if (d > 0xffffffffull) throw std::invalid_argument("save_container: dim too large");
        std::uint32_t v = static_cast<std::uint32_t>(d);
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!f) throw std::runtime_error("save_container: write failed for " + path);
}

template <typename T>
Tensor<T> load_payload(std::ifstream& f, const std::vector<std::size_t>& shape,
                       const std::string& path) {
    Tensor<T> t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (static_cast<std::size_t>(f.gcount()) != t.size() * sizeof(T)) {
        throw std::runtime_error("load_container: truncated payload in " + path);
    }
    // anything left over means the header lied about the shape
    f.peek();
    if (!f.eof()) {
        throw std::runtime_error("load_container: trailing bytes in " + path);
    }
    return t;
}

}  // namespace

void save_container(const Tensor<float>& t, const std::string& path) { save_impl(t, path); }
void save_container(const Tensor<double>& t, const std::string& path) { save_impl(t, path); }
void save_container(const Tensor<std::uint8_t>& t, const std::string& path) { save_impl(t, path); }

AnyTensor load_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_container: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("load_container: bad magic in " + path);
    }
    int version = f.get();
    int dtype = f.get();
    int ndim = f.get();
    if (version != kVersion) {
        throw std::runtime_error("load_container: unsupported version in " + path);
    }
    if (ndim <= 0 || f.eof()) {
        throw std::runtime_error("load_container: truncated header in " + path);
    }
    std::vector<std::size_t> shape(static_cast<std::size_t>(ndim));
    for (auto& d : shape) {
        std::uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        if (f.gcount() != 4) {
            throw std::runtime_error("load_container: truncated header in " + path);
        }
        d = v;
    }
    switch (dtype) {
        case 0: return load_payload<float>(f, shape, path);
        case 1: return load_payload<double>(f, shape, path);
        case 2: return load_payload<std::uint8_t>(f, shape, path);
        default:
            throw std::runtime_error("load_container: unknown dtype_code " +
                                     std::to_string(dtype) + " in " + path);
    }
}

}  // namespace pr
