#include "migt/mgt_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "migt/errors.hpp"

namespace migt {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
   public:
    Reader(const std::vector<std::uint8_t>& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    std::uint64_t take(int width) {
        if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) {
            throw FormatError(origin_ + ": truncated MGT1 data at byte " + std::to_string(pos_));
        }
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

   private:
    const std::vector<std::uint8_t>& bytes_;
    const std::string& origin_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_mgt(const Tensor& tensor) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 4 * tensor.rank() + 8 * tensor.numel());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto extent : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(extent));
    for (double v : tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

Tensor decode_mgt(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(origin + ": bad magic, not an MGT1 tensor file");
    }
    std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end());
    Reader reader(body, origin);
    const auto rank = static_cast<std::size_t>(reader.take(4));
    if (rank == 0) throw FormatError(origin + ": rank must be positive");
    Shape shape(rank);
    for (auto& extent : shape) {
        extent = static_cast<std::size_t>(reader.take(4));
        if (extent == 0) throw FormatError(origin + ": zero extent in shape");
    }
    const std::size_t n = shape_numel(shape);
    if (reader.remaining() != 8 * n) {
        throw FormatError(origin + ": payload holds " + std::to_string(reader.remaining()) + " bytes, shape " +
                          shape_string(shape) + " needs " + std::to_string(8 * n));
    }
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<double>(reader.take(8));
    return Tensor(std::move(shape), std::move(data));
}

void write_mgt(const std::filesystem::path& path, const Tensor& tensor) {
    const auto bytes = encode_mgt(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_mgt(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_mgt(bytes, path.string());
}

}  // namespace migt
