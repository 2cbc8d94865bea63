#include "csbrnn/csb_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "csbrnn/errors.hpp"

namespace csbrnn {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'B', '1'};
constexpr std::size_t kHeaderBytes = 4 + 5 * 4;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xffu));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xffu));
    }
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw ShapeError(std::string(what) + " does not fit in 32 bits");
    }
    return static_cast<std::uint32_t>(v);
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
        pos_ += 4;
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) {
        if (remaining() < n) {
            throw FormatError(FormatErrorKind::truncated,
                              std::string("stream ends inside ") + what + " at byte " +
                                  std::to_string(pos_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const CsbMatrix& csb) {
    validate(csb);
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + 4 * csb.block_count() +
                2 * (csb.row_idx.size() + csb.col_idx.size()) + 4 * csb.val.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, checked_u32(csb.rows, "rows"));
    put_u32(out, checked_u32(csb.cols, "cols"));
    put_u32(out, checked_u32(csb.block_shape.block_rows, "block_rows"));
    put_u32(out, checked_u32(csb.block_shape.block_cols, "block_cols"));
    put_u32(out, checked_u32(csb.block_count(), "block_count"));
    for (std::size_t b = 0; b < csb.block_count(); ++b) {
        put_u16(out, csb.kernel_rows[b]);
        put_u16(out, csb.kernel_cols[b]);
    }
    for (auto v : csb.row_idx) put_u16(out, v);
    for (auto v : csb.col_idx) put_u16(out, v);
    for (double v : csb.val) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

CsbMatrix deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError(FormatErrorKind::truncated, "stream shorter than magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(FormatErrorKind::bad_magic, "expected \"CSB1\"");
    }
    Reader in(bytes.subspan(4));
    CsbMatrix csb;
    csb.rows = in.u32("header");
    csb.cols = in.u32("header");
    csb.block_shape.block_rows = in.u32("header");
    csb.block_shape.block_cols = in.u32("header");
    const std::size_t block_count = in.u32("header");

    const auto& s = csb.block_shape;
    if (s.block_rows == 0 || s.block_cols == 0 || csb.rows % s.block_rows != 0 ||
        csb.cols % s.block_cols != 0) {
        throw FormatError(FormatErrorKind::invariant, "shape is not a multiple of the block shape");
    }
    if (block_count != csb.block_count()) {
        throw FormatError(FormatErrorKind::invariant,
                          "block_count " + std::to_string(block_count) + " does not match grid " +
                              std::to_string(csb.block_grid_rows()) + "x" +
                              std::to_string(csb.block_grid_cols()));
    }
    // Bound allocations by what the stream can actually hold.
    if (block_count > in.remaining() / 4) {
        throw FormatError(FormatErrorKind::truncated, "stream too short for kernel dims");
    }

    csb.kernel_rows.resize(block_count);
    csb.kernel_cols.resize(block_count);
    std::size_t nrow = 0, ncol = 0, nval = 0;
    for (std::size_t b = 0; b < block_count; ++b) {
        csb.kernel_rows[b] = in.u16("kernel dims");
        csb.kernel_cols[b] = in.u16("kernel dims");
        nrow += csb.kernel_rows[b];
        ncol += csb.kernel_cols[b];
        nval += static_cast<std::size_t>(csb.kernel_rows[b]) * csb.kernel_cols[b];
    }
    const std::size_t payload = 2 * (nrow + ncol) + 4 * nval;
    if (in.remaining() < payload) {
        throw FormatError(FormatErrorKind::truncated,
                          "expected " + std::to_string(payload) + " payload bytes, found " +
                              std::to_string(in.remaining()));
    }
    csb.row_idx.resize(nrow);
    csb.col_idx.resize(ncol);
    csb.val.resize(nval);
    for (auto& v : csb.row_idx) v = in.u16("row_idx");
    for (auto& v : csb.col_idx) v = in.u16("col_idx");
    for (auto& v : csb.val) v = in.f32("val");
    if (in.remaining() != 0) {
        throw FormatError(FormatErrorKind::trailing_bytes,
                          std::to_string(in.remaining()) + " bytes after val");
    }
    validate(csb);
    return csb;
}

void write_csb_file(const std::filesystem::path& path, const CsbMatrix& csb) {
    const auto bytes = serialize(csb);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

CsbMatrix read_csb_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace csbrnn
