#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ssgan/data.hpp"
#include "ssgan/errors.hpp"

// Minimal MAT5 (Level 5 MAT-file) reader, just enough for the SVHN
// containers: little-endian files, numeric matrices, optionally wrapped in
// miCOMPRESSED elements.

namespace ssgan::data {

namespace {

enum MatType : std::uint32_t {
    miINT8 = 1,
    miUINT8 = 2,
    miINT16 = 3,
    miUINT16 = 4,
    miINT32 = 5,
    miUINT32 = 6,
    miSINGLE = 7,
    miDOUBLE = 9,
    miINT64 = 12,
    miUINT64 = 13,
    miMATRIX = 14,
    miCOMPRESSED = 15,
};

struct MatVar {
    std::string name;
    std::vector<std::size_t> dims;
    std::uint32_t data_type = 0;     // mi type of the real part
    std::vector<std::uint8_t> bytes;  // raw real-part payload

    std::size_t type_size() const {
        switch (data_type) {
            case miINT8:
            case miUINT8: return 1;
            case miINT16:
            case miUINT16: return 2;
            case miINT32:
            case miUINT32:
            case miSINGLE: return 4;
            case miDOUBLE:
            case miINT64:
            case miUINT64: return 8;
        }
        throw DataError("mat: unsupported numeric type " + std::to_string(data_type));
    }

    std::size_t count() const { return bytes.size() / type_size(); }

    double element(std::size_t i) const {
        const std::uint8_t* p = bytes.data() + i * type_size();
        switch (data_type) {
            case miINT8: return static_cast<double>(static_cast<std::int8_t>(p[0]));
            case miUINT8: return static_cast<double>(p[0]);
            case miINT16: {
                std::int16_t v;
                std::memcpy(&v, p, 2);
                return v;
            }
            case miUINT16: {
                std::uint16_t v;
                std::memcpy(&v, p, 2);
                return v;
            }
            case miINT32: {
                std::int32_t v;
                std::memcpy(&v, p, 4);
                return v;
            }
            case miUINT32: {
                std::uint32_t v;
                std::memcpy(&v, p, 4);
                return v;
            }
            case miSINGLE: {
                float v;
                std::memcpy(&v, p, 4);
                return v;
            }
            case miDOUBLE: {
                double v;
                std::memcpy(&v, p, 8);
                return v;
            }
        }
        throw DataError("mat: unsupported numeric type " + std::to_string(data_type));
    }
};

struct Cursor {
    const std::uint8_t* p;
    std::size_t len;
    std::size_t off = 0;

    void need(std::size_t n) const {
        if (off + n > len) throw DataError("mat: unexpected end of data");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, p + off, 4);
        off += 4;
        return v;
    }
    const std::uint8_t* take(std::size_t n) {
        need(n);
        const std::uint8_t* q = p + off;
        off += n;
        return q;
    }
    void align8() { off = (off + 7) & ~std::size_t{7}; }
    bool done() const { return off >= len; }
};

struct Element {
    std::uint32_t type = 0;
    const std::uint8_t* data = nullptr;
    std::size_t size = 0;
};

Element next_element(Cursor& c) {
    Element e;
    const std::uint32_t tag = c.u32();
    if (tag >> 16) {
        // small data element: size and type share the first word
        e.type = tag & 0xFFFF;
        e.size = tag >> 16;
        e.data = c.take(4);  // payload lives in the second tag word
        if (e.size > 4) throw DataError("mat: malformed small element");
    } else {
        e.type = tag;
        e.size = c.u32();
        e.data = c.take(e.size);
        c.align8();
    }
    return e;
}

std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* src, std::size_t n) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw DataError("mat: inflateInit failed");
    std::vector<std::uint8_t> out(std::max<std::size_t>(n * 4, std::size_t{1} << 16));
    zs.next_in = const_cast<Bytef*>(src);
    zs.avail_in = static_cast<uInt>(n);
    std::size_t written = 0;
    int rc = Z_OK;
    do {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        written = out.size() - zs.avail_out;
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw DataError("mat: corrupt compressed element (zlib rc " + std::to_string(rc) +
                            ")");
        }
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

MatVar parse_matrix(const std::uint8_t* data, std::size_t size) {
    Cursor c{data, size};
    Element flags = next_element(c);
    if (flags.type != miUINT32 || flags.size < 8)
        throw DataError("mat: bad array flags element");

    Element dims = next_element(c);
    if (dims.type != miINT32) throw DataError("mat: bad dimensions element");
    MatVar var;
    for (std::size_t i = 0; i + 4 <= dims.size; i += 4) {
        std::int32_t d;
        std::memcpy(&d, dims.data + i, 4);
        if (d < 0) throw DataError("mat: negative dimension");
        var.dims.push_back(static_cast<std::size_t>(d));
    }

    Element name = next_element(c);
    var.name.assign(reinterpret_cast<const char*>(name.data), name.size);

    Element real = next_element(c);
    var.data_type = real.type;
    var.bytes.assign(real.data, real.data + real.size);
    var.type_size();  // validates the type
    return var;
}

std::vector<MatVar> read_mat5(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open " + path);
    const std::size_t bytes = static_cast<std::size_t>(in.tellg());
    if (bytes < 128) throw DataError(path + ": too short for a MAT5 header");
    std::vector<std::uint8_t> buf(bytes);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw DataError(path + ": short read");

    if (!(buf[126] == 'I' && buf[127] == 'M'))
        throw DataError(path + ": not a little-endian MAT5 file");

    std::vector<MatVar> vars;
    Cursor c{buf.data() + 128, bytes - 128};
    while (!c.done()) {
        Element e = next_element(c);
        if (e.type == miCOMPRESSED) {
            auto inner = zlib_inflate(e.data, e.size);
            Cursor ic{inner.data(), inner.size()};
            Element m = next_element(ic);
            if (m.type == miMATRIX) vars.push_back(parse_matrix(m.data, m.size));
        } else if (e.type == miMATRIX) {
            vars.push_back(parse_matrix(e.data, e.size));
        }
        // other top-level elements (globals, text) are skipped
    }
    return vars;
}

}  // namespace

void convert_svhn_mat(const std::string& mat_path, const std::string& out_path) {
    auto vars = read_mat5(mat_path);
    const MatVar* x = nullptr;
    const MatVar* y = nullptr;
    for (const auto& v : vars) {
        if (v.name == "X" || v.dims.size() == 4) x = &v;
        else if (v.name == "y" || v.dims.size() <= 2) y = &v;
    }
    if (!x || !y) throw DataError(mat_path + ": expected variables X and y");
    if (x->dims.size() != 4 || x->dims[0] != 32 || x->dims[1] != 32 || x->dims[2] != 3)
        throw DataError(mat_path + ": X must be 32x32x3xN");
    const std::size_t n = x->dims[3];
    if (y->count() != n)
        throw DataError(mat_path + ": y has " + std::to_string(y->count()) +
                        " labels for N=" + std::to_string(n));
    if (x->count() != n * 3072) throw DataError(mat_path + ": X size mismatch");

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + out_path);
    std::vector<unsigned char> record(3073);
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = y->element(i);
        const int label = static_cast<int>(raw);
        if (label < 1 || label > 10)
            throw DataError(mat_path + ": label " + std::to_string(raw) + " at sample " +
                            std::to_string(i) + " outside 1..10");
        record[0] = static_cast<unsigned char>(label % 10);  // 10 means digit zero
        // column-major (h,w,c,n) -> CHW record planes
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t h = 0; h < 32; ++h)
                for (std::size_t w = 0; w < 32; ++w) {
                    const double v = x->element(h + 32 * (w + 32 * (ch + 3 * i)));
                    record[1 + (ch * 32 + h) * 32 + w] = static_cast<unsigned char>(v);
                }
        out.write(reinterpret_cast<const char*>(record.data()), 3073);
    }
    if (!out) throw DataError("write failed: " + out_path);
}

}  // namespace ssgan::data
