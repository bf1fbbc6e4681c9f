#include "bilevel/metio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bilevel::metio {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

// Skips whitespace and # comments between PGM header tokens.
int next_header_int(std::istream& in, const std::string& path) {
    while (true) {
        const int c = in.peek();
        if (c == EOF) fail(path, "truncated header");
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        break;
    }
    int value = 0;
    if (!(in >> value)) fail(path, "malformed header");
    return value;
}

void put_le_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_le_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    ByteReader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

    std::uint32_t u32() {
        const char* p = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(p[i]);
        return v;
    }

    double f64() {
        const char* p = take(8);
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<std::uint8_t>(p[i]);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    const char* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) fail(path_, "truncated payload");
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(path, "write failed");
}

int quantize(double v, int maxval) {
    const double clipped = std::clamp(v, 0.0, 1.0);
    return static_cast<int>(std::lround(clipped * maxval));
}

}  // namespace

Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open for reading");

    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || (m1 != '2' && m1 != '5')) fail(path, "not a P2/P5 PGM file");
    const bool binary = (m1 == '5');

    const int cols = next_header_int(in, path);
    const int rows = next_header_int(in, path);
    const int maxval = next_header_int(in, path);
    if (cols <= 0 || rows <= 0) fail(path, "invalid image size");
    if (maxval <= 0 || maxval > 65535) fail(path, "unsupported maxval");

    Image img(rows, cols);
    const double denom = maxval;
    if (binary) {
        in.get();  // single whitespace after maxval
        const int bytes_per_sample = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols * bytes_per_sample);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(in.gcount()) != buf.size()) fail(path, "truncated payload");
        for (std::size_t k = 0; k < img.size(); ++k) {
            // Multi-byte samples are big-endian.
            const int raw = bytes_per_sample == 1
                                ? buf[k]
                                : (buf[2 * k] << 8) | buf[2 * k + 1];
            img.values()[k] = raw / denom;
        }
    } else {
        for (std::size_t k = 0; k < img.size(); ++k) {
            int raw = 0;
            if (!(in >> raw)) fail(path, "truncated payload");
            img.values()[k] = raw / denom;
        }
    }
    return img;
}

void write_pgm(const Image& img, const std::string& path, int maxval) {
    if (maxval <= 0 || maxval > 65535) throw std::invalid_argument("write_pgm: unsupported maxval");
    std::ostringstream out;
    out << "P5\n" << img.cols() << " " << img.rows() << "\n" << maxval << "\n";
    if (maxval > 255) {
        for (double v : img.values()) {
            const int q = quantize(v, maxval);
            out.put(static_cast<char>((q >> 8) & 0xff));
            out.put(static_cast<char>(q & 0xff));
        }
    } else {
        for (double v : img.values()) out.put(static_cast<char>(quantize(v, maxval)));
    }
    write_file_bytes(path, out.str());
}

void write_error_map(const Image& u, const Image& g, const std::string& path) {
    if (!u.same_shape(g)) throw std::invalid_argument("write_error_map: shape mismatch");
    std::ostringstream out;
    out << "P6\n" << u.cols() << " " << u.rows() << "\n255\n";
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double e = std::clamp(u.values()[k] - g.values()[k], -1.0, 1.0);
        int r = 255, gch = 255, b = 255;
        if (e >= 0.0) {
            gch = b = static_cast<int>(std::lround(255.0 * (1.0 - e)));
        } else {
            r = gch = static_cast<int>(std::lround(255.0 * (1.0 + e)));
        }
        out.put(static_cast<char>(r));
        out.put(static_cast<char>(gch));
        out.put(static_cast<char>(b));
    }
    write_file_bytes(path, out.str());
}

FilterBank FilterBank::from_foe(foe::FoEParams params) {
    FilterBank bank;
    bank.kind = FilterBankKind::FoE;
    bank.foe_params = std::move(params);
    return bank;
}

FilterBank FilterBank::from_tv(tvdisc::FilterFamily family) {
    FilterBank bank;
    bank.kind = FilterBankKind::TVDisc;
    bank.tv_family = std::move(family);
    return bank;
}

void write_filter_bank(const FilterBank& bank, const std::string& path) {
    std::string out;
    out.append(kFilterBankMagic, sizeof kFilterBankMagic);
    out.push_back(static_cast<char>(bank.kind));

    if (bank.kind == FilterBankKind::FoE) {
        const foe::FoEParams& p = bank.foe_params;
        if (p.alphas.size() != p.kernels.size())
            throw std::invalid_argument("write_filter_bank: inconsistent parameter counts");
        out.push_back(0);  // symmetry: none
        out.push_back(0);  // reserved
        put_le_u32(out, static_cast<std::uint32_t>(p.count()));
        const int krows = p.kernels.empty() ? 0 : p.kernels[0].rows;
        const int kcols = p.kernels.empty() ? 0 : p.kernels[0].cols;
        put_le_u32(out, static_cast<std::uint32_t>(krows));
        put_le_u32(out, static_cast<std::uint32_t>(kcols));
        for (double a : p.alphas) put_le_f64(out, a);
        for (const Kernel& k : p.kernels) {
            if (k.rows != krows || k.cols != kcols)
                throw std::invalid_argument("write_filter_bank: ragged filter sizes");
            for (double t : k.taps) put_le_f64(out, t);
        }
    } else {
        const tvdisc::FilterFamily& f = bank.tv_family;
        out.push_back(static_cast<char>(f.symmetry));
        out.push_back(0);  // reserved
        put_le_u32(out, static_cast<std::uint32_t>(f.count()));
        put_le_u32(out, 0);
        put_le_u32(out, 0);
        for (const auto& pair : f.filters)
            for (const Kernel& k : pair)
                for (double t : k.taps) put_le_f64(out, t);
    }
    write_file_bytes(path, out);
}

FilterBank read_filter_bank(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    ByteReader rd(bytes, path);
    const char* magic = rd.take(sizeof kFilterBankMagic);
    if (std::memcmp(magic, kFilterBankMagic, sizeof kFilterBankMagic) != 0)
        fail(path, "bad magic (not a filter bank file)");

    FilterBank bank;
    const std::uint8_t kind = rd.u8();
    if (kind > 1) fail(path, "unknown payload kind");
    bank.kind = static_cast<FilterBankKind>(kind);
    const std::uint8_t symmetry = rd.u8();
    rd.u8();  // reserved
    const std::uint32_t count = rd.u32();
    const std::uint32_t krows = rd.u32();
    const std::uint32_t kcols = rd.u32();

    // The declared counts must account for the remaining payload exactly.
    const std::uint64_t header_bytes = sizeof kFilterBankMagic + 3 + 12;
    const std::uint64_t tap_values =
        bank.kind == FilterBankKind::FoE
            ? static_cast<std::uint64_t>(count) * (1 + static_cast<std::uint64_t>(krows) * kcols)
            : static_cast<std::uint64_t>(count) * 12;
    if (bytes.size() != header_bytes + 8 * tap_values)
        fail(path, "declared counts do not match the payload length");

    if (bank.kind == FilterBankKind::FoE) {
        if (symmetry != 0) fail(path, "unexpected symmetry tag");
        foe::FoEParams p;
        p.alphas.resize(count);
        for (double& a : p.alphas) a = rd.f64();
        p.kernels.reserve(count);
        for (std::uint32_t l = 0; l < count; ++l) {
            Kernel k(static_cast<int>(krows), static_cast<int>(kcols));
            for (double& t : k.taps) t = rd.f64();
            p.kernels.push_back(std::move(k));
        }
        bank.foe_params = std::move(p);
    } else {
        if (symmetry > 2) fail(path, "unexpected symmetry tag");
        tvdisc::FilterFamily f = tvdisc::zero_family(static_cast<int>(count));
        f.symmetry = static_cast<tvdisc::Symmetry>(symmetry);
        for (auto& pair : f.filters)
            for (Kernel& k : pair)
                for (double& t : k.taps) t = rd.f64();
        bank.tv_family = std::move(f);
    }
    if (!rd.exhausted()) fail(path, "trailing bytes after payload");
    return bank;
}

void write_sidecar(const std::string& bank_path, const std::string& json_text) {
    write_file_bytes(bank_path + ".json", json_text);
}

std::string read_sidecar(const std::string& bank_path) {
    std::ifstream in(bank_path + ".json", std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_float(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << "task,setting,L,symmetry,split,psnr_mean\n";
    for (const MetricsRow& r : rows)
        out << r.task << ',' << r.setting << ',' << r.filter_count << ',' << r.symmetry << ','
            << r.split << ',' << format_float(r.psnr_mean) << '\n';
    write_file_bytes(path, out.str());
}

}  // namespace bilevel::metio
