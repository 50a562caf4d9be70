#include "gpdip/signal_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "gpdip/error.hpp"

namespace gpdip {

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f << bytes;
    if (!f) throw FormatError("write failed: " + path);
}

// Header tokenizer: whitespace separated, '#' comments to end of line.
struct HeaderReader {
    const std::string& s;
    std::size_t pos = 0;

    std::string token() {
        for (;;) {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
            if (pos < s.size() && s[pos] == '#') {
                while (pos < s.size() && s[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '#') ++pos;
        if (start == pos) throw FormatError("netpbm: truncated header");
        return s.substr(start, pos - start);
    }

    long number() {
        const std::string t = token();
        long v = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size()) throw FormatError("netpbm: bad header field '" + t + "'");
        return v;
    }
};

}  // namespace

ImageBuffer decode_netpbm(const std::string& bytes) {
    HeaderReader hr{bytes};
    const std::string magic = hr.token();
    int channels = 0;
    bool ascii = false;
    if (magic == "P2") channels = 1, ascii = true;
    else if (magic == "P5") channels = 1;
    else if (magic == "P3") channels = 3, ascii = true;
    else if (magic == "P6") channels = 3;
    else throw FormatError("netpbm: unsupported magic '" + magic + "'");
    const long w = hr.number();
    const long h = hr.number();
    const long maxval = hr.number();
    if (w <= 0 || h <= 0) throw FormatError("netpbm: non-positive extents");
    if (maxval != 255 && maxval != 65535) throw FormatError("netpbm: unsupported maxval " + std::to_string(maxval));
    const std::size_t hw = static_cast<std::size_t>(h * w);
    const std::size_t count = hw * static_cast<std::size_t>(channels);
    ImageBuffer img(Shape{static_cast<std::size_t>(channels), static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    const double scale = 1.0 / static_cast<double>(maxval);
    auto store = [&](std::size_t k, long v) {
        if (v < 0 || v > maxval) throw FormatError("netpbm: sample " + std::to_string(v) + " exceeds maxval");
        // Files interleave channels per pixel; memory is channel-major.
        const std::size_t pixel = k / static_cast<std::size_t>(channels);
        const std::size_t c = k % static_cast<std::size_t>(channels);
        img[c * hw + pixel] = static_cast<double>(v) * scale;
    };
    if (ascii) {
        for (std::size_t k = 0; k < count; ++k) {
            long v = 0;
            try {
                v = hr.number();
            } catch (const FormatError&) {
                throw FormatError("netpbm: truncated payload at sample " + std::to_string(k));
            }
            store(k, v);
        }
        return img;
    }
    // Exactly one whitespace byte separates the header from binary samples.
    std::size_t pos = hr.pos + 1;
    const std::size_t bps = maxval == 255 ? 1 : 2;
    if (bytes.size() < pos + count * bps) throw FormatError("netpbm: truncated payload");
    for (std::size_t k = 0; k < count; ++k) {
        long v = static_cast<unsigned char>(bytes[pos]);
        if (bps == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + 1]);
        pos += bps;
        store(k, v);
    }
    return img;
}

ImageBuffer read_netpbm(const std::string& path) {
    try {
        return decode_netpbm(slurp(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

std::string encode_netpbm(const ImageBuffer& img, int maxval, bool ascii) {
    if (img.rank() != 3 || (img.channels() != 1 && img.channels() != 3))
        throw ShapeError("netpbm: image must be [1|3, H, W], got " + shape_string(img.shape()));
    if (maxval != 255 && maxval != 65535) throw ShapeError("netpbm: maxval must be 255 or 65535");
    const std::size_t c = img.channels(), h = img.shape()[1], w = img.shape()[2], hw = h * w;
    std::string out = (c == 1 ? (ascii ? "P2" : "P5") : (ascii ? "P3" : "P6"));
    out += "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n";
    for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double v = img[ch * hw + p];
            if (!std::isfinite(v)) v = 0.0;
            const long q = std::lround(std::clamp(v, 0.0, 1.0) * maxval);
            if (ascii) {
                out += std::to_string(q);
                out += (ch + 1 == c && (p + 1) % w == 0) ? '\n' : ' ';
            } else if (maxval == 255) {
                out += static_cast<char>(q);
            } else {
                out += static_cast<char>(q >> 8);
                out += static_cast<char>(q & 0xff);
            }
        }
    return out;
}

void write_netpbm(const ImageBuffer& img, const std::string& path, int maxval, bool ascii) {
    spit(path, encode_netpbm(img, maxval, ascii));
}

ImageBuffer add_noise(const ImageBuffer& img, double sigma, Rng& rng) {
    if (sigma < 0.0) throw ShapeError("add_noise: sigma must be non-negative");
    ImageBuffer out = img;
    if (sigma == 0.0) return out;
    for (double& v : out.storage()) v += rng.normal(sigma);
    return out;
}

std::size_t Mask::count_observed() const { return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), 1)); }

double Mask::fraction_observed() const {
    return observed.empty() ? 0.0 : static_cast<double>(count_observed()) / static_cast<double>(observed.size());
}

Mask full_mask(const Shape& spatial) { return Mask{spatial, std::vector<std::uint8_t>(shape_size(spatial), 1)}; }

Mask random_mask(const Shape& spatial, double fraction_dropped, Rng& rng) {
    if (!(fraction_dropped >= 0.0 && fraction_dropped <= 1.0)) throw ShapeError("random_mask: fraction must be in [0, 1]");
    Mask m = full_mask(spatial);
    const std::size_t n = m.observed.size();
    const auto drop = static_cast<std::size_t>(std::floor(fraction_dropped * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `drop` entries are a uniform sample.
    for (std::size_t i = 0; i < drop; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(idx[i], idx[j]);
        m.observed[idx[i]] = 0;
    }
    return m;
}

Tensor apply_mask(const Tensor& x, const Mask& mask) {
    if (x.spatial_shape() != mask.spatial) throw ShapeError("apply_mask: mask does not match tensor extents");
    Tensor out = x;
    const std::size_t plane = x.plane_size();
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t p = 0; p < plane; ++p)
            if (!mask.observed[p]) out[c * plane + p] = 0.0;
    return out;
}

double mse(const Tensor& a, const Tensor& b, const Mask* mask) {
    if (a.shape() != b.shape()) throw ShapeError("mse: shapes differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    if (mask && mask->spatial != a.spatial_shape()) throw ShapeError("mse: mask does not match image extents");
    const std::size_t plane = a.plane_size();
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < a.channels(); ++c)
        for (std::size_t p = 0; p < plane; ++p) {
            if (mask && !mask->observed[p]) continue;
            const double d = a[c * plane + p] - b[c * plane + p];
            s += d * d;
            ++n;
        }
    if (n == 0) throw ShapeError("mse: empty mask");
    return s / static_cast<double>(n);
}

double psnr_from_mse(double m) {
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

double mse_from_psnr(double p) { return std::pow(10.0, -p / 10.0); }

double psnr(const Tensor& a, const Tensor& b, const Mask* mask) { return psnr_from_mse(mse(a, b, mask)); }

Signal1D parse_signal_csv(const std::string& text) {
    Signal1D sig;
    std::istringstream in(text);
    std::string line;
    std::size_t row = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            cell.erase(0, cell.find_first_not_of(" \t"));
            cell.erase(cell.find_last_not_of(" \t") + 1);
            double v = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || p != cell.data() + cell.size())
                throw FormatError("csv row " + std::to_string(row) + ": non-numeric cell '" + cell + "'");
            cells.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() != 2 && cells.size() != 3)
            throw FormatError("csv row " + std::to_string(row) + ": expected 2 or 3 columns, found " + std::to_string(cells.size()));
        if (columns == 0) columns = cells.size();
        if (cells.size() != columns)
            throw FormatError("csv row " + std::to_string(row) + ": ragged row (" + std::to_string(cells.size()) + " columns, expected " +
                              std::to_string(columns) + ")");
        sig.position.push_back(cells[0]);
        sig.value.push_back(cells[1]);
        if (columns == 3) {
            if (cells[2] != 0.0 && cells[2] != 1.0) throw FormatError("csv row " + std::to_string(row) + ": observed flag must be 0 or 1");
            sig.observed.push_back(cells[2] == 1.0 ? 1 : 0);
        } else {
            sig.observed.push_back(1);
        }
    }
    return sig;
}

Signal1D read_signal_csv(const std::string& path) {
    try {
        return parse_signal_csv(slurp(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

std::string format_signal_csv(const Signal1D& s, bool with_observed) {
    if (s.value.size() != s.position.size() || (with_observed && s.observed.size() != s.value.size()))
        throw ShapeError("csv: column lengths differ");
    std::string out = with_observed ? "# position,value,observed\n" : "# position,value\n";
    char buf[96];
    for (std::size_t i = 0; i < s.value.size(); ++i) {
        if (with_observed)
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", s.position[i], s.value[i], s.observed[i] ? 1 : 0);
        else
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.position[i], s.value[i]);
        out += buf;
    }
    return out;
}

void write_signal_csv(const Signal1D& signal, const std::string& path, bool with_observed) {
    spit(path, format_signal_csv(signal, with_observed));
}

ImageBuffer to_grayscale(const ImageBuffer& img) {
    if (img.rank() != 3) throw ShapeError("to_grayscale: expected [C, H, W]");
    if (img.channels() == 1) return img;
    const std::size_t plane = img.plane_size();
    ImageBuffer g(Shape{1, img.shape()[1], img.shape()[2]});
    for (std::size_t p = 0; p < plane; ++p) g[p] = 0.299 * img[p] + 0.587 * img[plane + p] + 0.114 * img[2 * plane + p];
    return g;
}

}  // namespace gpdip
