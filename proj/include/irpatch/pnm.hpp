#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "image.hpp"

namespace irpatch {

namespace detail {

// Reads the next whitespace/comment-delimited token of a PNM header.
inline std::string pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

inline int pnm_int(std::istream& in, const std::string& path, const char* what) {
    std::string tok = pnm_token(in);
    if (tok.empty())
        throw IoError(path + ": truncated header, missing " + what);
    try {
        return std::stoi(tok);
    } catch (const std::exception&) {
        throw IoError(path + ": bad " + std::string(what) + " '" + tok + "'");
    }
}

} // namespace detail

// Binary PGM (P5), 8-bit: byte = round(255 * intensity).
inline void write_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width()));
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c)
            row[static_cast<std::size_t>(c)] =
                static_cast<unsigned char>(std::lround(255.0 * img.at(r, c)));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw IoError("write failed: " + path);
}

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string magic = detail::pnm_token(in);
    if (magic != "P5")
        throw IoError(path + ": expected P5 magic, got '" + magic + "'");
    int w = detail::pnm_int(in, path, "width");
    int h = detail::pnm_int(in, path, "height");
    int maxval = detail::pnm_int(in, path, "maxval");
    if (w <= 0 || h <= 0)
        throw IoError(path + ": bad dimensions");
    if (maxval <= 0 || maxval > 255)
        throw IoError(path + ": unsupported maxval " + std::to_string(maxval));
    // header ends with exactly one whitespace byte, already consumed by pnm_int
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError(path + ": truncated pixel data");
    Grid g(h, w, 0.0);
    const double scale = 1.0 / maxval;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            g.at(r, c) = bytes[static_cast<std::size_t>(r) * w + c] * scale;
    return GrayImage(std::move(g));
}

// Portable bitmap (P4) for binary masks; bit 1 = patch pixel. Rows are packed
// MSB-first and padded to whole bytes, as the format requires.
inline void write_pbm(const Mask& m, const std::string& path) {
    if (!m.is_binary())
        throw PreconditionError("write_pbm requires a binary mask");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P4\n" << m.width() << " " << m.height() << "\n";
    const int row_bytes = (m.width() + 7) / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(row_bytes));
    for (int r = 0; r < m.height(); ++r) {
        std::fill(row.begin(), row.end(), 0);
        for (int c = 0; c < m.width(); ++c)
            if (m.at(r, c) == 1.0)
                row[static_cast<std::size_t>(c / 8)] |=
                    static_cast<unsigned char>(0x80u >> (c % 8));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw IoError("write failed: " + path);
}

inline Mask read_pbm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string magic = detail::pnm_token(in);
    if (magic != "P4")
        throw IoError(path + ": expected P4 magic, got '" + magic + "'");
    int w = detail::pnm_int(in, path, "width");
    int h = detail::pnm_int(in, path, "height");
    if (w <= 0 || h <= 0)
        throw IoError(path + ": bad dimensions");
    const int row_bytes = (w + 7) / 8;
    std::vector<unsigned char> bytes(static_cast<std::size_t>(row_bytes) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError(path + ": truncated bitmap data");
    Grid g(h, w, 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            unsigned char byte = bytes[static_cast<std::size_t>(r) * row_bytes + c / 8];
            g.at(r, c) = (byte & (0x80u >> (c % 8))) ? 1.0 : 0.0;
        }
    return Mask(std::move(g), MaskKind::binary);
}

} // namespace irpatch
