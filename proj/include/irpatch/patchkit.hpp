#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aggreg.hpp"
#include "image.hpp"
#include "pnm.hpp"

namespace irpatch {

// Entry = 1 iff the mask value reaches the threshold.
inline Mask binarize(const Mask& m, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ParameterError("binarize threshold must lie strictly inside (0,1): " +
                             std::to_string(threshold));
    Grid out(m.height(), m.width(), 0.0);
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            out.at(r, c) = (m.at(r, c) >= threshold) ? 1.0 : 0.0;
    return Mask(std::move(out), MaskKind::binary);
}

struct Component {
    int id = 0; // 1-based, in order of each component's first row-major pixel
    std::vector<std::pair<int, int>> pixels; // row-major order
    int bbox_r0 = 0, bbox_c0 = 0, bbox_h = 0, bbox_w = 0;
    int area = 0;
};

// 8-connected components of a binary mask. Seeding follows the row-major
// scan, so components are ordered by their top-left pixel and the result is
// deterministic.
inline std::vector<Component> connected_components(const Mask& m) {
    if (!m.is_binary())
        throw PreconditionError("connected_components requires a binary mask");
    const int h = m.height(), w = m.width();
    std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
    std::vector<Component> out;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (m.at(r, c) != 1.0 || seen[static_cast<std::size_t>(r) * w + c]) continue;
            Component comp;
            comp.id = static_cast<int>(out.size()) + 1;
            stack.clear();
            stack.push_back({r, c});
            seen[static_cast<std::size_t>(r) * w + c] = 1;
            int r0 = r, r1 = r, c0 = c, c1 = c;
            while (!stack.empty()) {
                auto [pr, pc] = stack.back();
                stack.pop_back();
                comp.pixels.push_back({pr, pc});
                r0 = std::min(r0, pr); r1 = std::max(r1, pr);
                c0 = std::min(c0, pc); c1 = std::max(c1, pc);
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        int nr = pr + dr, nc = pc + dc;
                        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                        std::size_t idx = static_cast<std::size_t>(nr) * w + nc;
                        if (m.at(nr, nc) == 1.0 && !seen[idx]) {
                            seen[idx] = 1;
                            stack.push_back({nr, nc});
                        }
                    }
            }
            std::sort(comp.pixels.begin(), comp.pixels.end());
            comp.bbox_r0 = r0;
            comp.bbox_c0 = c0;
            comp.bbox_h = r1 - r0 + 1;
            comp.bbox_w = c1 - c0 + 1;
            comp.area = static_cast<int>(comp.pixels.size());
            out.push_back(std::move(comp));
        }
    return out;
}

// Cut-ready description of a binarized patch.
struct PatchStencil {
    Mask mask; // binary
    std::vector<Component> components;
    int total_area = 0;
    double aggregation_final = 0.0; // mean_support of the binary mask over the object
};

inline PatchStencil make_stencil(const Mask& binary_mask, const Mask& m_obj) {
    if (!binary_mask.is_binary())
        throw PreconditionError("make_stencil requires a binary mask");
    PatchStencil st;
    st.mask = binary_mask;
    st.components = connected_components(binary_mask);
    for (const Component& c : st.components) st.total_area += c.area;
    st.aggregation_final = aggregation_map(binary_mask, m_obj).mean_support;
    return st;
}

// Text manifest: per component a header line
//   component <id> bbox <r0> <c0> <h> <w> area <n>
// followed by its pixel runs, one line per occupied row:
//   row <r>: <c_start>-<c_end>[,<c_start>-<c_end>...]
inline void write_stencil_manifest(const PatchStencil& st, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const Component& comp : st.components) {
        out << "component " << comp.id << " bbox " << comp.bbox_r0 << ' ' << comp.bbox_c0
            << ' ' << comp.bbox_h << ' ' << comp.bbox_w << " area " << comp.area << '\n';
        std::size_t i = 0;
        while (i < comp.pixels.size()) {
            int row = comp.pixels[i].first;
            out << "row " << row << ':';
            bool first = true;
            while (i < comp.pixels.size() && comp.pixels[i].first == row) {
                int start = comp.pixels[i].second;
                int end = start;
                ++i;
                while (i < comp.pixels.size() && comp.pixels[i].first == row &&
                       comp.pixels[i].second == end + 1) {
                    end = comp.pixels[i].second;
                    ++i;
                }
                out << (first ? " " : ",") << start << '-' << end;
                first = false;
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

// Writes the bitmap beside the manifest.
inline void export_stencil(const PatchStencil& st, const std::string& pbm_path,
                           const std::string& manifest_path) {
    write_pbm(st.mask, pbm_path);
    write_stencil_manifest(st, manifest_path);
}

// Re-rasterizes a manifest onto an empty grid of the given size; together
// with the bitmap this makes the stencil export round-trippable.
inline Mask parse_stencil_manifest(const std::string& path, int height, int width) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    Grid g(height, width, 0.0);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string tag;
        is >> tag;
        if (tag == "component") {
            continue; // header metadata is derivable from the runs
        } else if (tag == "row") {
            int row;
            char colon;
            if (!(is >> row >> colon) || colon != ':')
                throw IoError(path + ":" + std::to_string(lineno) + ": bad row header");
            std::string runs;
            std::getline(is, runs);
            std::istringstream rs(runs);
            std::string run;
            while (std::getline(rs, run, ',')) {
                int c0, c1;
                if (std::sscanf(run.c_str(), "%d-%d", &c0, &c1) != 2 || c0 > c1)
                    throw IoError(path + ":" + std::to_string(lineno) + ": bad run '" + run + "'");
                for (int c = c0; c <= c1; ++c) {
                    if (row < 0 || row >= height || c < 0 || c >= width)
                        throw IoError(path + ":" + std::to_string(lineno) + ": pixel out of bounds");
                    g.at(row, c) = 1.0;
                }
            }
        } else {
            throw IoError(path + ":" + std::to_string(lineno) + ": unknown tag '" + tag + "'");
        }
    }
    return Mask(std::move(g), MaskKind::binary);
}

} // namespace irpatch
