#pragma once

// Synthetic ambiguous-scene benchmark: scene generation with exact region
// metadata, leakage-safe stratified case splits, and the training-time
// augmentation pipeline with prompt rewriting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tmc/pgm.hpp"

namespace tmc {

// Stream derivation so per-case and per-slice RNGs are independent of
// generation order.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 1));
}

enum class RegionKind { kRect = 0, kEllipse = 1, kRing = 2 };

// Quadrants: 0 upper-left, 1 upper-right, 2 lower-left, 3 lower-right.
inline const char* quadrant_phrase(int q) {
    static const char* kNames[4] = {"upper left", "upper right", "lower left", "lower right"};
    if (q < 0 || q > 3) throw std::invalid_argument("bad quadrant " + std::to_string(q));
    return kNames[q];
}
inline int quadrant_of(double y, double x, int h, int w) {
    return (y < h / 2.0 ? 0 : 2) + (x < w / 2.0 ? 0 : 1);
}

struct RegionMeta {
    RegionKind kind = RegionKind::kRect;
    int quadrant = 0;
    double cy = 0, cx = 0;  // center in continuous pixel coords
    double ry = 0, rx = 0;  // half extents
    double inner_ratio = 0;  // rings only
    double intensity = 0;

    bool contains(double py, double px) const {
        double dy = py - cy, dx = px - cx;
        switch (kind) {
            case RegionKind::kRect:
                return std::fabs(dy) <= ry && std::fabs(dx) <= rx;
            case RegionKind::kEllipse:
                return (dy / ry) * (dy / ry) + (dx / rx) * (dx / rx) <= 1.0;
            case RegionKind::kRing: {
                double outer = (dy / ry) * (dy / ry) + (dx / rx) * (dx / rx);
                double iry = ry * inner_ratio, irx = rx * inner_ratio;
                double inner = (dy / iry) * (dy / iry) + (dx / irx) * (dx / irx);
                return outer <= 1.0 && inner > 1.0;
            }
        }
        return false;
    }
    bool identical_shape(const RegionMeta& o) const {
        return kind == o.kind && ry == o.ry && rx == o.rx && inner_ratio == o.inner_ratio &&
               intensity == o.intensity;
    }
};

struct SampleMeta {
    std::vector<RegionMeta> regions;
    std::vector<int> targets;  // region indices named by the prompt
    bool ambiguous = false;
};

struct Sample {
    std::string case_id;
    int slice_id = 0;
    int h = 0, w = 0;
    std::vector<double> image;  // [0,1]
    std::vector<uint8_t> mask;  // 0/1, union of the target regions
    std::string prompt;
    int stratum = 1;  // number of regions in the scene
    SampleMeta meta;
};

struct Case {
    std::string case_id;
    int stratum = 1;
    bool ambiguous = false;
    std::vector<Sample> slices;
};

struct DataConfig {
    int cases = 600;
    int slices_per_case = 1;
    int image_size = 32;
    double ambiguous_fraction = 0.5;
    uint64_t seed = 1;
    // geometry: margin from quadrant borders (fraction of quadrant extent) and
    // full region extents in pixels
    double margin_frac = 0.15;
    double min_extent = 8.0;
    double max_extent = 11.0;
    double ring_weight = 0.15;

    void validate() const {
        if (image_size < 16 || image_size % 16 != 0)
            throw std::invalid_argument("config error: image_size must be >= 16 and divisible "
                                        "by 16, got " + std::to_string(image_size));
        if (cases < 1 || slices_per_case < 1)
            throw std::invalid_argument("config error: counts must be >= 1");
        if (ambiguous_fraction < 0.0 || ambiguous_fraction > 1.0)
            throw std::invalid_argument("config error: ambiguous_fraction outside [0,1]");
    }
};

// The prompt's leading count word; "one target region, upper left" -> 1.
inline int prompt_count(const std::string& prompt) {
    if (prompt.rfind("one", 0) == 0) return 1;
    if (prompt.rfind("two", 0) == 0) return 2;
    if (prompt.rfind("three", 0) == 0) return 3;
    throw std::invalid_argument("data error: prompt without count word: '" + prompt + "'");
}

// Ambiguous cases name a strict subset of the visible regions, so they are
// recoverable from the manifest columns alone.
inline bool is_ambiguous_case(const Case& c) {
    if (c.slices.empty()) return false;
    return prompt_count(c.slices.front().prompt) < c.stratum;
}

inline std::string make_prompt(const SampleMeta& meta) {
    static const char* kCounts[4] = {"zero", "one", "two", "three"};
    std::vector<int> quads;
    for (int t : meta.targets) quads.push_back(meta.regions[static_cast<size_t>(t)].quadrant);
    std::sort(quads.begin(), quads.end());
    std::string p = kCounts[quads.size()];
    p += quads.size() == 1 ? " target region, " : " target regions, ";
    for (size_t i = 0; i < quads.size(); ++i) {
        if (i) p += " and ";
        p += quadrant_phrase(quads[i]);
    }
    return p;
}

namespace detail {

struct RegionShape {
    RegionKind kind;
    double ry, rx, inner_ratio, intensity;
};

inline RegionShape draw_shape(std::mt19937_64& rng, const DataConfig& cfg) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    RegionShape s{};
    double k = u01(rng);
    double rect_w = (1.0 - cfg.ring_weight) / 2.0;
    s.kind = k < rect_w            ? RegionKind::kRect
             : k < 2.0 * rect_w    ? RegionKind::kEllipse
                                   : RegionKind::kRing;
    std::uniform_real_distribution<double> ext(cfg.min_extent / 2.0, cfg.max_extent / 2.0);
    s.ry = ext(rng);
    s.rx = ext(rng);
    if (s.kind == RegionKind::kRing) {
        // walls thick enough to survive rasterization at desk scale
        std::uniform_real_distribution<double> ir(0.30, 0.45);
        s.inner_ratio = ir(rng);
        s.ry = std::max(s.ry, cfg.min_extent / 2.0 + 0.5);
        s.rx = std::max(s.rx, cfg.min_extent / 2.0 + 0.5);
    }
    std::uniform_real_distribution<double> inten(0.55, 0.95);
    s.intensity = inten(rng);
    return s;
}

// Center range inside quadrant q keeping `margin + half-extent` away from
// every quadrant border.
inline RegionMeta place_region(std::mt19937_64& rng, const RegionShape& s, int quadrant, int h,
                               int w, double margin_frac) {
    double qh = h / 2.0, qw = w / 2.0;
    double my = margin_frac * qh, mx = margin_frac * qw;
    double y0 = (quadrant & 2) ? qh : 0.0;
    double x0 = (quadrant & 1) ? qw : 0.0;
    double lo_y = y0 + my + s.ry, hi_y = y0 + qh - my - s.ry;
    double lo_x = x0 + mx + s.rx, hi_x = x0 + qw - mx - s.rx;
    if (lo_y > hi_y || lo_x > hi_x)
        throw std::runtime_error("generation error: region of extent " + std::to_string(2 * s.ry) +
                                 "x" + std::to_string(2 * s.rx) + " cannot fit quadrant with margin");
    std::uniform_real_distribution<double> uy(lo_y, hi_y), ux(lo_x, hi_x);
    RegionMeta m;
    m.kind = s.kind;
    m.quadrant = quadrant;
    m.cy = uy(rng);
    m.cx = ux(rng);
    m.ry = s.ry;
    m.rx = s.rx;
    m.inner_ratio = s.inner_ratio;
    m.intensity = s.intensity;
    return m;
}

}  // namespace detail

inline std::vector<uint8_t> rasterize_regions(const std::vector<RegionMeta>& regions,
                                              const std::vector<int>& which, int h, int w) {
    std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
    for (int idx : which) {
        const RegionMeta& r = regions.at(static_cast<size_t>(idx));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (r.contains(y + 0.5, x + 0.5)) mask[static_cast<size_t>(y) * w + x] = 1;
    }
    return mask;
}

inline std::vector<Case> generate_dataset(const DataConfig& cfg) {
    cfg.validate();
    std::vector<Case> cases;
    cases.reserve(static_cast<size_t>(cfg.cases));
    int h = cfg.image_size, w = cfg.image_size;
    for (int ci = 0; ci < cfg.cases; ++ci) {
        std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<uint64_t>(ci)));
        std::uniform_real_distribution<double> u01(0.0, 1.0);

        Case c;
        {
            char buf[32];
            std::snprintf(buf, sizeof buf, "case_%04d", ci);
            c.case_id = buf;
        }
        c.ambiguous = u01(rng) < cfg.ambiguous_fraction;

        SampleMeta meta;
        meta.ambiguous = c.ambiguous;
        std::array<int, 4> quad_order{0, 1, 2, 3};
        std::shuffle(quad_order.begin(), quad_order.end(), rng);
        int attempts = 0;
        for (;;) {
            if (++attempts > 100)
                throw std::runtime_error("generation error: unplaceable region after 100 attempts");
            try {
                meta.regions.clear();
                meta.targets.clear();
                if (c.ambiguous) {
                    // two visually identical regions, prompt names exactly one
                    c.stratum = 2;
                    detail::RegionShape s = detail::draw_shape(rng, cfg);
                    meta.regions.push_back(
                        detail::place_region(rng, s, quad_order[0], h, w, cfg.margin_frac));
                    meta.regions.push_back(
                        detail::place_region(rng, s, quad_order[1], h, w, cfg.margin_frac));
                    meta.targets = {rng() % 2 == 0 ? 0 : 1};
                } else {
                    c.stratum = 1 + static_cast<int>(rng() % 3);
                    for (int r = 0; r < c.stratum; ++r) {
                        detail::RegionShape s = detail::draw_shape(rng, cfg);
                        meta.regions.push_back(
                            detail::place_region(rng, s, quad_order[static_cast<size_t>(r)], h, w,
                                                 cfg.margin_frac));
                        meta.targets.push_back(r);
                    }
                }
                break;
            } catch (const std::runtime_error&) {
                if (attempts >= 100) throw;
            }
        }

        std::string prompt = make_prompt(meta);
        for (int si = 0; si < cfg.slices_per_case; ++si) {
            std::mt19937_64 srng(derive_seed(derive_seed(cfg.seed, static_cast<uint64_t>(ci)) ^
                                                 0xA5A5A5A5ull,
                                             static_cast<uint64_t>(si)));
            Sample s;
            s.case_id = c.case_id;
            s.slice_id = si;
            s.h = h;
            s.w = w;
            s.stratum = c.stratum;
            s.meta = meta;
            if (cfg.slices_per_case > 1) {
                // per-slice jitter of the placements, preserving margins
                std::uniform_real_distribution<double> j(-1.0, 1.0);
                for (auto& r : s.meta.regions) {
                    double qh = h / 2.0, qw = w / 2.0;
                    double my = cfg.margin_frac * qh, mx = cfg.margin_frac * qw;
                    double y0 = (r.quadrant & 2) ? qh : 0.0;
                    double x0 = (r.quadrant & 1) ? qw : 0.0;
                    r.cy = std::clamp(r.cy + j(srng), y0 + my + r.ry, y0 + qh - my - r.ry);
                    r.cx = std::clamp(r.cx + j(srng), x0 + mx + r.rx, x0 + qw - mx - r.rx);
                }
            }
            s.prompt = prompt;
            s.mask = rasterize_regions(s.meta.regions, s.meta.targets, h, w);

            std::uniform_real_distribution<double> bg(0.05, 0.35), fg_noise(-0.05, 0.05);
            s.image.resize(static_cast<size_t>(h) * w);
            std::vector<uint8_t> all = rasterize_regions(
                s.meta.regions,
                [&] {
                    std::vector<int> every(s.meta.regions.size());
                    for (size_t i = 0; i < every.size(); ++i) every[i] = static_cast<int>(i);
                    return every;
                }(),
                h, w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    size_t i = static_cast<size_t>(y) * w + x;
                    if (all[i]) {
                        double inten = 0.0;
                        for (const auto& r : s.meta.regions)
                            if (r.contains(y + 0.5, x + 0.5)) inten = r.intensity;
                        s.image[i] = std::clamp(inten + fg_noise(srng), 0.0, 1.0);
                    } else {
                        s.image[i] = bg(srng);
                    }
                }
            c.slices.push_back(std::move(s));
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

// ---------------------------------------------------------------------------
// splits
// ---------------------------------------------------------------------------

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "?";
}
inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::kTrain;
    if (s == "val") return Split::kVal;
    if (s == "test") return Split::kTest;
    throw std::invalid_argument("config error: unknown split '" + s + "'");
}

struct SplitSpec {
    double train = 0.7, val = 0.1, test = 0.2;
    uint64_t seed = 0;
};

// Stratified case-level split: shuffle within each stratum, cut at
// floor(0.7 n) / floor(0.1 n), remainder to test.
inline std::map<std::string, Split> split_cases(const std::vector<Case>& cases,
                                                const SplitSpec& spec) {
    std::map<int, std::vector<std::string>> strata;
    for (const auto& c : cases) strata[c.stratum].push_back(c.case_id);
    std::map<std::string, Split> out;
    for (auto& [stratum, ids] : strata) {
        if (ids.size() < 10)
            throw std::runtime_error("split error: stratum " + std::to_string(stratum) +
                                     " has only " + std::to_string(ids.size()) +
                                     " cases (need >= 10)");
        std::mt19937_64 rng(derive_seed(spec.seed, static_cast<uint64_t>(stratum)));
        std::shuffle(ids.begin(), ids.end(), rng);
        size_t n = ids.size();
        size_t n_train = static_cast<size_t>(std::floor(spec.train * static_cast<double>(n)));
        size_t n_val = static_cast<size_t>(std::floor(spec.val * static_cast<double>(n)));
        for (size_t i = 0; i < n; ++i) {
            Split s = i < n_train            ? Split::kTrain
                      : i < n_train + n_val  ? Split::kVal
                                             : Split::kTest;
            out[ids[i]] = s;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

struct AugmentDraw {
    double theta_deg = 0.0;  // rotation within +-20 degrees
    int k90 = 0;             // k x 90-degree clockwise rotations
    bool hflip = false;
    bool vflip = false;
};

inline AugmentDraw draw_augment(std::mt19937_64& rng) {
    AugmentDraw d;
    std::uniform_real_distribution<double> th(-20.0, 20.0);
    d.theta_deg = th(rng);
    d.k90 = static_cast<int>(rng() % 4);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    d.hflip = u01(rng) < 0.5;
    d.vflip = u01(rng) < 0.5;
    return d;
}

namespace detail {

// Rotation by theta about the image center; bilinear for the image
// (clamp-to-edge), nearest-neighbor for the mask (outside -> 0).
inline void rotate_arrays(std::vector<double>& image, std::vector<uint8_t>& mask, int h, int w,
                          double theta_deg) {
    if (theta_deg == 0.0) return;
    double th = theta_deg * M_PI / 180.0;
    double c = std::cos(th), s = std::sin(th);
    double cy = h / 2.0, cx = w / 2.0;
    std::vector<double> img_out(image.size());
    std::vector<uint8_t> mask_out(mask.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double oy = y + 0.5 - cy, ox = x + 0.5 - cx;
            // inverse rotation of the output coordinate
            double sy = c * oy + s * ox + cy - 0.5;
            double sx = -s * oy + c * ox + cx - 0.5;
            // bilinear, clamped to the edge
            double fy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
            double fx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
            int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
            int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            double wy = fy - y0, wx = fx - x0;
            double v00 = image[static_cast<size_t>(y0) * w + x0];
            double v01 = image[static_cast<size_t>(y0) * w + x1];
            double v10 = image[static_cast<size_t>(y1) * w + x0];
            double v11 = image[static_cast<size_t>(y1) * w + x1];
            img_out[static_cast<size_t>(y) * w + x] =
                (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
            int ny = static_cast<int>(std::lround(sy)), nx = static_cast<int>(std::lround(sx));
            if (ny >= 0 && ny < h && nx >= 0 && nx < w)
                mask_out[static_cast<size_t>(y) * w + x] = mask[static_cast<size_t>(ny) * w + nx];
        }
    image = std::move(img_out);
    mask = std::move(mask_out);
}

template <typename T>
inline void permute_arrays(std::vector<T>& a, int h, int w,
                           const std::function<std::pair<int, int>(int, int)>& src_of) {
    std::vector<T> out(a.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto [sy, sx] = src_of(y, x);
            out[static_cast<size_t>(y) * w + x] = a[static_cast<size_t>(sy) * w + sx];
        }
    a = std::move(out);
}

}  // namespace detail

inline Sample augment(const Sample& in, const AugmentDraw& d) {
    Sample s = in;
    int h = s.h, w = s.w;
    if (h != w && d.k90 % 2 == 1)
        throw std::invalid_argument("shape error: 90-degree rotation of a non-square image");

    // (a) small rotation; quadrant labels survive by placement margin
    detail::rotate_arrays(s.image, s.mask, h, w, d.theta_deg);
    if (d.theta_deg != 0.0) {
        double th = d.theta_deg * M_PI / 180.0;
        double c = std::cos(th), sn = std::sin(th);
        double cy = h / 2.0, cx = w / 2.0;
        for (auto& r : s.meta.regions) {
            double oy = r.cy - cy, ox = r.cx - cx;
            r.cy = c * oy - sn * ox + cy;
            r.cx = sn * oy + c * ox + cx;
        }
    }

    // (b)(c)(d) exact index permutations; compose the same point transform
    // for region centers and derive the quadrant permutation from it.
    auto point_fwd = [&](double y, double x) {
        for (int k = 0; k < d.k90; ++k) {
            double ny = x, nx = static_cast<double>(w) - y;  // 90 degrees clockwise
            y = ny;
            x = nx;
        }
        if (d.hflip) x = static_cast<double>(w) - x;
        if (d.vflip) y = static_cast<double>(h) - y;
        return std::pair<double, double>{y, x};
    };
    for (int k = 0; k < d.k90; ++k) {
        detail::permute_arrays<double>(s.image, h, w, [&](int y, int x) {
            return std::pair<int, int>{h - 1 - x, y};  // inverse of clockwise rotation
        });
        detail::permute_arrays<uint8_t>(s.mask, h, w, [&](int y, int x) {
            return std::pair<int, int>{h - 1 - x, y};
        });
    }
    if (d.hflip) {
        detail::permute_arrays<double>(s.image, h, w,
                                       [&](int y, int x) { return std::pair<int, int>{y, w - 1 - x}; });
        detail::permute_arrays<uint8_t>(s.mask, h, w,
                                        [&](int y, int x) { return std::pair<int, int>{y, w - 1 - x}; });
    }
    if (d.vflip) {
        detail::permute_arrays<double>(s.image, h, w,
                                       [&](int y, int x) { return std::pair<int, int>{h - 1 - y, x}; });
        detail::permute_arrays<uint8_t>(s.mask, h, w,
                                        [&](int y, int x) { return std::pair<int, int>{h - 1 - y, x}; });
    }

    for (auto& r : s.meta.regions) {
        auto [ny, nx] = point_fwd(r.cy, r.cx);
        r.cy = ny;
        r.cx = nx;
        if (d.k90 % 2 == 1) std::swap(r.ry, r.rx);
        r.quadrant = quadrant_of(r.cy, r.cx, h, w);
    }
    s.prompt = make_prompt(s.meta);
    return s;
}

inline Sample augment(const Sample& in, std::mt19937_64& rng) {
    return augment(in, draw_augment(rng));
}

// ---------------------------------------------------------------------------
// on-disk layout: images/ masks/ manifest.tsv splits.tsv
// ---------------------------------------------------------------------------

inline void write_dataset(const std::string& dir, const std::vector<Case>& cases) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::ofstream mf(fs::path(dir) / "manifest.tsv");
    if (!mf) throw std::runtime_error("I/O error: cannot write manifest in " + dir);
    mf << "case_id\tslice_id\timage_path\tmask_path\tprompt\tstratum\n";
    for (const auto& c : cases)
        for (const auto& s : c.slices) {
            std::string base = s.case_id + "_s" + std::to_string(s.slice_id) + ".pgm";
            std::string img_rel = "images/" + base, mask_rel = "masks/" + base;
            std::vector<uint8_t> gray(s.image.size());
            for (size_t i = 0; i < gray.size(); ++i)
                gray[i] = static_cast<uint8_t>(std::lround(std::clamp(s.image[i], 0.0, 1.0) * 255.0));
            write_pgm((fs::path(dir) / img_rel).string(), s.h, s.w, gray);
            std::vector<uint8_t> mg(s.mask.size());
            for (size_t i = 0; i < mg.size(); ++i) mg[i] = s.mask[i] ? 255 : 0;
            write_pgm((fs::path(dir) / mask_rel).string(), s.h, s.w, mg);
            mf << s.case_id << '\t' << s.slice_id << '\t' << img_rel << '\t' << mask_rel << '\t'
               << s.prompt << '\t' << s.stratum << '\n';
        }
}

// Loads images, masks, prompts and strata; region metadata is not persisted.
inline std::vector<Case> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.tsv");
    if (!mf) throw std::runtime_error("I/O error: cannot read manifest.tsv in " + dir);
    std::string line;
    std::getline(mf, line);  // header
    std::map<std::string, Case> by_id;
    std::vector<std::string> order;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Sample s;
        std::string img_rel, mask_rel, stratum;
        std::getline(ls, s.case_id, '\t');
        std::string slice;
        std::getline(ls, slice, '\t');
        s.slice_id = std::stoi(slice);
        std::getline(ls, img_rel, '\t');
        std::getline(ls, mask_rel, '\t');
        std::getline(ls, s.prompt, '\t');
        std::getline(ls, stratum, '\t');
        s.stratum = std::stoi(stratum);
        auto gray = read_pgm((fs::path(dir) / img_rel).string(), s.h, s.w);
        s.image.resize(gray.size());
        for (size_t i = 0; i < gray.size(); ++i) s.image[i] = gray[i] / 255.0;
        int mh = 0, mw = 0;
        auto mg = read_pgm((fs::path(dir) / mask_rel).string(), mh, mw);
        if (mh != s.h || mw != s.w)
            throw std::runtime_error("data error: image/mask size mismatch for " + s.case_id);
        s.mask.resize(mg.size());
        for (size_t i = 0; i < mg.size(); ++i) s.mask[i] = mg[i] >= 128 ? 1 : 0;
        if (!by_id.count(s.case_id)) {
            by_id[s.case_id] = Case{s.case_id, s.stratum, false, {}};
            order.push_back(s.case_id);
        }
        by_id[s.case_id].slices.push_back(std::move(s));
    }
    std::vector<Case> cases;
    cases.reserve(order.size());
    for (const auto& id : order) {
        Case c = std::move(by_id[id]);
        c.ambiguous = is_ambiguous_case(c);
        cases.push_back(std::move(c));
    }
    return cases;
}

inline void write_splits(const std::string& path, const std::map<std::string, Split>& splits) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("I/O error: cannot write " + path);
    os << "case_id\tsplit\n";
    for (const auto& [id, s] : splits) os << id << '\t' << split_name(s) << '\n';
}

inline std::map<std::string, Split> load_splits(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("I/O error: cannot read " + path);
    std::map<std::string, Split> out;
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        out[line.substr(0, tab)] = parse_split(line.substr(tab + 1));
    }
    return out;
}

}  // namespace tmc
