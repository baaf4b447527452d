#include "dla/synthcorpus.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "dla/rng.hpp"
#include "json.hpp"

namespace dla {

namespace {

using nlohmann::json;

struct PixBox {
    int x = 0, y = 0, w = 0, h = 0;
};

BBox to_norm(const PixBox& b, int pw, int ph) {
    BBox n;
    n.cx = (b.x + b.w * 0.5) / pw;
    n.cy = (b.y + b.h * 0.5) / ph;
    n.w = static_cast<double>(b.w) / pw;
    n.h = static_cast<double>(b.h) / ph;
    return n;
}

// Role ids the generator cares about, -1 where the vocabulary lacks them.
struct GenRoles {
    int title = -1, author = -1, mail = -1, affiliation = -1;
    int section = -1, paragraph = -1, list_item = -1;
    int caption = -1, header = -1, footer = -1, footnote = -1;

    static GenRoles resolve(const RoleVocab& v) {
        auto first_of = [&](const char* a, const char* b) {
            int id = v.role_id(a);
            return id >= 0 ? id : v.role_id(b);
        };
        GenRoles r;
        r.title = v.role_id("Title");
        r.author = v.role_id("Author");
        r.mail = v.role_id("Mail");
        r.affiliation = v.role_id("Affiliation");
        r.section = first_of("Section", "Section-header");
        r.paragraph = first_of("Paragraph", "Text");
        r.list_item = v.role_id("List-item");
        r.caption = v.role_id("Caption");
        r.header = first_of("Header", "Page-header");
        r.footer = first_of("Footer", "Page-footer");
        r.footnote = v.role_id("Footnote");
        return r;
    }
};

struct Style {
    double thick;  // stroke height as a fraction of the line box
    int dark;      // stroke gray value
};

Style style_for(const GenRoles& r, int role) {
    if (role == r.title) return {0.55, 25};
    if (role == r.section) return {0.50, 40};
    if (role == r.caption) return {0.26, 105};
    if (role == r.header || role == r.footer) return {0.26, 90};
    if (role == r.author || role == r.mail || role == r.affiliation) return {0.35, 60};
    if (role == r.footnote) return {0.22, 120};
    return {0.32, 70};
}

void fill_rect(Raster& img, int x, int y, int w, int h, int val) {
    int x0 = std::max(0, x), x1 = std::min(img.width, x + w);
    int y0 = std::max(0, y), y1 = std::min(img.height, y + h);
    for (int py = y0; py < y1; ++py)
        for (int px = x0; px < x1; ++px) img.at(px, py) = static_cast<uint8_t>(val);
}

void frame_rect(Raster& img, const PixBox& b, int t, int val) {
    fill_rect(img, b.x, b.y, b.w, t, val);
    fill_rect(img, b.x, b.y + b.h - t, b.w, t, val);
    fill_rect(img, b.x, b.y, t, b.h, val);
    fill_rect(img, b.x + b.w - t, b.y, t, b.h, val);
}

// Word-like stroke runs along the line box.
void render_text_line(Raster& img, Rng& rng, const PixBox& b, const Style& st, bool bullet) {
    int sh = std::max(1, static_cast<int>(b.h * st.thick));
    int y0 = b.y + (b.h - sh) / 2;
    int x = b.x;
    if (bullet) {
        int d = std::max(1, sh);
        fill_rect(img, b.x, y0, d, d, st.dark);
        x = b.x + 2 * d;
    }
    int xe = b.x + b.w;
    while (x < xe) {
        int wl = std::max(2, static_cast<int>(b.w * rng.uniform(0.06, 0.14)));
        int gap = std::max(1, static_cast<int>(b.w * rng.uniform(0.02, 0.05)));
        int end = std::min(x + wl, xe);
        int jit = b.h >= 8 ? static_cast<int>(rng.uniform_int(-1, 1)) : 0;
        int dark = st.dark + static_cast<int>(rng.uniform_int(-8, 8));
        fill_rect(img, x, y0 + jit, end - x, sh, std::clamp(dark, 0, 255));
        x = end + gap;
    }
}

void render_graphic(Raster& img, Rng& rng, const PixBox& b, const std::string& category) {
    if (category == "table") {
        frame_rect(img, b, std::max(1, b.h / 48 + 1), 50);
        int rows = 2 + static_cast<int>(rng.uniform_int(0, 2));
        int cols = 2 + static_cast<int>(rng.uniform_int(0, 2));
        fill_rect(img, b.x, b.y, b.w, std::max(2, b.h / (rows + 1)), 190);
        for (int i = 1; i <= rows; ++i)
            fill_rect(img, b.x, b.y + i * b.h / (rows + 1), b.w, 1, 70);
        for (int i = 1; i < cols; ++i)
            fill_rect(img, b.x + i * b.w / cols, b.y, 1, b.h, 70);
    } else if (category == "picture") {
        frame_rect(img, b, 1, 60);
        for (int py = b.y + 1; py < b.y + b.h - 1; ++py) {
            for (int px = b.x + 1; px < b.x + b.w - 1; ++px) {
                if (!img.inside(px, py)) continue;
                int v = 110 + 70 * (px - b.x) / std::max(1, b.w) - 45 * (py - b.y) / std::max(1, b.h);
                img.at(px, py) = static_cast<uint8_t>(std::clamp(v, 0, 255));
            }
        }
    } else if (category == "formula") {
        int bands = 1 + static_cast<int>(rng.uniform_int(0, 1));
        for (int k = 0; k < bands; ++k) {
            int by = b.y + (k + 1) * b.h / (bands + 1);
            int x = b.x;
            while (x < b.x + b.w) {
                int wl = std::max(2, b.w / 12);
                fill_rect(img, x, by - 1, wl, 2, 60);
                x += wl + std::max(2, b.w / 16);
            }
        }
    } else { // figure and any future category: framed diagonal hatch
        frame_rect(img, b, 1, 60);
        int step = std::max(3, std::min(b.w, b.h) / 6);
        for (int s = -b.h; s < b.w; s += step) {
            for (int t = 0; t < b.h; ++t) {
                int px = b.x + s + t, py = b.y + t;
                if (px >= b.x && px < b.x + b.w && img.inside(px, py))
                    img.at(px, py) = 100;
            }
        }
        fill_rect(img, b.x + b.w / 4, b.y + b.h / 3, b.w / 3, b.h / 4, 140);
    }
}

// Accumulates layout in pixel space; graphic members are stored as ~index
// until final ids exist.
struct Builder {
    std::vector<PixBox> line_px;
    std::vector<PixBox> graphic_px;
    std::vector<int> graphic_cat;
    struct Reg {
        int role;
        std::vector<int> members;
    };
    std::vector<Reg> regions;
    std::vector<int> text_order;                 // region indices
    std::vector<std::pair<int, int>> links;      // region indices

    int add_text_region(int role, std::vector<int> lines) {
        regions.push_back({role, std::move(lines)});
        int idx = static_cast<int>(regions.size()) - 1;
        text_order.push_back(idx);
        return idx;
    }
    int add_graphic_region(int role, int gidx) {
        regions.push_back({role, {~gidx}});
        return static_cast<int>(regions.size()) - 1;
    }

    DocumentPage finalize(int page_id, int w, int h) const {
        DocumentPage p;
        p.id = page_id;
        p.width = w;
        p.height = h;
        int n = static_cast<int>(line_px.size());
        for (int i = 0; i < n; ++i) p.lines.push_back({i, to_norm(line_px[i], w, h)});
        for (size_t g = 0; g < graphic_px.size(); ++g)
            p.graphics.push_back({n + static_cast<int>(g), to_norm(graphic_px[g], w, h),
                                  graphic_cat[g]});
        for (size_t r = 0; r < regions.size(); ++r) {
            Region reg;
            reg.id = static_cast<int>(r);
            reg.role = regions[r].role;
            for (int m : regions[r].members) reg.members.push_back(m >= 0 ? m : n + ~m);
            p.regions.push_back(std::move(reg));
        }
        p.reading_order = text_order;
        p.links = links;
        return p;
    }
};

} // namespace

void validate_config(const CorpusConfig& cfg) {
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0))
            throw ValidationError("corpus config", std::string(name) + " must be in [0,1]");
    };
    prob(cfg.graphic_prob, "graphic_prob");
    prob(cfg.caption_prob, "caption_prob");
    prob(cfg.title_prob, "title_prob");
    prob(cfg.author_prob, "author_prob");
    prob(cfg.section_prob, "section_prob");
    prob(cfg.header_prob, "header_prob");
    prob(cfg.footer_prob, "footer_prob");
    prob(cfg.footnote_prob, "footnote_prob");
    prob(cfg.noise, "noise");
    if (cfg.width < 1 || cfg.height < 1)
        throw ValidationError("corpus config", "page size must be positive");
    if (cfg.min_columns < 1 || cfg.max_columns > 2 || cfg.min_columns > cfg.max_columns)
        throw ValidationError("corpus config", "columns must satisfy 1 <= min <= max <= 2");
    if (cfg.min_paragraph_lines < 1 || cfg.min_paragraph_lines > cfg.max_paragraph_lines)
        throw ValidationError("corpus config", "paragraph line range is empty");
    RoleVocab::by_name(cfg.vocab); // throws on unknown name
}

GeneratedPage generate_page(uint64_t seed, const CorpusConfig& cfg) {
    validate_config(cfg);
    RoleVocab vocab = RoleVocab::by_name(cfg.vocab);
    GenRoles roles = GenRoles::resolve(vocab);
    if (roles.paragraph < 0 || roles.title < 0)
        throw ValidationError("corpus config", "vocabulary lacks body/title roles");

    const int W = cfg.width, H = cfg.height;
    Rng root(seed);
    Rng lay = root.fork(1);
    Rng ren = root.fork(2);
    Rng noi = root.fork(3);

    const int margin = std::max(3, H / 20);
    const int marginx = std::max(3, W / 20);
    const int lh_body = std::max(3, H * 7 / 200);
    const int lh_title = std::max(4, H * 11 / 200);
    const int lh_sec = std::max(3, H * 9 / 200);
    const int lh_small = std::max(2, H * 5 / 200);
    const int gap_line = std::max(1, lh_body * 2 / 5);
    const int gap_block = std::max(2, H / 40);
    const int gutter = std::max(4, W / 24);

    const int cx0 = marginx, cx1 = W - marginx;
    const int content_w = cx1 - cx0;
    int y = margin;
    const int bottom = H - margin;
    if (bottom - y < lh_body || content_w < 8)
        throw ValidationError("corpus config",
                              std::to_string(W) + "x" + std::to_string(H) +
                                  " page cannot fit one region");

    Builder b;
    int nc = static_cast<int>(lay.uniform_int(cfg.min_columns, cfg.max_columns));

    if (nc == 1 && roles.header >= 0 && lay.bernoulli(cfg.header_prob) && margin > lh_small) {
        int hw = std::min(content_w, std::max(8, content_w * 3 / 10));
        int hy = std::max(0, (margin - lh_small) / 2);
        b.line_px.push_back({cx0, hy, hw, lh_small});
        b.add_text_region(roles.header, {static_cast<int>(b.line_px.size()) - 1});
    }

    if (lay.bernoulli(cfg.title_prob)) {
        int k = static_cast<int>(lay.uniform_int(1, 2));
        std::vector<int> tl;
        for (int i = 0; i < k && y + lh_title <= bottom; ++i) {
            int tw = content_w * (55 + static_cast<int>(lay.uniform_int(0, 25))) / 100;
            b.line_px.push_back({cx0 + (content_w - tw) / 2, y, tw, lh_title});
            tl.push_back(static_cast<int>(b.line_px.size()) - 1);
            y += lh_title + gap_line;
        }
        if (!tl.empty()) {
            b.add_text_region(roles.title, std::move(tl));
            y += gap_block - gap_line;
        }
        if (roles.author >= 0 && lay.bernoulli(cfg.author_prob)) {
            struct RowSpec {
                int role;
                int pct;
            };
            std::vector<RowSpec> rows = {{roles.author, 35}};
            if (roles.mail >= 0 && lay.bernoulli(0.5)) rows.push_back({roles.mail, 28});
            if (roles.affiliation >= 0 && lay.bernoulli(0.5)) rows.push_back({roles.affiliation, 45});
            for (const RowSpec& rs : rows) {
                if (y + lh_small > bottom) break;
                int rw = std::max(8, content_w * rs.pct / 100);
                b.line_px.push_back({cx0 + (content_w - rw) / 2, y, rw, lh_small});
                b.add_text_region(rs.role, {static_cast<int>(b.line_px.size()) - 1});
                y += lh_small + gap_line;
            }
            y += gap_block - gap_line;
        }
    }

    bool want_footer = nc == 1 && roles.footer >= 0 && lay.bernoulli(cfg.footer_prob) &&
                       margin > lh_small;

    const int col_top = y;
    const int col_bottom = bottom;
    const int cw = (content_w - gutter * (nc - 1)) / nc;

    for (int c = 0; c < nc; ++c) {
        int x0c = cx0 + c * (cw + gutter);
        int cy = col_top;
        bool last_col = c == nc - 1;
        int fn_reserved = 0;
        if (last_col && roles.footnote >= 0 && lay.bernoulli(cfg.footnote_prob) &&
            col_bottom - col_top > 4 * lh_body)
            fn_reserved = lh_small + gap_block;
        int cbot = col_bottom - fn_reserved;

        while (cy + lh_body <= cbot) {
            bool need_text = b.line_px.empty();
            double pick = lay.uniform();
            int min_gh = std::max(2 * lh_body, H / 8);
            if (!need_text && pick < cfg.graphic_prob && cbot - cy >= min_gh) {
                int gh = std::min(cbot - cy,
                                  std::max(min_gh, static_cast<int>(H * lay.uniform(0.10, 0.26))));
                int gw = std::clamp(static_cast<int>(cw * lay.uniform(0.55, 0.92)), 8, cw);
                int gx = x0c + (cw - gw) / 2;
                int cat = static_cast<int>(lay.uniform_int(0, vocab.num_categories() - 1));
                b.graphic_px.push_back({gx, cy, gw, gh});
                b.graphic_cat.push_back(cat);
                int greg = b.add_graphic_region(vocab.category_role[cat],
                                                static_cast<int>(b.graphic_px.size()) - 1);
                cy += gh;
                if (roles.caption >= 0 && vocab.attachable(roles.caption) &&
                    lay.bernoulli(cfg.caption_prob) && cy + gap_line + lh_small <= cbot) {
                    int capw = std::max(8, gw * 7 / 10);
                    b.line_px.push_back({gx + (gw - capw) / 2, cy + gap_line, capw, lh_small});
                    int creg = b.add_text_region(roles.caption,
                                                 {static_cast<int>(b.line_px.size()) - 1});
                    b.links.emplace_back(greg, creg);
                    cy += gap_line + lh_small;
                }
            } else if (!need_text && roles.section >= 0 && lay.bernoulli(cfg.section_prob) &&
                       cy + lh_sec + gap_block + lh_body <= cbot) {
                int sw = std::max(8, cw * (45 + static_cast<int>(lay.uniform_int(0, 35))) / 100);
                b.line_px.push_back({x0c, cy, sw, lh_sec});
                b.add_text_region(roles.section, {static_cast<int>(b.line_px.size()) - 1});
                cy += lh_sec;
            } else {
                int fit = (cbot - cy + gap_line) / (lh_body + gap_line);
                if (fit < 1) break;
                int k = std::clamp(
                    static_cast<int>(lay.uniform_int(cfg.min_paragraph_lines,
                                                     cfg.max_paragraph_lines)),
                    1, fit);
                int role = roles.paragraph;
                bool bullet = roles.list_item >= 0 && lay.bernoulli(0.2);
                if (bullet) role = roles.list_item;
                std::vector<int> ls;
                for (int i = 0; i < k; ++i) {
                    int lw = cw - static_cast<int>(lay.uniform_int(0, std::max(1, cw / 20)));
                    if (i == k - 1 && k > 1)
                        lw = std::max(8, cw * (40 + static_cast<int>(lay.uniform_int(0, 50))) / 100);
                    b.line_px.push_back({x0c, cy, lw, lh_body});
                    ls.push_back(static_cast<int>(b.line_px.size()) - 1);
                    cy += lh_body + (i < k - 1 ? gap_line : 0);
                }
                b.add_text_region(role, std::move(ls));
            }
            cy += gap_block;
        }

        if (fn_reserved > 0) {
            int fw = std::max(8, cw / 2);
            b.line_px.push_back({x0c, col_bottom - lh_small, fw, lh_small});
            b.add_text_region(roles.footnote, {static_cast<int>(b.line_px.size()) - 1});
        }
    }

    if (want_footer) {
        int fw = std::max(8, content_w / 4);
        int fy = std::min(H - lh_small - 1, col_bottom + std::max(1, (margin - lh_small) / 2));
        b.line_px.push_back({cx0 + (content_w - fw) / 2, fy, fw, lh_small});
        b.add_text_region(roles.footer, {static_cast<int>(b.line_px.size()) - 1});
    }

    if (b.regions.empty())
        throw ValidationError("corpus config", "layout produced no regions");

    GeneratedPage out;
    out.ann = b.finalize(static_cast<int>(seed & 0x7fffffff), W, H);
    out.image = Raster(W, H, 255);

    for (size_t r = 0; r < b.regions.size(); ++r) {
        const Builder::Reg& reg = b.regions[r];
        if (reg.members.size() == 1 && reg.members[0] < 0) {
            int g = ~reg.members[0];
            render_graphic(out.image, ren, b.graphic_px[g],
                           vocab.graphical_categories[b.graphic_cat[g]]);
        } else {
            Style st = style_for(roles, reg.role);
            bool bullet = reg.role == roles.list_item;
            for (int m : reg.members) render_text_line(out.image, ren, b.line_px[m], st, bullet);
        }
    }

    if (cfg.noise > 0) {
        for (uint8_t& px : out.image.pixels) {
            int v = px + static_cast<int>((noi.uniform() * 2 - 1) * cfg.noise * 255);
            px = static_cast<uint8_t>(std::clamp(v, 0, 255));
        }
    }

    validate_page(out.ann, vocab);
    return out;
}

namespace {

json box_to_json(const BBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

BBox box_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 4)
        throw ValidationError("annotations", where + ": bbox must be [cx,cy,w,h]");
    BBox b;
    b.cx = j[0].get<double>();
    b.cy = j[1].get<double>();
    b.w = j[2].get<double>();
    b.h = j[3].get<double>();
    return b;
}

const json& need(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end())
        throw ValidationError("annotations", where + ": missing '" + key + "'");
    return *it;
}

} // namespace

std::string export_annotations(const std::vector<DocumentPage>& pages) {
    json out;
    out["pages"] = json::array();
    for (const DocumentPage& p : pages) {
        json jp;
        jp["id"] = p.id;
        jp["width"] = p.width;
        jp["height"] = p.height;
        jp["text_lines"] = json::array();
        for (const TextLine& l : p.lines)
            jp["text_lines"].push_back({{"id", l.id}, {"bbox", box_to_json(l.box)}});
        jp["graphics"] = json::array();
        for (const GraphicalObject& g : p.graphics)
            jp["graphics"].push_back(
                {{"id", g.id}, {"bbox", box_to_json(g.box)}, {"category", g.category}});
        jp["regions"] = json::array();
        for (const Region& r : p.regions)
            jp["regions"].push_back({{"id", r.id}, {"role", r.role}, {"members", r.members}});
        jp["reading_order"] = p.reading_order;
        jp["links"] = json::array();
        for (auto& [a, c] : p.links) jp["links"].push_back(json::array({a, c}));
        out["pages"].push_back(std::move(jp));
    }
    return out.dump(1);
}

void write_annotations(const std::string& path, const std::vector<DocumentPage>& pages) {
    std::string text = export_annotations(pages);
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw ValidationError("annotations", "cannot open '" + path + "' for writing");
    size_t n = std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
    if (n != text.size()) throw ValidationError("annotations", "short write to '" + path + "'");
}

std::vector<DocumentPage> parse_annotations(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError("annotations", e.what()); // keeps the byte position
    }
    const json& jpages = need(root, "pages", "top level");
    if (!jpages.is_array()) throw ValidationError("annotations", "'pages' must be an array");
    std::vector<DocumentPage> pages;
    for (size_t pi = 0; pi < jpages.size(); ++pi) {
        std::string where = "pages[" + std::to_string(pi) + "]";
        const json& jp = jpages[pi];
        DocumentPage p;
        try {
        p.id = need(jp, "id", where).get<int>();
        p.width = need(jp, "width", where).get<int>();
        p.height = need(jp, "height", where).get<int>();
        for (const json& jl : need(jp, "text_lines", where)) {
            TextLine l;
            l.id = need(jl, "id", where + ".text_lines").get<int>();
            l.box = box_from_json(need(jl, "bbox", where + ".text_lines"), where);
            p.lines.push_back(l);
        }
        for (const json& jg : need(jp, "graphics", where)) {
            GraphicalObject g;
            g.id = need(jg, "id", where + ".graphics").get<int>();
            g.box = box_from_json(need(jg, "bbox", where + ".graphics"), where);
            g.category = need(jg, "category", where + ".graphics").get<int>();
            p.graphics.push_back(g);
        }
        for (const json& jr : need(jp, "regions", where)) {
            Region r;
            r.id = need(jr, "id", where + ".regions").get<int>();
            r.role = need(jr, "role", where + ".regions").get<int>();
            for (const json& m : need(jr, "members", where + ".regions"))
                r.members.push_back(m.get<int>());
            p.regions.push_back(r);
        }
        for (const json& o : need(jp, "reading_order", where))
            p.reading_order.push_back(o.get<int>());
        for (const json& jl : need(jp, "links", where)) {
            if (!jl.is_array() || jl.size() != 2)
                throw ValidationError("annotations", where + ": link must be [src,dst]");
            p.links.emplace_back(jl[0].get<int>(), jl[1].get<int>());
        }
        } catch (const json::exception& e) {
            throw ValidationError("annotations", where + ": " + e.what());
        }
        pages.push_back(std::move(p));
    }
    return pages;
}

std::vector<DocumentPage> read_annotations(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw ValidationError("annotations", "cannot open '" + path + "'");
    std::fseek(f, 0, SEEK_END);
    long n = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::string text(static_cast<size_t>(n), '\0');
    size_t got = std::fread(text.data(), 1, text.size(), f);
    std::fclose(f);
    if (got != text.size()) throw ValidationError("annotations", "short read from '" + path + "'");
    return parse_annotations(text);
}

CocoImportReport import_coco_layout(const std::string& json_text) {
    RoleVocab vocab = RoleVocab::doclaynet();
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError("coco import", e.what());
    }

    std::map<int, std::string> cat_names;
    CocoImportReport report;
    struct RawSeg {
        BBox box;
        int role;
        bool is_graphic;
        int category;
    };
    std::vector<std::vector<RawSeg>> segs;
    std::vector<std::vector<BBox>> ocr;
    try {
    for (const json& jc : need(root, "categories", "top level")) {
        int cid = need(jc, "id", "categories").get<int>();
        std::string name = need(jc, "name", "categories").get<std::string>();
        if (vocab.role_id(name) < 0) {
            std::string known;
            for (const std::string& r : vocab.role_names) known += (known.empty() ? "" : ", ") + r;
            throw ValidationError("coco import",
                                  "unknown category '" + name + "'; expected one of: " + known);
        }
        cat_names[cid] = name;
    }
    // the graphical subset and its object-category mapping
    std::map<std::string, std::string> graphical = {
        {"Table", "table"}, {"Picture", "picture"}, {"Formula", "formula"}};

    std::map<int, size_t> page_of_image;
    for (const json& ji : need(root, "images", "top level")) {
        DocumentPage p;
        p.id = need(ji, "id", "images").get<int>();
        p.width = need(ji, "width", "images").get<int>();
        p.height = need(ji, "height", "images").get<int>();
        if (p.width < 1 || p.height < 1)
            throw ValidationError("coco import", "image " + std::to_string(p.id) + ": bad size");
        page_of_image[p.id] = report.pages.size();
        report.pages.push_back(std::move(p));
    }

    segs.resize(report.pages.size());
    ocr.resize(report.pages.size());

    // optional OCR line records, absolute pixel xywh
    {
        size_t idx = 0;
        for (const json& ji : root["images"]) {
            if (ji.contains("text_lines")) {
                const DocumentPage& p = report.pages[idx];
                for (const json& jl : ji["text_lines"]) {
                    if (!jl.is_array() || jl.size() != 4)
                        throw ValidationError("coco import", "text_lines entries must be [x,y,w,h]");
                    BBox b;
                    double x = jl[0].get<double>(), yy = jl[1].get<double>();
                    double w = jl[2].get<double>(), h = jl[3].get<double>();
                    b.cx = (x + w / 2) / p.width;
                    b.cy = (yy + h / 2) / p.height;
                    b.w = w / p.width;
                    b.h = h / p.height;
                    ocr[idx].push_back(b);
                }
            }
            ++idx;
        }
    }

    for (const json& ja : need(root, "annotations", "top level")) {
        int img = need(ja, "image_id", "annotations").get<int>();
        auto it = page_of_image.find(img);
        if (it == page_of_image.end())
            throw ValidationError("coco import",
                                  "annotation references unknown image_id " + std::to_string(img));
        const DocumentPage& p = report.pages[it->second];
        int cid = need(ja, "category_id", "annotations").get<int>();
        auto cit = cat_names.find(cid);
        if (cit == cat_names.end()) {
            std::string known;
            for (const std::string& r : vocab.role_names) known += (known.empty() ? "" : ", ") + r;
            throw ValidationError("coco import", "unknown category id " + std::to_string(cid) +
                                                     "; expected one of: " + known);
        }
        const json& jb = need(ja, "bbox", "annotations");
        if (!jb.is_array() || jb.size() != 4)
            throw ValidationError("coco import", "bbox must be [x,y,w,h]");
        double x = jb[0].get<double>(), y = jb[1].get<double>();
        double w = jb[2].get<double>(), h = jb[3].get<double>();
        double x2 = x + w, y2 = y + h;
        bool clipped = false;
        if (x < 0 || y < 0 || x2 > p.width || y2 > p.height) {
            clipped = true;
            x = std::max(0.0, x);
            y = std::max(0.0, y);
            x2 = std::min<double>(p.width, x2);
            y2 = std::min<double>(p.height, y2);
        }
        if (x2 <= x || y2 <= y)
            throw ValidationError("coco import",
                                  "image " + std::to_string(img) + ": empty box after clipping");
        if (clipped) {
            ++report.clipped_boxes;
            report.notes.push_back("image " + std::to_string(img) + ": clipped a '" +
                                   cit->second + "' box to the page");
        }
        RawSeg s;
        s.box.cx = (x + x2) / 2 / p.width;
        s.box.cy = (y + y2) / 2 / p.height;
        s.box.w = (x2 - x) / p.width;
        s.box.h = (y2 - y) / p.height;
        s.role = vocab.role_id(cit->second);
        auto git = graphical.find(cit->second);
        s.is_graphic = git != graphical.end();
        s.category = s.is_graphic ? vocab.category_id(git->second) : -1;
        segs[it->second].push_back(s);
    }
    } catch (const json::exception& e) {
        throw ValidationError("coco import", e.what());
    }

    int fallback_role = vocab.role_id("Text");
    for (size_t pi = 0; pi < report.pages.size(); ++pi) {
        DocumentPage& p = report.pages[pi];
        struct TextReg {
            BBox box;
            int role;
            std::vector<int> members;
        };
        std::vector<TextReg> text_regs;
        for (const RawSeg& s : segs[pi]) {
            if (s.is_graphic) continue;
            text_regs.push_back({s.box, s.role, {}});
        }
        // assign each OCR line to the smallest containing region box
        std::vector<std::pair<double, int>> order;
        for (size_t li = 0; li < ocr[pi].size(); ++li) {
            const BBox& lb = ocr[pi][li];
            int best = -1;
            double best_area = 1e9;
            for (size_t ri = 0; ri < text_regs.size(); ++ri) {
                const BBox& rb = text_regs[ri].box;
                if (lb.cx >= rb.x1() && lb.cx <= rb.x2() && lb.cy >= rb.y1() && lb.cy <= rb.y2() &&
                    rb.area() < best_area) {
                    best = static_cast<int>(ri);
                    best_area = rb.area();
                }
            }
            int lid = static_cast<int>(p.lines.size());
            p.lines.push_back({lid, lb});
            if (best >= 0) {
                text_regs[best].members.push_back(lid);
            } else {
                ++report.orphan_lines;
                text_regs.push_back({lb, fallback_role, {lid}});
            }
        }
        // regions that caught no OCR line get one synthetic line covering them
        for (TextReg& tr : text_regs) {
            if (!tr.members.empty()) {
                std::sort(tr.members.begin(), tr.members.end(), [&](int a, int bidx) {
                    const BBox& ba = p.lines[a].box;
                    const BBox& bb = p.lines[bidx].box;
                    return ba.cy != bb.cy ? ba.cy < bb.cy : ba.cx < bb.cx;
                });
                continue;
            }
            int lid = static_cast<int>(p.lines.size());
            p.lines.push_back({lid, tr.box});
            tr.members.push_back(lid);
        }
        int n = p.num_lines();
        for (const RawSeg& s : segs[pi]) {
            if (!s.is_graphic) continue;
            int gid = n + p.num_graphics();
            p.graphics.push_back({gid, s.box, s.category});
            Region r;
            r.id = static_cast<int>(p.regions.size());
            r.role = s.role;
            r.members = {gid};
            p.regions.push_back(std::move(r));
        }
        std::vector<int> text_region_ids;
        for (const TextReg& tr : text_regs) {
            Region r;
            r.id = static_cast<int>(p.regions.size());
            r.role = tr.role;
            r.members = tr.members;
            text_region_ids.push_back(r.id);
            p.regions.push_back(std::move(r));
        }
        // column-major normalization: left half before right half, top-down
        std::stable_sort(text_region_ids.begin(), text_region_ids.end(), [&](int a, int bidx) {
            BBox ba = p.region_box(p.regions[a]);
            BBox bb = p.region_box(p.regions[bidx]);
            int ca = ba.x1() >= 0.5 ? 1 : 0;
            int cb = bb.x1() >= 0.5 ? 1 : 0;
            if (ca != cb) return ca < cb;
            if (ba.cy != bb.cy) return ba.cy < bb.cy;
            return ba.cx < bb.cx;
        });
        p.reading_order = text_region_ids;
        validate_page(p, vocab);
    }
    if (report.orphan_lines > 0)
        report.notes.push_back("promoted " + std::to_string(report.orphan_lines) +
                               " OCR lines outside every region to Text regions");
    return report;
}

} // namespace dla
