#include "dla/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dla {

namespace {

LogLevel parse_log_level(const char* v) {
    if (!v) return LogLevel::Info;
    std::string s = v;
    if (s == "error") return LogLevel::Error;
    if (s == "warn") return LogLevel::Warn;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

LogLevel g_level = parse_log_level(std::getenv("DLA_LOG"));

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

LogLevel log_level() { return g_level; }
void set_log_level(LogLevel level) { g_level = level; }

void log_line(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(g_level)) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap m;
    std::istringstream in(text);
    std::string line, section;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw CliError("config line " + std::to_string(no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw CliError("config line " + std::to_string(no) + ": empty section name");
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw CliError("config line " + std::to_string(no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw CliError("config line " + std::to_string(no) + ": empty key");
        if (section.empty())
            throw CliError("config line " + std::to_string(no) + ": key outside any section");
        std::string full = section + "." + key;
        if (m.count(full))
            throw CliError("config line " + std::to_string(no) + ": duplicate key " + full);
        m[full] = value;
    }
    return m;
}

ConfigMap read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

namespace {

struct ConfigReader {
    ConfigMap m;

    bool take(const std::string& key, std::string& out) {
        auto it = m.find(key);
        if (it == m.end()) return false;
        out = it->second;
        m.erase(it);
        return true;
    }

    void geti(const std::string& key, int& dst) {
        std::string v;
        if (!take(key, v)) return;
        try {
            size_t used = 0;
            int parsed = std::stoi(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            dst = parsed;
        } catch (const std::exception&) {
            throw CliError("config " + key + ": not an integer: " + v);
        }
    }

    void getu64(const std::string& key, uint64_t& dst) {
        std::string v;
        if (!take(key, v)) return;
        try {
            size_t used = 0;
            uint64_t parsed = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            dst = parsed;
        } catch (const std::exception&) {
            throw CliError("config " + key + ": not an unsigned integer: " + v);
        }
    }

    void getd(const std::string& key, double& dst) {
        std::string v;
        if (!take(key, v)) return;
        try {
            size_t used = 0;
            double parsed = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            dst = parsed;
        } catch (const std::exception&) {
            throw CliError("config " + key + ": not a number: " + v);
        }
    }

    void getb(const std::string& key, bool& dst) {
        std::string v;
        if (!take(key, v)) return;
        if (v == "true" || v == "1")
            dst = true;
        else if (v == "false" || v == "0")
            dst = false;
        else
            throw CliError("config " + key + ": not a boolean: " + v);
    }

    void gets(const std::string& key, std::string& dst) { take(key, dst); }

    void get_scales(const std::string& key, std::vector<int>& dst) {
        std::string v;
        if (!take(key, v)) return;
        std::vector<int> out;
        std::stringstream ss(v);
        std::string piece;
        while (std::getline(ss, piece, ',')) {
            piece = trim(piece);
            try {
                size_t used = 0;
                int parsed = std::stoi(piece, &used);
                if (used != piece.size() || parsed <= 0) throw std::invalid_argument(piece);
                out.push_back(parsed);
            } catch (const std::exception&) {
                throw CliError("config " + key + ": bad scale list entry: " + piece);
            }
        }
        if (out.empty()) throw CliError("config " + key + ": empty scale list");
        dst = out;
    }
};

} // namespace

RunConfig config_from_map(const ConfigMap& m) {
    RunConfig rc;
    ConfigReader r{m};

    r.gets("model.vocab", rc.model.vocab);
    try {
        RoleVocab::by_name(rc.model.vocab);
    } catch (const std::exception& e) {
        throw CliError(std::string("config model.vocab: ") + e.what());
    }
    int hidden = rc.model.encoder.hidden, heads = rc.model.encoder.heads;
    int ffn = rc.model.encoder.ffn, points = rc.model.encoder.points;
    r.geti("model.hidden", hidden);
    r.geti("model.heads", heads);
    r.geti("model.ffn", ffn);
    r.geti("model.points", points);
    r.geti("model.in_channels", rc.model.encoder.in_channels);
    r.geti("model.encoder_layers", rc.model.encoder.layers);
    r.geti("model.decoder_layers", rc.model.decoder.layers);
    r.geti("model.relation_width", rc.model.relation_width);
    r.getd("model.graphic_threshold", rc.model.graphic_threshold);
    r.getb("model.identity_encoder", rc.model.encoder.identity_encoder);
    rc.model.encoder.hidden = rc.model.decoder.hidden = hidden;
    rc.model.encoder.heads = rc.model.decoder.heads = heads;
    rc.model.encoder.ffn = rc.model.decoder.ffn = ffn;
    rc.model.encoder.points = rc.model.decoder.points = points;

    r.geti("train.batch_size", rc.train.batch_size);
    r.geti("train.steps", rc.train.steps);
    r.getd("train.lr_transformer", rc.train.opt.lr_transformer);
    r.getd("train.lr_backbone", rc.train.opt.lr_backbone);
    r.getd("train.weight_decay", rc.train.opt.weight_decay);
    r.getd("train.adam_beta1", rc.train.opt.beta1);
    r.getd("train.adam_beta2", rc.train.opt.beta2);
    r.getd("train.adam_eps", rc.train.opt.eps);
    r.get_scales("train.scales", rc.train.scales);
    r.geti("train.long_side_cap", rc.train.long_side_cap);
    r.geti("train.test_shorter_side", rc.train.test_shorter_side);
    int top_k = -1;
    r.geti("train.top_k", top_k);
    r.getu64("train.seed", rc.train.seed);
    r.getb("train.deterministic", rc.train.deterministic);
    r.getb("train.logit_adjust", rc.train.logit_adjust);
    r.getd("train.tau", rc.train.tau);
    r.getd("train.w_cls", rc.train.weights.cls);
    r.getd("train.w_l1", rc.train.weights.l1);
    r.getd("train.w_giou", rc.train.weights.giou);
    r.getd("train.w_rel", rc.train.weights.rel);
    r.getd("train.w_type", rc.train.weights.type);
    r.getd("train.w_rolebox", rc.train.weights.rolebox);
    r.getd("train.w_background", rc.train.weights.background);
    rc.train.top_k = top_k > 0 ? top_k : default_top_k(rc.model.vocab);

    r.geti("corpus.width", rc.corpus.width);
    r.geti("corpus.height", rc.corpus.height);
    r.geti("corpus.min_columns", rc.corpus.min_columns);
    r.geti("corpus.max_columns", rc.corpus.max_columns);
    r.geti("corpus.min_paragraph_lines", rc.corpus.min_paragraph_lines);
    r.geti("corpus.max_paragraph_lines", rc.corpus.max_paragraph_lines);
    r.getd("corpus.graphic_prob", rc.corpus.graphic_prob);
    r.getd("corpus.caption_prob", rc.corpus.caption_prob);
    r.getd("corpus.title_prob", rc.corpus.title_prob);
    r.getd("corpus.author_prob", rc.corpus.author_prob);
    r.getd("corpus.section_prob", rc.corpus.section_prob);
    r.getd("corpus.header_prob", rc.corpus.header_prob);
    r.getd("corpus.footer_prob", rc.corpus.footer_prob);
    r.getd("corpus.footnote_prob", rc.corpus.footnote_prob);
    r.getd("corpus.noise", rc.corpus.noise);
    r.gets("corpus.vocab", rc.corpus.vocab);
    r.geti("corpus.pages", rc.pages);

    if (!r.m.empty()) throw CliError("unknown config key " + r.m.begin()->first);
    return rc;
}

std::string model_config_text(const ModelConfig& m) {
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", m.graphic_threshold);
    out << "[model]\n"
        << "vocab = " << m.vocab << "\n"
        << "in_channels = " << m.encoder.in_channels << "\n"
        << "hidden = " << m.encoder.hidden << "\n"
        << "heads = " << m.encoder.heads << "\n"
        << "ffn = " << m.encoder.ffn << "\n"
        << "points = " << m.encoder.points << "\n"
        << "encoder_layers = " << m.encoder.layers << "\n"
        << "decoder_layers = " << m.decoder.layers << "\n"
        << "relation_width = " << m.relation_width << "\n"
        << "graphic_threshold = " << buf << "\n"
        << "identity_encoder = " << (m.encoder.identity_encoder ? "true" : "false") << "\n";
    return out.str();
}

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 24)};
    out.append(b, 4);
}

void put_f32(std::string& out, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

struct BlobReader {
    const std::string& blob;
    size_t pos = 0;

    const char* take(size_t n) {
        if (pos + n > blob.size()) throw CliError("checkpoint truncated");
        const char* p = blob.data() + pos;
        pos += n;
        return p;
    }

    uint32_t u32() {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
        return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
               static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
    }

    float f32() {
        uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }

    std::string str(size_t n) {
        const char* p = take(n);
        return std::string(p, n);
    }
};

} // namespace

void save_checkpoint(const std::string& path, const ParameterStore<float>& store,
                     const std::string& config_text) {
    std::string blob = "DLAF";
    put_u32(blob, 1);
    put_u32(blob, static_cast<uint32_t>(config_text.size()));
    blob += config_text;
    put_u32(blob, static_cast<uint32_t>(store.size()));
    for (int i = 0; i < store.size(); ++i) {
        const auto& e = store.at(i);
        put_u32(blob, static_cast<uint32_t>(e.name.size()));
        blob += e.name;
        put_u32(blob, static_cast<uint32_t>(e.tensor.shape.size()));
        for (int d : e.tensor.shape) put_u32(blob, static_cast<uint32_t>(d));
        for (float v : e.tensor.data) put_f32(blob, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("short write on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string blob = buf.str();

    BlobReader r{blob};
    if (r.str(4) != "DLAF") throw CliError("not a checkpoint file (bad magic)");
    uint32_t version = r.u32();
    if (version != 1)
        throw CliError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.config_text = r.str(r.u32());
    uint32_t count = r.u32();
    for (uint32_t t = 0; t < count; ++t) {
        std::string name = r.str(r.u32());
        uint32_t ndim = r.u32();
        if (ndim > 8) throw CliError("checkpoint tensor " + name + " has absurd rank");
        std::vector<int> shape;
        int64_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            uint32_t dim = r.u32();
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        Tensor<float> tensor(shape);
        for (int64_t i = 0; i < numel; ++i) tensor.data[i] = r.f32();
        ckpt.tensors.push_back({std::move(name), std::move(tensor)});
    }
    if (r.pos != blob.size()) throw CliError("checkpoint has trailing bytes");
    return ckpt;
}

void restore_parameters(ParameterStore<float>& store, const Checkpoint& ckpt) {
    if (static_cast<int>(ckpt.tensors.size()) != store.size())
        throw CliError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                       " tensors, the model has " + std::to_string(store.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        int idx = store.find(name);
        if (idx < 0) throw CliError("checkpoint tensor " + name + " has no matching parameter");
        Tensor<float>& dst = store.at(idx).tensor;
        if (dst.shape != tensor.shape)
            throw CliError("checkpoint tensor " + name + " has a mismatched shape");
        dst.data = tensor.data;
    }
}

namespace {

nlohmann::json box_json(const BBox& b) {
    return nlohmann::json::array({b.cx, b.cy, b.w, b.h});
}

BBox box_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 4)
        throw CliError(where + ": box must be [cx, cy, w, h]");
    for (const auto& v : j)
        if (!v.is_number()) throw CliError(where + ": box entries must be numbers");
    return BBox(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

} // namespace

std::string write_structure(const DocumentPage& page, const DocumentStructure& s,
                            const std::vector<GraphicalProposal>& graphics,
                            const RoleVocab& vocab) {
    int n = page.num_lines();
    auto unit_box = [&](int uid) -> BBox {
        if (uid >= 0 && uid < n) return page.lines[uid].box;
        int g = uid - n;
        if (g < 0 || g >= static_cast<int>(graphics.size()))
            throw CliError("structure references unknown unit " + std::to_string(uid));
        return graphics[g].box;
    };

    nlohmann::json j;
    j["page"] = page.id;
    j["width"] = page.width;
    j["height"] = page.height;
    j["regions"] = nlohmann::json::array();
    for (const Region& r : s.regions) {
        if (r.role < 0 || r.role >= vocab.num_roles())
            throw CliError("region " + std::to_string(r.id) + " has an unknown role id");
        std::vector<BBox> boxes;
        for (int uid : r.members) boxes.push_back(unit_box(uid));
        nlohmann::json rj;
        rj["id"] = r.id;
        rj["role"] = vocab.role_names[r.role];
        rj["member_lines"] = r.members;
        rj["box"] = box_json(boxes.empty() ? BBox() : union_box(boxes));
        j["regions"].push_back(rj);
    }
    j["reading_order"] = s.reading_order;
    j["links"] = nlohmann::json::array();
    for (auto& [gid, tid] : s.links) j["links"].push_back(nlohmann::json::array({gid, tid}));
    j["graphics"] = nlohmann::json::array();
    for (const GraphicalProposal& g : graphics) {
        if (g.category < 0 || g.category >= vocab.num_categories())
            throw CliError("graphic has an unknown category id");
        nlohmann::json gj;
        gj["box"] = box_json(g.box);
        gj["category"] = vocab.graphical_categories[g.category];
        gj["score"] = g.score;
        j["graphics"].push_back(gj);
    }
    return j.dump(1);
}

ParsedStructure parse_structure(const std::string& json_text, const RoleVocab& vocab) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw CliError(std::string("structure file: ") + e.what());
    }
    if (!j.is_object()) throw CliError("structure file: top level must be an object");
    for (const char* key : {"regions", "reading_order", "links", "graphics"})
        if (!j.contains(key) || !j[key].is_array())
            throw CliError(std::string("structure file: missing array ") + key);

    ParsedStructure out;
    out.page_id = j.value("page", 0);
    out.width = j.value("width", 0);
    out.height = j.value("height", 0);
    for (const auto& rj : j["regions"]) {
        if (!rj.is_object() || !rj.contains("id") || !rj.contains("role") ||
            !rj.contains("member_lines"))
            throw CliError("structure file: region needs id, role, member_lines");
        Region r;
        r.id = rj["id"].get<int>();
        std::string role = rj["role"].get<std::string>();
        r.role = vocab.role_id(role);
        if (r.role < 0) throw CliError("structure file: unknown role " + role);
        for (const auto& mid : rj["member_lines"]) r.members.push_back(mid.get<int>());
        out.structure.regions.push_back(std::move(r));
    }
    for (const auto& oid : j["reading_order"])
        out.structure.reading_order.push_back(oid.get<int>());
    for (const auto& lj : j["links"]) {
        if (!lj.is_array() || lj.size() != 2)
            throw CliError("structure file: links must be [graphic region, text region] pairs");
        out.structure.links.push_back({lj[0].get<int>(), lj[1].get<int>()});
    }
    int gi = 0;
    for (const auto& gj : j["graphics"]) {
        if (!gj.is_object() || !gj.contains("box") || !gj.contains("category"))
            throw CliError("structure file: graphic needs box and category");
        GraphicalProposal p;
        p.box = box_from_json(gj["box"], "graphic " + std::to_string(gi));
        std::string cat = gj["category"].get<std::string>();
        p.category = vocab.category_id(cat);
        if (p.category < 0) throw CliError("structure file: unknown category " + cat);
        p.score = gj.value("score", 1.0);
        out.graphics.push_back(p);
        ++gi;
    }
    return out;
}

namespace {

const char* role_palette(int role) {
    static const char* colors[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231",
                                   "#911eb4", "#42d4f4", "#f032e6", "#bfef45",
                                   "#469990", "#9a6324", "#800000", "#808000"};
    return colors[role % 12];
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&')
            out += "&amp;";
        else if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else
            out += c;
    }
    return out;
}

} // namespace

std::string render_svg(const DocumentPage& page, const RoleVocab& vocab) {
    double W = page.width > 0 ? page.width : 800;
    double H = page.height > 0 ? page.height : 1000;
    const char* intra_color = "#8e44ad";
    const char* inter_color = "#27ae60";
    const char* role_color = "#e67e22";

    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(1);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n<defs>\n";
    auto marker = [&](const char* id, const char* color) {
        out << "<marker id=\"" << id
            << "\" markerWidth=\"8\" markerHeight=\"8\" refX=\"6\" refY=\"3\" orient=\"auto\">"
            << "<path d=\"M0,0 L6,3 L0,6 z\" fill=\"" << color << "\"/></marker>\n";
    };
    marker("ah-intra", intra_color);
    marker("ah-inter", inter_color);
    marker("ah-role", role_color);
    out << "</defs>\n<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";

    auto px = [&](const BBox& b) {
        return std::array<double, 4>{b.x1() * W, b.y1() * H, b.w * W, b.h * H};
    };
    auto center = [&](const BBox& b) { return std::pair<double, double>{b.cx * W, b.cy * H}; };
    auto arrow = [&](std::pair<double, double> a, std::pair<double, double> b,
                     const char* color, const char* head, const char* extra) {
        out << "<line x1=\"" << a.first << "\" y1=\"" << a.second << "\" x2=\"" << b.first
            << "\" y2=\"" << b.second << "\" stroke=\"" << color << "\" marker-end=\"url(#"
            << head << ")\" " << extra << "/>\n";
    };

    for (const TextLine& l : page.lines) {
        auto [x, y, w, h] = px(l.box);
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
            << "\" fill=\"#eceff1\" stroke=\"#b0bec5\" stroke-width=\"0.5\"/>\n";
    }
    for (const GraphicalObject& g : page.graphics) {
        auto [x, y, w, h] = px(g.box);
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
            << "\" fill=\"#cfd8dc\" stroke=\"#78909c\" stroke-width=\"0.8\"/>\n";
    }

    std::set<int> roles_present;
    for (const Region& r : page.regions) {
        if (r.role < 0 || r.role >= vocab.num_roles()) continue;
        roles_present.insert(r.role);
        BBox rb = page.region_box(r);
        auto [x, y, w, h] = px(rb);
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
            << "\" fill=\"" << role_palette(r.role) << "\" fill-opacity=\"0.08\" stroke=\""
            << role_palette(r.role) << "\" stroke-width=\"1.5\"/>\n";
        out << "<text x=\"" << x + 2 << "\" y=\"" << std::max(8.0, y - 2) << "\" font-size=\"9\""
            << " fill=\"" << role_palette(r.role) << "\">"
            << escape_xml(vocab.role_names[r.role]) << "</text>\n";

        // purple chain through the member lines, orange spokes to the region
        auto rc = center(rb);
        for (size_t i = 0; i < r.members.size(); ++i) {
            int uid = r.members[i];
            BBox ub = page.unit_box(uid);
            arrow(center(ub), rc, role_color, "ah-role", "stroke-width=\"0.6\" opacity=\"0.5\"");
            if (i + 1 < r.members.size())
                arrow(center(ub), center(page.unit_box(r.members[i + 1])), intra_color,
                      "ah-intra", "stroke-width=\"1.2\"");
        }
    }

    for (size_t i = 0; i + 1 < page.reading_order.size(); ++i) {
        const Region& a = page.regions[page.reading_order[i]];
        const Region& b = page.regions[page.reading_order[i + 1]];
        arrow(center(page.region_box(a)), center(page.region_box(b)), inter_color, "ah-inter",
              "stroke-width=\"1.6\"");
    }
    for (auto& [gid, tid] : page.links) {
        if (gid < 0 || gid >= static_cast<int>(page.regions.size()) || tid < 0 ||
            tid >= static_cast<int>(page.regions.size()))
            continue;
        arrow(center(page.region_box(page.regions[gid])),
              center(page.region_box(page.regions[tid])), inter_color, "ah-inter",
              "stroke-width=\"1.6\" stroke-dasharray=\"4 2\"");
    }

    double ly = 12;
    for (int role : roles_present) {
        out << "<rect x=\"" << W - 120 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\""
            << " fill=\"" << role_palette(role) << "\"/>\n"
            << "<text x=\"" << W - 106 << "\" y=\"" << ly << "\" font-size=\"9\">"
            << escape_xml(vocab.role_names[role]) << "</text>\n";
        ly += 13;
    }
    out << "</svg>\n";
    return out.str();
}

} // namespace dla
