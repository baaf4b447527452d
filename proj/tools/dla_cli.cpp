#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dla/cli.hpp"
#include "dla/evalmetrics.hpp"
#include "dla/model.hpp"
#include "dla/synthcorpus.hpp"
#include "dla/trainer.hpp"

namespace fs = std::filesystem;
using namespace dla;

namespace {

struct CommonOpts {
    std::string config;
    std::vector<std::string> sets;
    uint64_t seed = 0;
    bool seed_given = false;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "Sectioned key = value config file");
    cmd->add_option("--set", o.sets, "Override a config key, section.key=value")
        ->type_name("KEY=VALUE");
    cmd->add_option("--seed", o.seed, "Run seed")->each([&o](const std::string&) {
        o.seed_given = true;
    });
    cmd->add_flag("--deterministic", o.deterministic, "Pin all randomness to the seed");
}

RunConfig resolve_config(const CommonOpts& o) {
    ConfigMap m;
    if (!o.config.empty()) m = read_config(o.config);
    for (const std::string& kv : o.sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw CliError("--set expects section.key=value, got " + kv);
        m[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    RunConfig rc = config_from_map(m);
    if (o.seed_given) rc.train.seed = o.seed;
    if (o.deterministic) rc.train.deterministic = true;
    return rc;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("short write on " + path);
}

std::string page_path(const std::string& dir, int id, const char* ext) {
    return (fs::path(dir) / ("page_" + std::to_string(id) + ext)).string();
}

std::vector<DocumentPage> load_ground_truth(const std::string& dir) {
    return read_annotations((fs::path(dir) / "annotations.json").string());
}

struct LoadedModel {
    ParameterStore<float> store;
    DlaModel<float> model;
};

// The checkpoint's embedded config section is the authority on architecture.
LoadedModel model_from_checkpoint(const std::string& path, uint64_t seed) {
    Checkpoint ckpt = load_checkpoint(path);
    RunConfig mc = config_from_map(parse_config_text(ckpt.config_text));
    LoadedModel lm;
    Rng rng(seed);
    lm.model = DlaModel<float>::create(lm.store, mc.model, rng);
    restore_parameters(lm.store, ckpt);
    return lm;
}

std::vector<BBox> page_line_boxes(const DocumentPage& p) {
    std::vector<BBox> boxes;
    for (const TextLine& l : p.lines) boxes.push_back(l.box);
    return boxes;
}

int run_corpus_gen(const CommonOpts& common, const std::string& out_dir, int pages_flag) {
    RunConfig rc = resolve_config(common);
    int pages = pages_flag > 0 ? pages_flag : rc.pages;
    fs::create_directories(out_dir);
    std::vector<DocumentPage> anns;
    for (int i = 0; i < pages; ++i) {
        GeneratedPage gp = generate_page(rc.train.seed + static_cast<uint64_t>(i), rc.corpus);
        write_png(page_path(out_dir, gp.ann.id, ".png"), gp.image);
        anns.push_back(std::move(gp.ann));
    }
    write_annotations((fs::path(out_dir) / "annotations.json").string(), anns);
    log_line(LogLevel::Info,
             "wrote " + std::to_string(pages) + " pages to " + out_dir);
    return 0;
}

int run_train(const CommonOpts& common, const std::string& data_dir, const std::string& out_path,
              const std::string& init_path, int steps_flag) {
    RunConfig rc = resolve_config(common);
    if (steps_flag > 0) rc.train.steps = steps_flag;

    std::vector<DocumentPage> gts = load_ground_truth(data_dir);
    ParameterStore<float> store;
    Rng rng(rc.train.seed);
    DlaModel<float> model = DlaModel<float>::create(store, rc.model, rng);
    if (!init_path.empty()) {
        restore_parameters(store, load_checkpoint(init_path));
        log_line(LogLevel::Info, "resumed parameters from " + init_path);
    }

    std::vector<TrainItem> items;
    for (const DocumentPage& gt : gts) {
        Raster img = read_png(page_path(data_dir, gt.id, ".png"));
        items.push_back(make_train_item(gt, img, model.vocab));
    }
    log_line(LogLevel::Info, "training on " + std::to_string(items.size()) + " pages for " +
                                 std::to_string(rc.train.steps) + " steps");

    Trainer<float> trainer(model, store, std::move(items), rc.train);
    for (int i = 0; i < rc.train.steps; ++i) {
        StepStats st = trainer.step();
        nlohmann::json j;
        j["step"] = st.step;
        j["total"] = st.losses.total;
        j["cls"] = st.losses.cls;
        j["l1"] = st.losses.l1;
        j["giou"] = st.losses.giou;
        j["rel"] = st.losses.rel;
        j["type"] = st.losses.type;
        j["rolebox"] = st.losses.rolebox;
        j["lr_transformer"] = st.lr_transformer;
        j["lr_backbone"] = st.lr_backbone;
        std::cout << j.dump() << "\n";
    }
    std::cout.flush();

    save_checkpoint(out_path, store, model_config_text(rc.model));
    log_line(LogLevel::Info, "saved checkpoint " + out_path);
    return 0;
}

int run_infer(const CommonOpts& common, const std::string& data_dir, const std::string& out_dir,
              const std::string& model_path, bool inject_gt) {
    RunConfig rc = resolve_config(common);
    std::vector<DocumentPage> gts = load_ground_truth(data_dir);
    fs::create_directories(out_dir);

    if (inject_gt) {
        RoleVocab vocab = RoleVocab::by_name(rc.model.vocab);
        for (const DocumentPage& gt : gts) {
            std::vector<GraphicalProposal> graphics;
            for (const GraphicalObject& g : gt.graphics)
                graphics.push_back({g.box, g.category, 1.0});
            write_text(page_path(out_dir, gt.id, ".json"),
                       write_structure(gt, page_structure(gt), graphics, vocab));
        }
        log_line(LogLevel::Info, "wrote " + std::to_string(gts.size()) +
                                     " ground-truth structures to " + out_dir);
        return 0;
    }

    if (model_path.empty()) throw CliError("infer needs --model or --inject-gt");
    LoadedModel lm = model_from_checkpoint(model_path, rc.train.seed);
    for (const DocumentPage& gt : gts) {
        Raster img = read_png(page_path(data_dir, gt.id, ".png"));
        InferencePage inf =
            infer_page(lm.model, lm.store, img, page_line_boxes(gt), rc.train.top_k,
                       rc.train.test_shorter_side, rc.train.long_side_cap);
        write_text(page_path(out_dir, gt.id, ".json"),
                   write_structure(gt, inf.structure, inf.kept.graphics, lm.model.vocab));
    }
    log_line(LogLevel::Info,
             "wrote " + std::to_string(gts.size()) + " structures to " + out_dir);
    return 0;
}

struct EvalAccumulator {
    std::vector<DocumentPage> preds;
    std::vector<Detection> dets;
    std::vector<GroundTruthBox> gt_boxes;
    GroupingF1 grouping_sum{0, 0, 0};
    RelationAccuracy rel_sum{0, 0, 0};
    int rel_pages = 0;

    void add_graphics(int image, const std::vector<GraphicalProposal>& preds_g,
                      const std::vector<GraphicalObject>& gts_g) {
        for (const GraphicalProposal& p : preds_g)
            dets.push_back({image, p.category, p.box, p.score});
        for (const GraphicalObject& g : gts_g) gt_boxes.push_back({image, g.category, g.box});
    }

    void add_page(const DocumentPage& pred, const DocumentPage& gt) {
        GroupingF1 gf = grouping_f1(pred, gt);
        grouping_sum.precision += gf.precision;
        grouping_sum.recall += gf.recall;
        grouping_sum.f1 += gf.f1;
        preds.push_back(pred);
    }

    void add_relations(const RelationAccuracy& acc) {
        rel_sum.unit += acc.unit;
        rel_sum.role += acc.role;
        rel_sum.type += acc.type;
        ++rel_pages;
    }

    MetricReport report(const std::vector<DocumentPage>& gts, int num_categories) const {
        MetricReport r;
        MapResult m = coco_map(dets, gt_boxes, num_categories);
        r.per_class_ap = m.per_class_ap;
        r.map = m.map;
        RedsSummary rs = reds_corpus(preds, gts);
        r.text_reds = rs.text;
        r.graphical_reds = rs.graphical;
        r.graphical_links = rs.links;
        double n = static_cast<double>(preds.size());
        if (n > 0)
            r.grouping = {grouping_sum.precision / n, grouping_sum.recall / n,
                          grouping_sum.f1 / n};
        if (rel_pages > 0)
            r.relation_acc = {rel_sum.unit / rel_pages, rel_sum.role / rel_pages,
                              rel_sum.type / rel_pages};
        return r;
    }
};

int run_eval(const CommonOpts& common, const std::string& data_dir,
             const std::string& model_path, const std::string& structures_dir,
             const std::string& report_path) {
    RunConfig rc = resolve_config(common);
    std::vector<DocumentPage> gts = load_ground_truth(data_dir);
    EvalAccumulator acc;
    int num_categories = 0;

    if (!model_path.empty()) {
        LoadedModel lm = model_from_checkpoint(model_path, rc.train.seed);
        const RoleVocab& vocab = lm.model.vocab;
        num_categories = vocab.num_categories();
        for (size_t i = 0; i < gts.size(); ++i) {
            const DocumentPage& gt = gts[i];
            Raster img = read_png(page_path(data_dir, gt.id, ".png"));
            InferencePage inf =
                infer_page(lm.model, lm.store, img, page_line_boxes(gt), rc.train.top_k,
                           rc.train.test_shorter_side, rc.train.long_side_cap);
            acc.add_graphics(static_cast<int>(i), inf.detections, gt.graphics);
            acc.add_page(page_from_prediction(gt, inf.structure, inf.kept.graphics), gt);
            try {
                RelationLabelMatrix mat = build_label_matrix(gt, vocab);
                MatchResult match =
                    match_graphics(inf.detections, inf.category_probs,
                                   vocab.num_categories(), gt.graphics, rc.train.weights);
                RelationTargets targets = map_relation_targets(
                    mat, gt.num_lines(), match, inf.relation.num_graphics());
                acc.add_relations(relation_accuracy(inf.relation, targets));
            } catch (const std::exception& e) {
                log_line(LogLevel::Warn, "page " + std::to_string(gt.id) +
                                             ": relation accuracy skipped: " + e.what());
            }
        }
    } else {
        RoleVocab vocab = RoleVocab::by_name(rc.model.vocab);
        num_categories = vocab.num_categories();
        for (size_t i = 0; i < gts.size(); ++i) {
            const DocumentPage& gt = gts[i];
            ParsedStructure ps =
                parse_structure(read_text(page_path(structures_dir, gt.id, ".json")), vocab);
            DocumentPage pred = page_from_prediction(gt, ps.structure, ps.graphics);
            acc.add_graphics(static_cast<int>(i), ps.graphics, gt.graphics);
            acc.add_page(pred, gt);
            if (pred.num_lines() + static_cast<int>(pred.graphics.size()) ==
                gt.num_lines() + static_cast<int>(gt.graphics.size())) {
                RelationLabelMatrix gt_mat = build_label_matrix(gt, vocab);
                RelationPrediction rp =
                    prediction_from_matrix(build_label_matrix(pred, vocab), pred);
                acc.add_relations(relation_accuracy(rp, gt_mat));
            }
        }
    }

    std::string json = metric_report_json(acc.report(gts, num_categories));
    std::cout << json << "\n";
    if (!report_path.empty()) write_text(report_path, json);
    return 0;
}

int run_visualize(const CommonOpts& common, const std::string& data_dir,
                  const std::string& structures_dir, const std::string& out_dir) {
    RunConfig rc = resolve_config(common);
    RoleVocab vocab = RoleVocab::by_name(rc.model.vocab);
    std::vector<DocumentPage> gts = load_ground_truth(data_dir);
    fs::create_directories(out_dir);
    for (const DocumentPage& gt : gts) {
        DocumentPage shown = gt;
        if (!structures_dir.empty()) {
            ParsedStructure ps =
                parse_structure(read_text(page_path(structures_dir, gt.id, ".json")), vocab);
            shown = page_from_prediction(gt, ps.structure, ps.graphics);
        }
        write_text(page_path(out_dir, gt.id, ".svg"), render_svg(shown, vocab));
    }
    log_line(LogLevel::Info,
             "wrote " + std::to_string(gts.size()) + " drawings to " + out_dir);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Document layout analysis engine"};
    app.require_subcommand(1);
    std::function<int()> action;

    CommonOpts corpus_opts;
    std::string corpus_out;
    int corpus_pages = 0;
    CLI::App* corpus = app.add_subcommand("corpus", "Synthetic corpus tools");
    corpus->require_subcommand(1);
    CLI::App* gen = corpus->add_subcommand("gen", "Generate annotated pages");
    add_common(gen, corpus_opts);
    gen->add_option("--out", corpus_out, "Output directory")->required();
    gen->add_option("--pages", corpus_pages, "Number of pages");
    gen->callback([&] { action = [&] { return run_corpus_gen(corpus_opts, corpus_out, corpus_pages); }; });

    CommonOpts train_opts;
    std::string train_data, train_out, train_init;
    int train_steps = 0;
    CLI::App* train = app.add_subcommand("train", "Train a model on a corpus directory");
    add_common(train, train_opts);
    train->add_option("--data", train_data, "Corpus directory")->required();
    train->add_option("--out", train_out, "Checkpoint to write")->required();
    train->add_option("--init", train_init, "Checkpoint to resume from");
    train->add_option("--steps", train_steps, "Optimizer steps");
    train->callback([&] {
        action = [&] { return run_train(train_opts, train_data, train_out, train_init, train_steps); };
    });

    CommonOpts infer_opts;
    std::string infer_data, infer_out, infer_model;
    bool inject_gt = false;
    CLI::App* infer = app.add_subcommand("infer", "Predict page structures");
    add_common(infer, infer_opts);
    infer->add_option("--data", infer_data, "Corpus directory")->required();
    infer->add_option("--out", infer_out, "Directory for structure files")->required();
    infer->add_option("--model", infer_model, "Checkpoint to run");
    infer->add_flag("--inject-gt", inject_gt, "Emit the ground truth as predictions");
    infer->callback([&] {
        action = [&] { return run_infer(infer_opts, infer_data, infer_out, infer_model, inject_gt); };
    });

    CommonOpts eval_opts;
    std::string eval_data, eval_model, eval_structures, eval_report;
    CLI::App* eval = app.add_subcommand("eval", "Score predictions against the ground truth");
    add_common(eval, eval_opts);
    eval->add_option("--data", eval_data, "Corpus directory")->required();
    eval->add_option("--model", eval_model, "Checkpoint to run");
    eval->add_option("--structures", eval_structures, "Directory of predicted structure files");
    eval->add_option("--report", eval_report, "File for the metric report");
    eval->callback([&] {
        action = [&] {
            if (eval_model.empty() == eval_structures.empty())
                throw CliError("eval needs exactly one of --model or --structures");
            return run_eval(eval_opts, eval_data, eval_model, eval_structures, eval_report);
        };
    });

    CommonOpts vis_opts;
    std::string vis_data, vis_structures, vis_out;
    CLI::App* vis = app.add_subcommand("visualize", "Render pages as SVG drawings");
    add_common(vis, vis_opts);
    vis->add_option("--data", vis_data, "Corpus directory")->required();
    vis->add_option("--structures", vis_structures, "Directory of predicted structure files");
    vis->add_option("--out", vis_out, "Directory for SVG files")->required();
    vis->callback([&] {
        action = [&] { return run_visualize(vis_opts, vis_data, vis_structures, vis_out); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        return action ? action() : 1;
    } catch (const CliError& e) {
        log_line(LogLevel::Error, e.what());
        return 1;
    } catch (const std::exception& e) {
        log_line(LogLevel::Error, e.what());
        return 2;
    }
}
