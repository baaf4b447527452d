#pragma once

#include <string>
#include <vector>

#include "dla/decoder.hpp"
#include "dla/encoder.hpp"
#include "dla/raster.hpp"
#include "dla/relhead.hpp"
#include "dla/structdecode.hpp"

namespace dla {

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;
    int relation_width = 1024;
    double graphic_threshold = 0.5;
    std::string vocab = "comp-hrdoc";
};

// Graphical query budgets per benchmark setting.
inline int default_top_k(const std::string& vocab) {
    return vocab == "doclaynet" ? 100 : 50;
}

template <typename T>
struct DlaModel {
    ModelConfig cfg;
    RoleVocab vocab;
    Encoder<T> encoder;
    Decoder<T> decoder;
    RelationHead<T> relation;

    static DlaModel create(ParameterStore<T>& s, const ModelConfig& cfg, Rng& rng) {
        DlaModel m;
        m.cfg = cfg;
        m.vocab = RoleVocab::by_name(cfg.vocab);
        m.encoder = Encoder<T>::create(s, cfg.encoder, m.vocab.num_categories(), rng);
        m.decoder = Decoder<T>::create(s, cfg.decoder, m.vocab.num_categories(),
                                       m.vocab.num_roles(), rng);
        m.relation = RelationHead<T>::create(s, cfg.decoder.hidden, rng, cfg.relation_width);
        return m;
    }
};

template <typename T>
Tensor<T> raster_to_tensor(const Raster& img) {
    Tensor<T> t({img.height, img.width, 1});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            t.at(y, x, 0) = static_cast<T>(img.at(x, y) / 255.0);
    return t;
}

// One full pass: encoder, proposal selection, query bank, decoder stack.
template <typename T>
struct ModelForward {
    FeaturePyramid<T> pyramid;
    SelectionOutput<T> selection;
    QueryBank<T> bank;
    std::vector<DecoderLayerOutput<T>> layers;
};

template <typename T>
ModelForward<T> run_model(const DlaModel<T>& m, Session<T>& s, typename Graph<T>::Ref image,
                          const std::vector<BBox>& line_boxes, int top_k) {
    ModelForward<T> f;
    f.pyramid = m.encoder.forward(s, image);
    f.selection = m.encoder.select(s, f.pyramid, top_k);
    f.bank = init_queries(s, m.decoder.table, f.selection.proposals, line_boxes);
    f.layers = m.decoder.forward(s, f.bank, f.pyramid);
    return f;
}

// Per-row decisions from the final decoder layer. Graphic rows keep their
// selection scores and categories but carry the refined boxes.
template <typename T>
RelationPrediction predict_relations(const DlaModel<T>& m, Session<T>& s,
                                     const ModelForward<T>& f,
                                     const std::vector<BBox>& line_boxes) {
    if (f.layers.empty()) throw std::invalid_argument("predict: decoder produced no layers");
    const DecoderLayerOutput<T>& last = f.layers.back();
    int N = f.bank.num_lines, K = f.bank.num_graphics;
    RelationDecision d = m.relation.predict(s, last.queries, N + K);

    RelationPrediction pred;
    pred.line_boxes = line_boxes;
    for (int k = 0; k < K; ++k) {
        GraphicalProposal p = f.selection.proposals[k];
        p.box = BBox(last.ref_boxes.at(N + k, 0), last.ref_boxes.at(N + k, 1),
                     last.ref_boxes.at(N + k, 2), last.ref_boxes.at(N + k, 3));
        pred.graphics.push_back(p);
    }
    pred.unit_target = std::move(d.unit_target);
    pred.unit_score = std::move(d.unit_score);
    pred.unit_type = std::move(d.unit_type);
    pred.role_target = std::move(d.role_target);
    pred.role_score = std::move(d.role_score);
    return pred;
}

struct InferencePage {
    RelationPrediction relation;               // all graphical query rows
    std::vector<GraphicalProposal> detections; // scored, for detection metrics
    std::vector<double> category_probs;        // [K, categories] row-major
    RelationPrediction kept;                   // rows above the score threshold
    DocumentStructure structure;               // decoded from the kept rows
};

// Resize to the test scale, run the model on the page's text lines, decode.
template <typename T>
InferencePage infer_page(const DlaModel<T>& m, ParameterStore<T>& store, const Raster& image,
                         const std::vector<BBox>& line_boxes, int top_k, int shorter_side,
                         int long_cap) {
    auto [w, h] = scaled_size(image.width, image.height, shorter_side, long_cap);
    Raster scaled = (w == image.width && h == image.height) ? image
                                                            : resize_raster(image, w, h);
    Session<T> s(store, false);
    auto im = s.g.input(raster_to_tensor<T>(scaled));
    ModelForward<T> f = run_model(m, s, im, line_boxes, top_k);

    InferencePage out;
    out.relation = predict_relations(m, s, f, line_boxes);
    out.detections = out.relation.graphics;
    int C = m.vocab.num_categories();
    const Tensor<T>& probs = s.g.val(s.g.softmax(f.selection.cls_logits));
    for (int pos : f.selection.selected)
        for (int c = 0; c < C; ++c)
            out.category_probs.push_back(static_cast<double>(probs.at(pos, c)));
    out.kept = filter_graphics(out.relation, m.cfg.graphic_threshold);
    out.structure = decode_structure(out.kept, m.vocab);
    return out;
}

} // namespace dla
