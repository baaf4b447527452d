#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dla/synthcorpus.hpp"
#include "dla/trainer.hpp"
#include "doctest.h"

namespace {

dla::ModelConfig mini_config() {
    dla::ModelConfig cfg;
    cfg.encoder.hidden = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn = 32;
    cfg.encoder.layers = 1;
    cfg.encoder.points = 2;
    cfg.decoder.hidden = 16;
    cfg.decoder.heads = 2;
    cfg.decoder.ffn = 32;
    cfg.decoder.layers = 2;
    cfg.decoder.points = 2;
    cfg.relation_width = 32;
    return cfg;
}

dla::TrainConfig mini_train_config() {
    dla::TrainConfig cfg;
    cfg.scales = {64};
    cfg.long_side_cap = 256;
    cfg.top_k = 8;
    cfg.batch_size = 2;
    cfg.seed = 9;
    return cfg;
}

std::vector<dla::TrainItem> make_items(const std::vector<uint64_t>& seeds,
                                       const dla::RoleVocab& vocab, double graphic_prob = 0.6) {
    dla::CorpusConfig cc;
    cc.width = 128;
    cc.height = 128;
    cc.graphic_prob = graphic_prob;
    std::vector<dla::TrainItem> items;
    for (uint64_t s : seeds) {
        dla::GeneratedPage p = dla::generate_page(s, cc);
        items.push_back(dla::make_train_item(p.ann, p.image, vocab));
    }
    return items;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("replaying a frozen plan reproduces the live loss") {
    dla::Rng rng(3);
    dla::ParameterStore<double> store;
    auto model = dla::DlaModel<double>::create(store, mini_config(), rng);
    auto items = make_items({21}, model.vocab);
    dla::TrainConfig cfg = mini_train_config();
    dla::LossPriors priors = dla::estimate_priors(items, model.vocab.num_roles());

    dla::Rng lrng(4);
    dla::Session<double> live(store, true);
    dla::ImageLoss<double> il = dla::image_loss(model, live, items[0], cfg, priors, lrng,
                                                dla::prepare_plan<double>(items[0], 64, 256),
                                                false);
    CHECK(std::isfinite(il.parts.total));
    CHECK(il.parts.total ==
          doctest::Approx(il.parts.cls + il.parts.l1 + il.parts.giou + il.parts.rel +
                          il.parts.type + il.parts.rolebox)
              .epsilon(1e-9));

    dla::Rng unused(0);
    dla::Session<double> replay(store, false);
    dla::ImageLoss<double> again =
        dla::image_loss(model, replay, items[0], cfg, priors, unused, il.plan, true);
    CHECK(again.parts.total == il.parts.total);
    CHECK(again.parts.rel == il.parts.rel);
    CHECK(again.parts.type == il.parts.type);
}

TEST_CASE("composite loss gradients match finite differences") {
    dla::Rng rng(13);
    dla::ParameterStore<double> store;
    dla::ModelConfig mc = mini_config();
    mc.encoder.hidden = 8;
    mc.encoder.ffn = 16;
    mc.encoder.points = 1;
    mc.decoder.hidden = 8;
    mc.decoder.ffn = 16;
    mc.decoder.points = 1;
    mc.relation_width = 16;
    auto model = dla::DlaModel<double>::create(store, mc, rng);
    auto items = make_items({33}, model.vocab);
    dla::TrainConfig cfg = mini_train_config();
    cfg.top_k = 3;
    dla::LossPriors priors = dla::estimate_priors(items, model.vocab.num_roles());

    dla::Rng lrng(8);
    dla::Session<double> live(store, true);
    dla::ImageLoss<double> il = dla::image_loss(model, live, items[0], cfg, priors, lrng,
                                                dla::prepare_plan<double>(items[0], 64, 256),
                                                false);
    live.g.backward(il.total);
    std::vector<dla::Tensor<double>> grads = live.grads();
    dla::StepPlan<double> plan = il.plan;

    auto eval = [&]() {
        dla::Rng r(0);
        dla::Session<double> s(store, false);
        return dla::image_loss(model, s, items[0], cfg, priors, r, plan, true).parts.total;
    };

    // gradient reaches the first backbone conv
    double head_norm = 0;
    for (double v : grads[0].data) head_norm += v * v;
    CHECK(head_norm > 0);

    dla::Rng pick(99);
    int checked = 0;
    for (int i = 0; i < store.size(); ++i) {
        const std::string& name = store.at(i).name;
        bool anchor = name.rfind("queries.", 0) == 0 || name.rfind("relation.", 0) == 0;
        if (!anchor && i % 3 != 0) continue;
        dla::Tensor<double>& t = store.at(i).tensor;
        int64_t idx = pick.uniform_int(0, t.numel() - 1);
        const double eps = 1e-5;
        double orig = t.data[idx];
        t.data[idx] = orig + eps;
        double hi = eval();
        t.data[idx] = orig - eps;
        double lo = eval();
        t.data[idx] = orig;
        double fd = (hi - lo) / (2 * eps);
        double an = grads[i].data[idx];
        double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
        INFO(name << "[" << idx << "] analytic " << an << " fd " << fd);
        CHECK(rel < 1e-4);
        ++checked;
    }
    CHECK(checked > 30);
}

TEST_CASE("training on a fixed pair of pages drives the loss down") {
    dla::Rng rng(17);
    dla::ParameterStore<float> store;
    auto model = dla::DlaModel<float>::create(store, mini_config(), rng);
    auto items = make_items({5, 6}, model.vocab);
    dla::TrainConfig cfg = mini_train_config();
    cfg.opt.lr_transformer = 1e-3;
    cfg.opt.lr_backbone = 1e-4;

    dla::Trainer<float> tr(model, store, std::move(items), cfg);
    std::vector<double> totals;
    for (int i = 0; i < 40; ++i) {
        dla::StepStats st = tr.step();
        CHECK(std::isfinite(st.losses.total));
        totals.push_back(st.losses.total);
    }
    CHECK(tr.steps_done() == 40);
    double head = 0, tail = 0;
    for (int i = 0; i < 5; ++i) {
        head += totals[i] / 5;
        tail += totals[totals.size() - 5 + i] / 5;
    }
    CHECK(tail < 0.8 * head);
}

TEST_CASE("zero learning rates leave every parameter bit-identical") {
    dla::Rng rng(23);
    dla::ParameterStore<float> store;
    auto model = dla::DlaModel<float>::create(store, mini_config(), rng);
    auto items = make_items({7}, model.vocab);
    dla::TrainConfig cfg = mini_train_config();
    cfg.batch_size = 1;
    cfg.opt.lr_transformer = 0;
    cfg.opt.lr_backbone = 0;

    std::vector<dla::Tensor<float>> before;
    for (int i = 0; i < store.size(); ++i) before.push_back(store.at(i).tensor);
    dla::Trainer<float> tr(model, store, std::move(items), cfg);
    tr.step();
    tr.step();
    for (int i = 0; i < store.size(); ++i)
        CHECK(store.at(i).tensor.data == before[i].data);
}

TEST_CASE("a zero backbone rate freezes exactly the backbone group") {
    dla::Rng rng(29);
    dla::ParameterStore<float> store;
    auto model = dla::DlaModel<float>::create(store, mini_config(), rng);
    auto items = make_items({8}, model.vocab);
    dla::TrainConfig cfg = mini_train_config();
    cfg.batch_size = 1;
    cfg.opt.lr_transformer = 1e-3;
    cfg.opt.lr_backbone = 0;

    std::vector<dla::Tensor<float>> before;
    for (int i = 0; i < store.size(); ++i) before.push_back(store.at(i).tensor);
    dla::Trainer<float> tr(model, store, std::move(items), cfg);
    tr.step();
    int moved = 0;
    for (int i = 0; i < store.size(); ++i) {
        if (store.at(i).group == dla::ParamGroup::Backbone)
            CHECK(store.at(i).tensor.data == before[i].data);
        else if (store.at(i).tensor.data != before[i].data)
            ++moved;
    }
    CHECK(moved > 0);
}

TEST_CASE("identical seeds give identical trajectories") {
    auto run = [](std::vector<float>& flat) {
        dla::Rng rng(41);
        dla::ParameterStore<float> store;
        auto model = dla::DlaModel<float>::create(store, mini_config(), rng);
        auto items = make_items({9, 10}, model.vocab);
        dla::TrainConfig cfg = mini_train_config();
        cfg.opt.lr_transformer = 5e-4;
        dla::Trainer<float> tr(model, store, std::move(items), cfg);
        for (int i = 0; i < 3; ++i) tr.step();
        for (int i = 0; i < store.size(); ++i)
            for (float v : store.at(i).tensor.data) flat.push_back(v);
    };
    std::vector<float> a, b;
    run(a);
    run(b);
    CHECK(a == b);
}

TEST_CASE("a page without graphics still trains") {
    dla::Rng rng(47);
    dla::ParameterStore<float> store;
    auto model = dla::DlaModel<float>::create(store, mini_config(), rng);
    auto items = make_items({12}, model.vocab, 0.0);
    REQUIRE(items[0].page.graphics.empty());
    dla::TrainConfig cfg = mini_train_config();
    cfg.batch_size = 1;
    dla::Trainer<float> tr(model, store, std::move(items), cfg);
    dla::StepStats st = tr.step();
    CHECK(std::isfinite(st.losses.total));
    CHECK(st.losses.l1 == 0);
    CHECK(st.losses.giou == 0);
    CHECK(st.losses.rel > 0);
}

TEST_CASE("a non-finite loss aborts with a diagnostic") {
    dla::Rng rng(53);
    dla::ParameterStore<float> store;
    auto model = dla::DlaModel<float>::create(store, mini_config(), rng);
    auto items = make_items({13}, model.vocab);
    dla::TrainConfig cfg = mini_train_config();
    cfg.batch_size = 1;
    dla::Trainer<float> tr(model, store, std::move(items), cfg);
    int bias = store.find("relation.bilinear_bias");
    REQUIRE(bias >= 0);
    store.at(bias).tensor.data[0] = std::numeric_limits<float>::quiet_NaN();
    try {
        tr.step();
        FAIL("expected TrainError");
    } catch (const dla::TrainError& e) {
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("estimated priors reflect supervision frequencies") {
    dla::RoleVocab vocab = dla::RoleVocab::by_name("comp-hrdoc");
    int para = vocab.role_id("Paragraph");
    REQUIRE(para >= 0);

    dla::DocumentPage page;
    page.id = 1;
    page.width = 100;
    page.height = 100;
    for (int i = 0; i < 3; ++i) {
        dla::TextLine l;
        l.id = i;
        l.box = dla::BBox(0.5, (i + 0.5) / 3, 0.8, 0.2);
        page.lines.push_back(l);
        dla::Region r;
        r.id = i;
        r.role = para;
        r.members = {i};
        page.regions.push_back(r);
        page.reading_order.push_back(i);
    }
    dla::Raster blank(64, 64);
    std::vector<dla::TrainItem> items = {dla::make_train_item(page, blank, vocab)};

    dla::LossPriors p = dla::estimate_priors(items, vocab.num_roles());
    CHECK(p.role[para] == doctest::Approx(1.0));
    for (int r = 0; r < vocab.num_roles(); ++r)
        if (r != para) CHECK(p.role[r] == 0.0);
    // three role edges, two chain edges, one final self edge, six negatives
    CHECK(p.type[static_cast<int>(dla::RelationType::None)] == doctest::Approx(0.5));
    CHECK(p.type[static_cast<int>(dla::RelationType::IntraRegion)] ==
          doctest::Approx(1.0 / 12));
    CHECK(p.type[static_cast<int>(dla::RelationType::InterRegion)] ==
          doctest::Approx(2.0 / 12));
    CHECK(p.type[static_cast<int>(dla::RelationType::LogicalRoleRel)] ==
          doctest::Approx(3.0 / 12));
}

} // TEST_SUITE
