#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "intentscope/gnn.hpp"

using namespace intentscope;

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Scalar re-implementation of the model, written from the architecture
/// description rather than from the matrix code.
std::vector<double> scalar_forward(const GnnModel& m, const std::vector<std::string>& texts,
                                   const std::vector<std::pair<uint32_t, uint32_t>>& edges) {
    const ModelConfig& cfg = m.config();
    const ParamLayout& lay = m.layout();
    const auto& p = m.params();
    const std::size_t n = texts.size();
    const int D = cfg.embed_dim, F = cfg.filters;
    auto emb = [&](int code, int d) { return p[lay.embedding + code + d * kVocabSize]; };

    std::vector<std::vector<double>> h(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<int> codes;
        for (std::size_t c = 0; c < texts[i].size() && c < static_cast<std::size_t>(cfg.max_text_len); ++c) {
            codes.push_back(char_code(texts[i][c]));
        }
        const int maxw = *std::max_element(cfg.windows.begin(), cfg.windows.end());
        while (static_cast<int>(codes.size()) < maxw) codes.push_back(96);
        for (std::size_t wi = 0; wi < cfg.windows.size(); ++wi) {
            const int w = cfg.windows[wi];
            for (int f = 0; f < F; ++f) {
                double best = -1e300;
                for (int pos = 0; pos + w <= static_cast<int>(codes.size()); ++pos) {
                    double v = p[lay.conv_b[wi] + f];
                    for (int o = 0; o < w; ++o) {
                        for (int d = 0; d < D; ++d) v += emb(codes[pos + o], d) * p[lay.conv_w[wi][o] + d + f * D];
                    }
                    best = std::max(best, v);
                }
                h[i].push_back(std::tanh(best));
            }
        }
    }
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
    for (auto [x, y] : edges) a[x][y] = a[y][x] = 1.0;
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) deg[i] = std::accumulate(a[i].begin(), a[i].end(), 0.0);

    for (std::size_t l = 0; l < lay.gcn_w.size(); ++l) {
        const auto [din, dout] = lay.gcn_shape[l];
        std::vector<std::vector<double>> next(n, std::vector<double>(static_cast<std::size_t>(dout)));
        for (std::size_t i = 0; i < n; ++i) {
            for (int o = 0; o < dout; ++o) {
                double z = p[lay.gcn_b[l] + o];
                for (std::size_t j = 0; j < n; ++j) {
                    if (a[i][j] == 0.0) continue;
                    const double norm = a[i][j] / std::sqrt(deg[i] * deg[j]);
                    for (int k = 0; k < din; ++k) z += norm * h[j][k] * p[lay.gcn_w[l] + k + o * din];
                }
                next[i][o] = cfg.activation == Activation::tanh ? std::tanh(z) : std::max(0.0, z);
            }
        }
        h = std::move(next);
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
        double z = p[lay.out_b];
        for (std::size_t k = 0; k < h[i].size(); ++k) z += h[i][k] * p[lay.out_w + k];
        out.push_back(sig(z));
    }
    return out;
}

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.embed_dim = 3;
    cfg.windows = {2, 3};
    cfg.filters = 4;
    cfg.gcn_widths = {5, 3};
    cfg.max_text_len = 10;
    return cfg;
}

}  // namespace

TEST_SUITE("gnn") {

TEST_CASE("layout covers every parameter once") {
    const ModelConfig cfg = tiny_model();
    const ParamLayout l = make_layout(cfg);
    const std::size_t expected = kVocabSize * 3 + (2 * 3 * 4 + 4) + (3 * 3 * 4 + 4) + (8 * 5 + 5) + (5 * 3 + 3) + 3 + 1;
    CHECK(l.total == expected);
    CHECK(l.out_b == l.total - 1);
}

TEST_CASE("character codes cover printable ASCII") {
    CHECK(char_code(' ') == 0);
    CHECK(char_code('~') == 94);
    CHECK(char_code('\x01') == 95);
    GraphNode u{NodeKind::url, "https://www.cvs.com/x"};
    CHECK(model_text(u) == "cvs.com/x");
}

TEST_CASE("zero parameters score every node sigmoid(bias)") {
    const ModelConfig cfg = tiny_model();
    GnnModel m(cfg);
    m.params()[m.layout().out_b] = 0.7;
    const auto in = prepare_input({"abc", "de", "fghij"}, {{0, 1}}, {true, false, true}, cfg);
    for (double s : m.forward(in)) CHECK(s == doctest::Approx(sig(0.7)).epsilon(1e-14));
}

TEST_CASE("forward pass matches a scalar hand computation on four nodes") {
    const ModelConfig cfg = tiny_model();
    GnnModel m(cfg);
    m.init(11);
    // Nonzero biases so every term is exercised.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (std::size_t b : m.layout().conv_b) for (int f = 0; f < cfg.filters; ++f) m.params()[b + f] = u(rng);
    for (std::size_t b : m.layout().gcn_b) m.params()[b] = u(rng);
    m.params()[m.layout().out_b] = u(rng);
    const std::vector<std::string> texts{"covid", "cvs.com/vax", "a", "weather today long text"};
    const std::vector<std::pair<uint32_t, uint32_t>> edges{{0, 1}, {1, 2}, {0, 3}};
    const auto in = prepare_input(texts, edges, {false, true, false, true}, cfg);
    const auto fast = m.forward(in);
    const auto slow = scalar_forward(m, texts, edges);
    for (std::size_t i = 0; i < 4; ++i) CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));

    ModelConfig relu = cfg;
    relu.activation = Activation::relu;
    GnnModel r(relu);
    r.params() = m.params();
    const auto in2 = prepare_input(texts, edges, {false, true, false, true}, relu);
    const auto f2 = r.forward(in2);
    const auto s2 = scalar_forward(r, texts, edges);
    for (std::size_t i = 0; i < 4; ++i) CHECK(f2[i] == doctest::Approx(s2[i]).epsilon(1e-12));
}

TEST_CASE("relabeling nodes permutes the scores") {
    const ModelConfig cfg = tiny_model();
    GnnModel m(cfg);
    m.init(5);
    const std::vector<std::string> texts{"alpha", "beta", "gamma", "delta", "eps"};
    const std::vector<std::pair<uint32_t, uint32_t>> edges{{0, 1}, {1, 2}, {2, 3}, {0, 4}};
    const std::vector<uint32_t> perm{3, 0, 4, 1, 2};  // old i -> new perm[i]
    std::vector<std::string> t2(5);
    for (uint32_t i = 0; i < 5; ++i) t2[perm[i]] = texts[i];
    std::vector<std::pair<uint32_t, uint32_t>> e2;
    for (auto [a, b] : edges) e2.emplace_back(perm[a], perm[b]);
    const std::vector<bool> urls(5, true);
    const auto s1 = m.forward(prepare_input(texts, edges, urls, cfg));
    const auto s2 = m.forward(prepare_input(t2, e2, urls, cfg));
    for (uint32_t i = 0; i < 5; ++i) CHECK(s1[i] == doctest::Approx(s2[perm[i]]).epsilon(1e-13));
}

TEST_CASE("single node graph scores") {
    const ModelConfig cfg = tiny_model();
    GnnModel m(cfg);
    m.init(2);
    const auto s = m.forward(prepare_input({"x"}, {}, {true}, cfg));
    REQUIRE(s.size() == 1);
    CHECK(s[0] > 0.0);
    CHECK(s[0] < 1.0);
}

TEST_CASE("analytic gradients match finite differences") {
    const ModelConfig cfg = tiny_model();
    GnnModel m(cfg);
    m.init(9);
    const auto in = prepare_input({"covid", "cvs.com/vax", "a", "weather"}, {{0, 1}, {1, 2}, {0, 3}},
                                  {false, true, false, true}, cfg);
    Targets t{{1, 3, 0}, {1.0, 0.0, 1.0}};
    CHECK(gradient_check(m, in, t, LossKind::bce) <= 1e-4);
    CHECK(gradient_check(m, in, t, LossKind::squared) <= 1e-4);
}

TEST_CASE("loss scale multiplies the gradient") {
    const ModelConfig cfg = tiny_model();
    GnnModel m(cfg);
    m.init(4);
    const auto in = prepare_input({"ab", "cd", "ef"}, {{0, 1}}, {true, true, true}, cfg);
    Targets t{{0, 2}, {1.0, 0.0}};
    std::vector<double> g1, g2;
    const double l1 = m.loss(in, t, LossKind::bce, &g1);
    const double l2 = m.loss(in, t, LossKind::bce, &g2, 2.0);
    CHECK(l2 == doctest::Approx(2 * l1));
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2 * g1[i]).epsilon(1e-12));
}

TEST_CASE("squared loss at its minimum has zero gradient") {
    const ModelConfig cfg = tiny_model();
    GnnModel m(cfg);
    m.init(4);
    const auto in = prepare_input({"ab", "cd"}, {{0, 1}}, {true, true}, cfg);
    const auto s = m.forward(in);
    Targets t{{0, 1}, {s[0], s[1]}};
    std::vector<double> g;
    CHECK(m.loss(in, t, LossKind::squared, &g) == doctest::Approx(0.0));
    double norm = 0.0;
    for (double v : g) norm += v * v;
    CHECK(std::sqrt(norm) < 1e-12);
}

TEST_CASE("parameter files round-trip") {
    GnnModel m(tiny_model());
    m.init(8);
    std::ostringstream out;
    write_params(out, m);
    std::istringstream in(out.str());
    const GnnModel back = read_params(in);
    CHECK(back.params() == m.params());
    CHECK(back.config().gcn_widths == m.config().gcn_widths);
    std::istringstream bad("garbage\n");
    CHECK_THROWS(read_params(bad));
}

TEST_CASE("model config validation") {
    ModelConfig c = tiny_model();
    c.windows = {};
    CHECK_THROWS(validate(c));
    c = tiny_model();
    c.learning_rate = 0.0;
    CHECK_THROWS(validate(c));
    const ModelConfig back = model_config_from_json(model_config_to_json(tiny_model()));
    CHECK(back.windows == tiny_model().windows);
}

TEST_CASE("separable labels reach perfect test AUC") {
    const ModelConfig cfg = fixtures::small_model();
    const auto f = fixtures::separable_fixture(cfg, 40, 1);
    const TrialResult r = train_trial(cfg, f.input, f.labels, 0, 99);
    CHECK(r.auc == doctest::Approx(1.0));
    CHECK(r.fpr == 0.0);
    CHECK(r.epochs <= cfg.max_epochs);
    CHECK(r.test.size() == 20);
}

TEST_CASE("randomly flipped labels give chance-level AUC") {
    ModelConfig cfg = fixtures::small_model();
    cfg.max_epochs = 60;
    double total = 0.0;
    for (uint64_t s = 0; s < 10; ++s) {
        auto f = fixtures::separable_fixture(cfg, 40, s);
        std::mt19937_64 rng(100 + s);
        for (double& v : f.labels.values) v = std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
        total += train_trial(cfg, f.input, f.labels, static_cast<int>(s), s).auc;
    }
    CHECK(std::abs(total / 10 - 0.5) <= 0.1);
}

TEST_CASE("too few labels of one class is an error") {
    const ModelConfig cfg = fixtures::small_model();
    auto f = fixtures::separable_fixture(cfg, 3, 1);
    for (double& v : f.labels.values) v = 1.0;
    f.labels.values[0] = 0.0;
    CHECK_THROWS_AS(train_trial(cfg, f.input, f.labels, 0, 1), std::invalid_argument);
}

TEST_CASE("precision threshold") {
    // Scores sorted high to low: + + + - + - -
    const std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};
    const std::vector<bool> y{true, true, true, false, true, false, false};
    const auto t = precision_threshold(s, y, 0.75);
    REQUIRE(t.has_value());
    // Above 0.4 holds four positives out of five; above 0.3 drops to 4/6.
    CHECK(*t == doctest::Approx(0.4));
    CHECK_FALSE(precision_threshold({0.9, 0.1}, {false, true}, 0.9).has_value());
}

TEST_CASE("expansion counts passes per trial") {
    const auto g = fixtures::GraphBuilder().edge("q", "u:a").edge("q", "u:b").edge("q", "u:c").build();
    const uint32_t a = *g.find(NodeKind::url, "a"), b = *g.find(NodeKind::url, "b"), c = *g.find(NodeKind::url, "c");
    std::vector<TrialResult> trials(10);
    for (int k = 0; k < 10; ++k) {
        auto& t = trials[static_cast<std::size_t>(k)];
        t.scores.assign(g.node_count(), 0.0);
        t.t_med = 0.5;
        t.t_prec = 0.6;
        t.scores[a] = 0.9;                  // passes every trial
        t.scores[b] = k < 5 ? 0.9 : 0.1;    // passes half
        t.scores[c] = 0.9;
        if (k >= 4) t.t_prec.reset();       // unachievable precision counts as a failure
    }
    const auto e = expand_urls(g, trials, {"a", "b", "missing"}, 6);
    REQUIRE(e.size() == 2);
    CHECK(e[0].median_passes == 10);
    CHECK(e[0].both_passes == 4);
    CHECK_FALSE(e[0].included);
    for (auto& t : trials) t.t_prec = 0.6;
    const auto e2 = expand_urls(g, trials, {"a", "b"}, 6);
    CHECK(e2[0].included);
    CHECK(e2[0].both_passes == 10);
    CHECK(e2[1].both_passes == 5);
    CHECK_FALSE(e2[1].included);
}

TEST_CASE("expansion pool skips labeled URLs") {
    const auto g = fixtures::GraphBuilder().edge("where can i get a covid vaccine", "u:a", 5).edge("where can i get a covid vaccine", "u:b", 1).build();
    const auto scores = personalized_pagerank(g, std::vector<std::string>{"where can i get a covid vaccine"}, PprConfig{});
    LabelStore labels;
    labels.set_url("a", Polarity::positive, Provenance::consensus);
    CHECK(expansion_pool(g, scores, labels, 10) == std::vector<std::string>{"b"});
}

TEST_CASE("pretraining targets fall with S-PPR rank") {
    const auto g = fixtures::GraphBuilder().edge("s", "u:a", 5).edge("s", "u:b", 2).edge("s", "u:c", 1).build();
    const auto scores = personalized_pagerank(g, std::vector<std::string>{"s"}, PprConfig{});
    const auto t = make_pretrain_target(g, scores, 10);
    CHECK(t.q_max == 1);
    CHECK(t.k == 10);
    REQUIRE(t.targets.nodes.size() == 3);
    CHECK(t.targets.values[0] > t.targets.values[1]);
    CHECK(t.targets.values[1] > t.targets.values[2]);
}

TEST_CASE("disabled pretraining leaves parameters alone") {
    ModelConfig cfg = fixtures::small_model();
    cfg.pretrain = false;
    GnnModel m(cfg);
    m.init(1);
    const auto before = m.params();
    const auto f = fixtures::separable_fixture(cfg, 5, 1);
    PretrainTarget t;
    t.targets = f.labels;
    pretrain(m, f.input, t, {0, 1, 2});
    CHECK(m.params() == before);
}

TEST_CASE("constant pretraining targets stop at once with a warning") {
    ModelConfig cfg = fixtures::small_model();
    cfg.pretrain = true;
    GnnModel m(cfg);
    m.init(1);
    const auto f = fixtures::separable_fixture(cfg, 5, 1);
    PretrainTarget t;
    t.targets = f.labels;
    std::fill(t.targets.values.begin(), t.targets.values.end(), 0.5);
    set_warning_sink([](std::string_view) {});
    const auto r = pretrain(m, f.input, t, {0, 1, 2, 3});
    set_warning_sink(nullptr);
    CHECK(r.warned);
    CHECK(r.epochs == 0);
}

TEST_CASE("pretraining on learnable ranks stops before the epoch cap") {
    ModelConfig cfg = fixtures::small_model();
    cfg.pretrain = true;
    cfg.pretrain_max_epochs = 300;
    cfg.pretrain_stop = 0.8;
    GnnModel m(cfg);
    m.init(3);
    const auto f = fixtures::separable_fixture(cfg, 30, 2);
    PretrainTarget t;
    t.targets = f.labels;
    for (double& v : t.targets.values) v = 0.1 + 0.8 * v;
    std::vector<uint32_t> val;
    for (uint32_t i = 0; i < 12; ++i) val.push_back(i);
    const auto r = pretrain(m, f.input, t, val);
    CHECK(r.converged);
    CHECK(r.epochs < cfg.pretrain_max_epochs);
}

}
