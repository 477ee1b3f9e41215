#include "intentscope/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "intentscope/csv.hpp"
#include "intentscope/stats.hpp"

namespace intentscope {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixXd>;
using CMapM = Eigen::Map<const MatrixXd>;
using CMapV = Eigen::Map<const VectorXd>;

namespace {

constexpr int kOov = 95;
constexpr int kPad = 96;

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

int max_window(const ModelConfig& cfg) { return *std::max_element(cfg.windows.begin(), cfg.windows.end()); }

}  // namespace

void validate(const ModelConfig& cfg) {
    if (cfg.embed_dim <= 0 || cfg.filters <= 0 || cfg.max_text_len <= 0) {
        throw std::invalid_argument("model widths must be positive");
    }
    if (cfg.windows.empty()) throw std::invalid_argument("model needs at least one convolution window");
    for (int w : cfg.windows) {
        if (w <= 0) throw std::invalid_argument("convolution windows must be positive");
    }
    if (cfg.gcn_widths.empty()) throw std::invalid_argument("model needs at least one graph convolution");
    for (int w : cfg.gcn_widths) {
        if (w <= 0) throw std::invalid_argument("graph convolution widths must be positive");
    }
    if (!(cfg.pretrain_stop > 0.0 && cfg.pretrain_stop < 1.0)) {
        throw std::invalid_argument("pretrain stop correlation must lie in (0,1)");
    }
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (cfg.max_epochs < 1 || cfg.patience < 1) throw std::invalid_argument("epochs and patience must be positive");
}

int char_code(char c) {
    const auto u = static_cast<unsigned char>(c);
    return (u >= 32 && u <= 126) ? u - 32 : kOov;
}

std::string model_text(const GraphNode& node) {
    if (node.kind == NodeKind::query) return node.text;
    std::string_view s = node.text;
    if (const std::size_t p = s.find("://"); p != std::string_view::npos) s.remove_prefix(p + 3);
    if (starts_with(s, "www.")) s.remove_prefix(4);
    return std::string(s);
}

GraphInput prepare_input(const std::vector<std::string>& texts, const std::vector<std::pair<uint32_t, uint32_t>>& edges,
                         const std::vector<bool>& is_url, const ModelConfig& cfg) {
    validate(cfg);
    const std::size_t n = texts.size();
    if (is_url.size() != n) throw std::invalid_argument("is_url size differs from node count");
    GraphInput in;
    in.is_url = is_url;
    const std::size_t min_len = static_cast<std::size_t>(max_window(cfg));
    for (const std::string& t : texts) {
        std::vector<uint8_t> codes;
        for (std::size_t i = 0; i < t.size() && i < static_cast<std::size_t>(cfg.max_text_len); ++i) {
            codes.push_back(static_cast<uint8_t>(char_code(t[i])));
        }
        while (codes.size() < min_len) codes.push_back(kPad);
        in.codes.push_back(std::move(codes));
    }
    std::set<std::pair<uint32_t, uint32_t>> undirected;
    for (auto [a, b] : edges) {
        if (a >= n || b >= n) throw std::invalid_argument("edge endpoint out of range");
        if (a != b) undirected.insert({std::min(a, b), std::max(a, b)});
    }
    std::vector<double> deg(n, 1.0);
    for (auto [a, b] : undirected) {
        deg[a] += 1.0;
        deg[b] += 1.0;
    }
    std::vector<Eigen::Triplet<double>> trip;
    for (uint32_t i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0 / deg[i]);
    for (auto [a, b] : undirected) {
        const double v = 1.0 / std::sqrt(deg[a] * deg[b]);
        trip.emplace_back(a, b, v);
        trip.emplace_back(b, a, v);
    }
    in.adj.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    in.adj.setFromTriplets(trip.begin(), trip.end());
    return in;
}

GraphInput prepare_input(const QueryClickGraph& g, const ModelConfig& cfg) {
    std::vector<std::string> texts;
    std::vector<bool> is_url;
    for (const GraphNode& node : g.nodes()) {
        texts.push_back(model_text(node));
        is_url.push_back(node.kind == NodeKind::url);
    }
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (const auto& [s, t, w] : g.edges()) edges.emplace_back(s, t);
    return prepare_input(texts, edges, is_url, cfg);
}

ParamLayout make_layout(const ModelConfig& cfg) {
    validate(cfg);
    ParamLayout l;
    std::size_t off = 0;
    l.embedding = off;
    off += static_cast<std::size_t>(kVocabSize * cfg.embed_dim);
    for (int w : cfg.windows) {
        std::vector<std::size_t> offsets;
        for (int o = 0; o < w; ++o) {
            offsets.push_back(off);
            off += static_cast<std::size_t>(cfg.embed_dim * cfg.filters);
        }
        l.conv_w.push_back(std::move(offsets));
        l.conv_b.push_back(off);
        off += static_cast<std::size_t>(cfg.filters);
    }
    int in = cfg.filters * static_cast<int>(cfg.windows.size());
    for (int out : cfg.gcn_widths) {
        l.gcn_w.push_back(off);
        l.gcn_shape.emplace_back(in, out);
        off += static_cast<std::size_t>(in * out);
        l.gcn_b.push_back(off);
        off += static_cast<std::size_t>(out);
        in = out;
    }
    l.out_w = off;
    off += static_cast<std::size_t>(in);
    l.out_b = off;
    off += 1;
    l.total = off;
    return l;
}

GnnModel::GnnModel(ModelConfig cfg) : cfg_(std::move(cfg)), layout_(make_layout(cfg_)), params_(layout_.total, 0.0) {}

void GnnModel::init(uint64_t seed) {
    Rng rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    auto fill = [&](std::size_t off, std::size_t count, double limit) {
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t i = 0; i < count; ++i) params_[off + i] = u(rng);
    };
    const double s = cfg_.init_scale;
    fill(layout_.embedding, static_cast<std::size_t>(kVocabSize * cfg_.embed_dim), 0.5 * s);
    for (std::size_t wi = 0; wi < cfg_.windows.size(); ++wi) {
        const double limit = s * std::sqrt(6.0 / (cfg_.windows[wi] * cfg_.embed_dim + cfg_.filters));
        for (std::size_t off : layout_.conv_w[wi]) fill(off, static_cast<std::size_t>(cfg_.embed_dim * cfg_.filters), limit);
    }
    for (std::size_t l = 0; l < layout_.gcn_w.size(); ++l) {
        const auto [in, out] = layout_.gcn_shape[l];
        fill(layout_.gcn_w[l], static_cast<std::size_t>(in * out), s * std::sqrt(6.0 / (in + out)));
    }
    const int last = cfg_.gcn_widths.back();
    fill(layout_.out_w, static_cast<std::size_t>(last), s * std::sqrt(6.0 / (last + 1)));
}

namespace {

struct ForwardCache {
    MatrixXd pooled;              // N x (windows * filters), before activation
    std::vector<int> argmax;      // N x (windows * filters), row-major
    std::vector<MatrixXd> h;      // h[0] = conv features, h[l+1] = layer l output
    std::vector<MatrixXd> ah;     // adj * h[l]
    VectorXd logits;
};

double activate(Activation a, double z) { return a == Activation::tanh ? std::tanh(z) : std::max(0.0, z); }

ForwardCache run_forward(const ModelConfig& cfg, const ParamLayout& lay, const std::vector<double>& p,
                         const GraphInput& in) {
    const auto n = static_cast<Eigen::Index>(in.size());
    const int F = cfg.filters;
    const int nw = static_cast<int>(cfg.windows.size());
    ForwardCache c;
    c.pooled.resize(n, nw * F);
    c.argmax.assign(static_cast<std::size_t>(n * nw * F), 0);

    const CMapM emb(p.data() + lay.embedding, kVocabSize, cfg.embed_dim);
    std::vector<double> acc(static_cast<std::size_t>(F));
    for (int wi = 0; wi < nw; ++wi) {
        const int w = cfg.windows[static_cast<std::size_t>(wi)];
        std::vector<RowMatrix> tables;
        for (int o = 0; o < w; ++o) {
            const CMapM W(p.data() + lay.conv_w[static_cast<std::size_t>(wi)][static_cast<std::size_t>(o)], cfg.embed_dim, F);
            tables.emplace_back(emb * W);
        }
        const double* bias = p.data() + lay.conv_b[static_cast<std::size_t>(wi)];
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& codes = in.codes[static_cast<std::size_t>(i)];
            const int positions = static_cast<int>(codes.size()) - w + 1;
            double* best = &c.pooled(i, wi * F);
            int* arg = &c.argmax[static_cast<std::size_t>((i * nw + wi) * F)];
            for (int pos = 0; pos < positions; ++pos) {
                std::copy(bias, bias + F, acc.begin());
                for (int o = 0; o < w; ++o) {
                    const double* row = tables[static_cast<std::size_t>(o)].row(codes[static_cast<std::size_t>(pos + o)]).data();
                    for (int f = 0; f < F; ++f) acc[static_cast<std::size_t>(f)] += row[f];
                }
                for (int f = 0; f < F; ++f) {
                    // Pooled matrix is column-major: column stride is n.
                    double& slot = *(best + static_cast<Eigen::Index>(f) * n);
                    if (pos == 0 || acc[static_cast<std::size_t>(f)] > slot) {
                        slot = acc[static_cast<std::size_t>(f)];
                        arg[f] = pos;
                    }
                }
            }
        }
    }
    c.h.push_back(c.pooled.array().tanh().matrix());
    for (std::size_t l = 0; l < lay.gcn_w.size(); ++l) {
        const auto [din, dout] = lay.gcn_shape[l];
        const CMapM W(p.data() + lay.gcn_w[l], din, dout);
        const CMapV b(p.data() + lay.gcn_b[l], dout);
        c.ah.push_back(in.adj * c.h.back());
        MatrixXd z = c.ah.back() * W;
        z.rowwise() += b.transpose();
        c.h.push_back(z.unaryExpr([&](double v) { return activate(cfg.activation, v); }));
    }
    const CMapV wo(p.data() + lay.out_w, cfg.gcn_widths.back());
    c.logits = c.h.back() * wo;
    c.logits.array() += p[lay.out_b];
    return c;
}

}  // namespace

std::vector<double> GnnModel::forward(const GraphInput& input) const {
    const ForwardCache c = run_forward(cfg_, layout_, params_, input);
    std::vector<double> out(input.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(c.logits(static_cast<Eigen::Index>(i)));
    return out;
}

double GnnModel::loss(const GraphInput& input, const Targets& targets, LossKind kind, std::vector<double>* grad,
                      double scale) const {
    if (targets.nodes.size() != targets.values.size()) throw std::invalid_argument("target sizes differ");
    if (targets.nodes.empty()) throw std::invalid_argument("loss needs at least one target");
    const ForwardCache c = run_forward(cfg_, layout_, params_, input);
    const auto n = static_cast<Eigen::Index>(input.size());
    const double inv = scale / static_cast<double>(targets.nodes.size());
    VectorXd dz = VectorXd::Zero(n);
    double total = 0.0;
    for (std::size_t k = 0; k < targets.nodes.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(targets.nodes[k]);
        if (i >= n) throw std::invalid_argument("target node out of range");
        const double z = c.logits(i);
        const double y = targets.values[k];
        const double s = sigmoid(z);
        if (kind == LossKind::bce) {
            total += softplus(z) - y * z;
            dz(i) += (s - y) * inv;
        } else {
            total += (s - y) * (s - y);
            dz(i) += 2.0 * (s - y) * s * (1.0 - s) * inv;
        }
    }
    if (!grad) return total * inv;

    const ModelConfig& cfg = cfg_;
    const ParamLayout& lay = layout_;
    std::vector<double>& g = *grad;
    g.assign(params_.size(), 0.0);

    const int L = static_cast<int>(lay.gcn_w.size());
    const MatrixXd& top = c.h.back();
    Eigen::Map<VectorXd>(g.data() + lay.out_w, cfg.gcn_widths.back()) = top.transpose() * dz;
    g[lay.out_b] = dz.sum();
    const CMapV wo(params_.data() + lay.out_w, cfg.gcn_widths.back());
    MatrixXd dh = dz * wo.transpose();
    for (int l = L - 1; l >= 0; --l) {
        const auto ul = static_cast<std::size_t>(l);
        const auto [din, dout] = lay.gcn_shape[ul];
        const MatrixXd& h = c.h[ul + 1];
        MatrixXd dzl(dh.rows(), dh.cols());
        if (cfg.activation == Activation::tanh) {
            dzl = dh.array() * (1.0 - h.array().square());
        } else {
            dzl = dh.array() * (h.array() > 0.0).cast<double>();
        }
        Eigen::Map<MatrixXd>(g.data() + lay.gcn_w[ul], din, dout) = c.ah[ul].transpose() * dzl;
        Eigen::Map<VectorXd>(g.data() + lay.gcn_b[ul], dout) = dzl.colwise().sum().transpose();
        const CMapM W(params_.data() + lay.gcn_w[ul], din, dout);
        dh = input.adj * (dzl * W.transpose());
    }
    // Through tanh of the pooled conv features.
    const MatrixXd dm = dh.array() * (1.0 - c.h[0].array().square());

    const int F = cfg.filters;
    const int nw = static_cast<int>(cfg.windows.size());
    const CMapM emb(params_.data() + lay.embedding, kVocabSize, cfg.embed_dim);
    MapM demb(g.data() + lay.embedding, kVocabSize, cfg.embed_dim);
    for (int wi = 0; wi < nw; ++wi) {
        const int w = cfg.windows[static_cast<std::size_t>(wi)];
        std::vector<RowMatrix> gt(static_cast<std::size_t>(w), RowMatrix::Zero(kVocabSize, F));
        double* db = g.data() + lay.conv_b[static_cast<std::size_t>(wi)];
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& codes = input.codes[static_cast<std::size_t>(i)];
            const int* arg = &c.argmax[static_cast<std::size_t>((i * nw + wi) * F)];
            for (int f = 0; f < F; ++f) {
                const double gv = dm(i, wi * F + f);
                if (gv == 0.0) continue;
                db[f] += gv;
                for (int o = 0; o < w; ++o) gt[static_cast<std::size_t>(o)](codes[static_cast<std::size_t>(arg[f] + o)], f) += gv;
            }
        }
        for (int o = 0; o < w; ++o) {
            const std::size_t off = lay.conv_w[static_cast<std::size_t>(wi)][static_cast<std::size_t>(o)];
            const CMapM W(params_.data() + off, cfg.embed_dim, F);
            Eigen::Map<MatrixXd>(g.data() + off, cfg.embed_dim, F) = emb.transpose() * gt[static_cast<std::size_t>(o)];
            demb += gt[static_cast<std::size_t>(o)] * W.transpose();
        }
    }
    return total * inv;
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return {{"embed_dim", cfg.embed_dim},
            {"windows", cfg.windows},
            {"filters", cfg.filters},
            {"gcn_widths", cfg.gcn_widths},
            {"activation", cfg.activation == Activation::tanh ? "tanh" : "relu"},
            {"max_text_len", cfg.max_text_len},
            {"init_scale", cfg.init_scale},
            {"optimizer", cfg.optimizer == Optimizer::adam ? "adam" : "sgd"},
            {"learning_rate", cfg.learning_rate},
            {"max_epochs", cfg.max_epochs},
            {"patience", cfg.patience},
            {"pretrain", cfg.pretrain},
            {"pretrain_stop", cfg.pretrain_stop},
            {"pretrain_max_epochs", cfg.pretrain_max_epochs},
            {"pretrain_min_k", cfg.pretrain_min_k},
            {"pretrain_node_threshold", cfg.pretrain_node_threshold},
            {"seed", cfg.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.windows = j.value("windows", cfg.windows);
    cfg.filters = j.value("filters", cfg.filters);
    cfg.gcn_widths = j.value("gcn_widths", cfg.gcn_widths);
    const std::string act = j.value("activation", std::string("tanh"));
    if (act != "tanh" && act != "relu") throw ConfigError("unknown activation '" + act + "'");
    cfg.activation = act == "tanh" ? Activation::tanh : Activation::relu;
    cfg.max_text_len = j.value("max_text_len", cfg.max_text_len);
    cfg.init_scale = j.value("init_scale", cfg.init_scale);
    const std::string opt = j.value("optimizer", std::string("sgd"));
    if (opt != "adam" && opt != "sgd") throw ConfigError("unknown optimizer '" + opt + "'");
    cfg.optimizer = opt == "adam" ? Optimizer::adam : Optimizer::sgd;
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.pretrain = j.value("pretrain", cfg.pretrain);
    cfg.pretrain_stop = j.value("pretrain_stop", cfg.pretrain_stop);
    cfg.pretrain_max_epochs = j.value("pretrain_max_epochs", cfg.pretrain_max_epochs);
    cfg.pretrain_min_k = j.value("pretrain_min_k", cfg.pretrain_min_k);
    cfg.pretrain_node_threshold = j.value("pretrain_node_threshold", cfg.pretrain_node_threshold);
    cfg.seed = j.value("seed", cfg.seed);
    validate(cfg);
    return cfg;
}

void write_params(std::ostream& out, const GnnModel& model) {
    const ParamLayout& l = model.layout();
    const ModelConfig& cfg = model.config();
    out << "gnnparams 1\n";
    out << "config " << model_config_to_json(cfg).dump() << '\n';
    out << "tensor embedding " << l.embedding << ' ' << kVocabSize << ' ' << cfg.embed_dim << '\n';
    for (std::size_t wi = 0; wi < l.conv_w.size(); ++wi) {
        for (std::size_t o = 0; o < l.conv_w[wi].size(); ++o) {
            out << "tensor conv" << wi << "_w" << o << ' ' << l.conv_w[wi][o] << ' ' << cfg.embed_dim << ' '
                << cfg.filters << '\n';
        }
        out << "tensor conv" << wi << "_b " << l.conv_b[wi] << ' ' << cfg.filters << " 1\n";
    }
    for (std::size_t k = 0; k < l.gcn_w.size(); ++k) {
        out << "tensor gcn" << k << "_w " << l.gcn_w[k] << ' ' << l.gcn_shape[k].first << ' ' << l.gcn_shape[k].second
            << '\n';
        out << "tensor gcn" << k << "_b " << l.gcn_b[k] << ' ' << l.gcn_shape[k].second << " 1\n";
    }
    out << "tensor out_w " << l.out_w << ' ' << cfg.gcn_widths.back() << " 1\n";
    out << "tensor out_b " << l.out_b << " 1 1\n";
    out << "values " << l.total << '\n';
    for (double v : model.params()) out << format_double(v) << '\n';
}

GnnModel read_params(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "gnnparams 1") throw std::runtime_error("not a version-1 parameter file");
    if (!std::getline(in, line) || !starts_with(line, "config ")) throw std::runtime_error("parameter file lacks config");
    GnnModel model(model_config_from_json(nlohmann::json::parse(line.substr(7))));
    std::size_t declared = 0;
    while (std::getline(in, line)) {
        if (starts_with(line, "tensor ")) continue;
        if (!starts_with(line, "values ")) throw std::runtime_error("unexpected line in parameter file: " + line);
        declared = std::stoul(line.substr(7));
        break;
    }
    if (declared != model.layout().total) {
        throw std::runtime_error("parameter count " + std::to_string(declared) + " does not match config (" +
                                 std::to_string(model.layout().total) + ")");
    }
    for (std::size_t i = 0; i < declared; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("parameter file truncated");
        model.params()[i] = std::stod(line);
    }
    return model;
}

double gradient_check(const GnnModel& model, const GraphInput& input, const Targets& targets, LossKind kind,
                      double step, std::size_t max_params, uint64_t seed) {
    std::vector<double> analytic;
    model.loss(input, targets, kind, &analytic);
    std::vector<std::size_t> which(model.params().size());
    std::iota(which.begin(), which.end(), 0);
    if (max_params > 0 && max_params < which.size()) {
        Rng rng(seed);
        std::shuffle(which.begin(), which.end(), rng);
        which.resize(max_params);
    }
    GnnModel probe = model;
    double worst = 0.0;
    for (std::size_t k : which) {
        const double orig = probe.params()[k];
        probe.params()[k] = orig + step;
        const double up = probe.loss(input, targets, kind, nullptr);
        probe.params()[k] = orig - step;
        const double down = probe.loss(input, targets, kind, nullptr);
        probe.params()[k] = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
    }
    return worst;
}

void optimizer_step(const ModelConfig& cfg, std::vector<double>& params, const std::vector<double>& grad,
                    TrainState& state) {
    if (cfg.optimizer == Optimizer::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grad[i];
        return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
        params[i] -= cfg.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
    }
}

PretrainTarget make_pretrain_target(const QueryClickGraph& g, const PprScores& scores, std::size_t min_k) {
    const std::size_t n = g.node_count();
    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (scores.score[a] != scores.score[b]) return scores.score[a] > scores.score[b];
        return a < b;
    });
    std::vector<std::size_t> rank(n);
    for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r + 1;
    PretrainTarget t;
    for (uint32_t s : scores.seeds) t.q_max = std::max(t.q_max, rank[s]);
    t.k = std::max(min_k, t.q_max);
    for (uint32_t i = 0; i < n; ++i) {
        if (g.node(i).kind != NodeKind::url) continue;
        t.targets.nodes.push_back(i);
        t.targets.values.push_back(std::clamp(1.0 - static_cast<double>(rank[i]) / static_cast<double>(t.k), 0.0, 1.0));
    }
    return t;
}

PretrainResult pretrain(GnnModel& model, const GraphInput& input, const PretrainTarget& target,
                        const std::vector<uint32_t>& validation_nodes) {
    PretrainResult res;
    const ModelConfig& cfg = model.config();
    if (!cfg.pretrain) return res;
    const std::set<uint32_t> val_set(validation_nodes.begin(), validation_nodes.end());
    Targets train, val;
    for (std::size_t k = 0; k < target.targets.nodes.size(); ++k) {
        Targets& dst = val_set.count(target.targets.nodes[k]) ? val : train;
        dst.nodes.push_back(target.targets.nodes[k]);
        dst.values.push_back(target.targets.values[k]);
    }
    auto constant = [](const std::vector<double>& v) {
        return v.empty() || std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    };
    if (train.nodes.empty() || val.nodes.size() < 2 || constant(val.values) || constant(train.values)) {
        warn("pretraining skipped: rank targets are constant or too few");
        res.warned = true;
        return res;
    }
    auto val_corr = [&] {
        const std::vector<double> s = model.forward(input);
        std::vector<double> pred;
        for (uint32_t i : val.nodes) pred.push_back(s[i]);
        try {
            return spearman(pred, val.values);
        } catch (const std::domain_error&) {
            return 0.0;
        }
    };
    TrainState state;
    std::vector<double> grad;
    std::vector<double> best = model.params();
    double best_corr = val_corr();
    res.correlation = best_corr;
    if (best_corr >= cfg.pretrain_stop) {
        res.converged = true;
        return res;
    }
    for (int epoch = 1; epoch <= cfg.pretrain_max_epochs; ++epoch) {
        model.loss(input, train, LossKind::squared, &grad);
        optimizer_step(cfg, model.params(), grad, state);
        const double corr = val_corr();
        res.epochs = epoch;
        if (corr > best_corr) {
            best_corr = corr;
            best = model.params();
        }
        if (corr >= cfg.pretrain_stop) {
            res.converged = true;
            break;
        }
    }
    model.params() = best;
    res.correlation = best_corr;
    if (!res.converged) {
        res.warned = true;
        warn("pretraining stopped at max epochs with rank correlation " + format_double(best_corr));
    }
    return res;
}

Targets labeled_urls(const QueryClickGraph& g, const LabelStore& labels) {
    Targets t;
    for (uint32_t i = 0; i < g.node_count(); ++i) {
        if (g.node(i).kind != NodeKind::url) continue;
        auto l = labels.get(g.node(i).text);
        if (!l || l->provenance == Provenance::gnn) continue;
        t.nodes.push_back(i);
        t.values.push_back(l->polarity == Polarity::positive ? 1.0 : 0.0);
    }
    return t;
}

std::optional<double> precision_threshold(const std::vector<double>& scores, const std::vector<bool>& positive,
                                          double min_precision) {
    if (scores.size() != positive.size()) throw std::invalid_argument("score and label sizes differ");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::optional<double> best;
    std::size_t above = 0, above_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        const double v = scores[idx[i]];
        // Threshold v predicts exactly the items already passed.
        if (above > 0) {
            if (static_cast<double>(above_pos) < min_precision * static_cast<double>(above)) return best;
            best = v;
        }
        for (; i < idx.size() && scores[idx[i]] == v; ++i) {
            ++above;
            if (positive[idx[i]]) ++above_pos;
        }
    }
    if (above > 0 && static_cast<double>(above_pos) >= min_precision * static_cast<double>(above) &&
        scores[idx.back()] > 0.0) {
        best = 0.0;
    }
    return best;
}

TrialResult train_trial(const ModelConfig& cfg, const GraphInput& input, const Targets& labels, int trial,
                        uint64_t split_seed, const std::vector<double>* init) {
    std::vector<uint32_t> pos, neg;
    for (std::size_t k = 0; k < labels.nodes.size(); ++k) (labels.values[k] > 0.5 ? pos : neg).push_back(labels.nodes[k]);
    if (pos.size() < 2 || neg.size() < 2) {
        throw std::invalid_argument("training needs at least two labels of each polarity (have " +
                                    std::to_string(pos.size()) + " positive, " + std::to_string(neg.size()) +
                                    " negative)");
    }
    TrialResult res;
    res.trial = trial;
    Rng rng(derive_seed(split_seed, static_cast<uint64_t>(trial)));
    for (auto* cls : {&pos, &neg}) {
        std::sort(cls->begin(), cls->end());
        std::shuffle(cls->begin(), cls->end(), rng);
        const std::size_t n = cls->size();
        std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.25 * static_cast<double>(n))));
        std::size_t n_val = static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(n)));
        if (n_test + n_val >= n) n_val = n - n_test - 1;
        for (std::size_t k = 0; k < n; ++k) {
            auto& dst = k < n_test ? res.test : (k < n_test + n_val ? res.validation : res.train);
            dst.push_back((*cls)[k]);
        }
    }
    std::map<uint32_t, double> y;
    for (std::size_t k = 0; k < labels.nodes.size(); ++k) y[labels.nodes[k]] = labels.values[k];
    auto make = [&](const std::vector<uint32_t>& nodes) {
        Targets t;
        t.nodes = nodes;
        for (uint32_t i : nodes) t.values.push_back(y[i]);
        return t;
    };
    const Targets train = make(res.train);
    const Targets val = make(res.validation);

    GnnModel model(cfg);
    if (init) {
        if (init->size() != model.params().size()) throw std::invalid_argument("initial parameters have the wrong size");
        model.params() = *init;
    } else {
        model.init(derive_seed(cfg.seed, static_cast<uint64_t>(trial)));
    }
    TrainState state;
    std::vector<double> grad;
    std::vector<double> best = model.params();
    const bool has_val = !val.nodes.empty();
    double best_val = has_val ? model.loss(input, val, LossKind::bce, nullptr) : std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double train_loss = model.loss(input, train, LossKind::bce, &grad);
        optimizer_step(cfg, model.params(), grad, state);
        res.epochs = epoch;
        const double v = has_val ? model.loss(input, val, LossKind::bce, nullptr) : train_loss;
        if (v < best_val - 1e-12) {
            best_val = v;
            best = model.params();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    model.params() = best;
    res.best_val_loss = best_val;
    res.scores = model.forward(input);
    res.params = model.params();

    std::vector<double> test_pos, test_neg, test_scores;
    std::vector<bool> test_labels;
    for (uint32_t i : res.test) {
        const bool p = y[i] > 0.5;
        (p ? test_pos : test_neg).push_back(res.scores[i]);
        test_scores.push_back(res.scores[i]);
        test_labels.push_back(p);
    }
    res.auc = auc(test_pos, test_neg);
    res.t_med = median(test_pos);
    res.t_prec = precision_threshold(test_scores, test_labels, 0.9);
    res.threshold = std::max(res.t_med, res.t_prec.value_or(res.t_med));
    auto rate_above = [](const std::vector<double>& s, double t) {
        return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v > t; })) /
               static_cast<double>(s.size());
    };
    res.tpr = rate_above(test_pos, res.threshold);
    res.fpr = rate_above(test_neg, res.threshold);
    res.tpr_at_median = rate_above(test_pos, res.t_med);
    return res;
}

std::vector<ExpandedUrl> expand_urls(const QueryClickGraph& g, const std::vector<TrialResult>& trials,
                                     const std::vector<std::string>& unlabeled_urls, int min_passes) {
    std::vector<ExpandedUrl> out;
    for (const std::string& url : unlabeled_urls) {
        auto id = g.find(NodeKind::url, url);
        if (!id) continue;
        ExpandedUrl e;
        e.url = url;
        for (const TrialResult& t : trials) {
            const double s = t.scores.at(*id);
            const bool med = s > t.t_med;
            const bool prec = t.t_prec && s > *t.t_prec;
            e.median_passes += med;
            e.precision_passes += prec;
            e.both_passes += med && prec;
        }
        e.included = e.both_passes >= min_passes;
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<std::string> expansion_pool(const QueryClickGraph& g, const PprScores& scores, const LabelStore& labels,
                                        std::size_t k) {
    std::vector<uint32_t> order(g.node_count());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (scores.score[a] != scores.score[b]) return scores.score[a] > scores.score[b];
        return a < b;
    });
    std::vector<std::string> out;
    for (std::size_t r = 0; r < order.size() && r < k; ++r) {
        const GraphNode& node = g.node(order[r]);
        if (node.kind == NodeKind::url && !labels.get(node.text) && scores.score[order[r]] > 0.0) out.push_back(node.text);
    }
    return out;
}

void write_trials(std::ostream& out, const std::string& region, const std::vector<TrialResult>& trials, bool header) {
    if (header) {
        write_csv_row(out, {"region", "trial", "auc", "tpr", "fpr", "tpr_at_median", "t_med", "t_prec", "threshold",
                            "epochs"});
    }
    for (const TrialResult& t : trials) {
        write_csv_row(out, {region, std::to_string(t.trial), format_double(t.auc), format_double(t.tpr),
                            format_double(t.fpr), format_double(t.tpr_at_median), format_double(t.t_med),
                            t.t_prec ? format_double(*t.t_prec) : "unachievable", format_double(t.threshold),
                            std::to_string(t.epochs)});
    }
}

}  // namespace intentscope
