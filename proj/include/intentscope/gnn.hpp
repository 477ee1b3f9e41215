#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include "intentscope/annotations.hpp"
#include "intentscope/ppr.hpp"
#include "intentscope/qc_graph.hpp"

namespace intentscope {

enum class Optimizer { sgd, adam };
enum class Activation { tanh, relu };

struct ModelConfig {
    /// Printable ASCII plus an out-of-vocabulary row and a padding row.
    int embed_dim = 16;
    std::vector<int> windows{3, 5};
    int filters = 32;
    std::vector<int> gcn_widths{64, 64, 32};
    Activation activation = Activation::tanh;
    /// Texts are truncated to this many characters.
    int max_text_len = 64;
    double init_scale = 1.0;

    Optimizer optimizer = Optimizer::sgd;
    double learning_rate = 0.1;
    int max_epochs = 200;
    int patience = 15;

    bool pretrain = true;
    double pretrain_stop = 0.8;
    int pretrain_max_epochs = 100;
    std::size_t pretrain_min_k = 1000;
    /// Graphs with fewer nodes than this are pretrained on S-PPR ranks.
    std::size_t pretrain_node_threshold = 5000;
    uint64_t seed = 1;
};

void validate(const ModelConfig& cfg);

constexpr int kVocabSize = 97;  // 95 printable + OOV + PAD
int char_code(char c);
/// Node text as the model sees it. URLs lose their scheme and "www.".
std::string model_text(const GraphNode& node);

/// Everything the forward pass needs about a graph.
struct GraphInput {
    std::vector<std::vector<uint8_t>> codes;
    Eigen::SparseMatrix<double> adj;  // D^-1/2 (A + I) D^-1/2, symmetric
    std::vector<bool> is_url;
    std::size_t size() const { return codes.size(); }
};

/// Edges are treated as undirected and unweighted.
GraphInput prepare_input(const std::vector<std::string>& texts, const std::vector<std::pair<uint32_t, uint32_t>>& edges,
                         const std::vector<bool>& is_url, const ModelConfig& cfg);
GraphInput prepare_input(const QueryClickGraph& g, const ModelConfig& cfg);

/// Offsets of each tensor inside the flat parameter vector.
struct ParamLayout {
    std::size_t embedding = 0;
    std::vector<std::vector<std::size_t>> conv_w;  // [window][offset] -> embed_dim x filters
    std::vector<std::size_t> conv_b;
    std::vector<std::size_t> gcn_w;
    std::vector<std::size_t> gcn_b;
    std::vector<std::pair<int, int>> gcn_shape;
    std::size_t out_w = 0;
    std::size_t out_b = 0;
    std::size_t total = 0;
};

ParamLayout make_layout(const ModelConfig& cfg);

enum class LossKind { bce, squared };

struct Targets {
    std::vector<uint32_t> nodes;
    std::vector<double> values;
};

class GnnModel {
public:
    explicit GnnModel(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    const ParamLayout& layout() const { return layout_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    /// Glorot-style random init from the given seed; biases zero.
    void init(uint64_t seed);

    /// Sigmoid score for every node.
    std::vector<double> forward(const GraphInput& input) const;

    /// Mean loss over targets, times `scale`; gradient written to `grad` if non-null.
    double loss(const GraphInput& input, const Targets& targets, LossKind kind, std::vector<double>* grad,
                double scale = 1.0) const;

private:
    ModelConfig cfg_;
    ParamLayout layout_;
    std::vector<double> params_;
};

/// Versioned flat parameter file with a shape manifest.
void write_params(std::ostream& out, const GnnModel& model);
GnnModel read_params(std::istream& in);
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Max relative error between analytic and central-difference gradients.
/// Relative error is |a-n| / max(|a|, |n|, 1e-6). When `max_params` is
/// nonzero a seeded random subset of parameters is checked.
double gradient_check(const GnnModel& model, const GraphInput& input, const Targets& targets, LossKind kind,
                      double step = 1e-5, std::size_t max_params = 0, uint64_t seed = 1);

struct TrainState {
    std::vector<double> m, v;
    long step = 0;
};
void optimizer_step(const ModelConfig& cfg, std::vector<double>& params, const std::vector<double>& grad,
                    TrainState& state);

struct PretrainTarget {
    std::size_t k = 1000;
    /// Worst S-PPR rank of any seed query (1-based, over all nodes).
    std::size_t q_max = 0;
    Targets targets;  // URL nodes, y = 1 - rank / K clipped to [0,1]
};
PretrainTarget make_pretrain_target(const QueryClickGraph& g, const PprScores& scores, std::size_t min_k = 1000);

struct PretrainResult {
    bool converged = false;
    bool warned = false;
    int epochs = 0;
    double correlation = 0.0;
};

/// Squared-error regression on rank targets until validation Spearman reaches
/// cfg.pretrain_stop. Keeps the best parameters seen.
PretrainResult pretrain(GnnModel& model, const GraphInput& input, const PretrainTarget& target,
                        const std::vector<uint32_t>& validation_nodes);

struct TrialResult {
    int trial = 0;
    std::vector<uint32_t> train, validation, test;
    double auc = 0.5;
    double tpr = 0.0;
    double fpr = 0.0;
    /// True positive rate when thresholding at t_med alone.
    double tpr_at_median = 0.0;
    double t_med = 0.0;
    std::optional<double> t_prec;
    double threshold = 0.0;
    double best_val_loss = 0.0;
    int epochs = 0;
    std::vector<double> scores;  // every node
    std::vector<double> params;  // best parameters of the trial
};

/// Labeled URL nodes of g (labels of provenance consensus/rule only).
Targets labeled_urls(const QueryClickGraph& g, const LabelStore& labels);

/// Splits labels 60/15/25 per class, trains with early stopping on validation
/// loss, then scores the test split. `init` seeds the starting parameters
/// (e.g. from pretraining); otherwise a fresh init from the trial seed.
TrialResult train_trial(const ModelConfig& cfg, const GraphInput& input, const Targets& labels, int trial,
                        uint64_t split_seed, const std::vector<double>* init = nullptr);

/// Smallest threshold t such that precision of {score > t'} is >= min_precision
/// for every candidate t' >= t with a nonempty prediction set. Unset if none.
std::optional<double> precision_threshold(const std::vector<double>& scores, const std::vector<bool>& positive,
                                          double min_precision = 0.9);

struct ExpandedUrl {
    std::string url;
    int median_passes = 0;
    int precision_passes = 0;
    int both_passes = 0;
    bool included = false;
};

/// A URL is included if it clears both thresholds in >= min_passes trials.
/// Trials without an achievable t_prec count as failures for every URL.
std::vector<ExpandedUrl> expand_urls(const QueryClickGraph& g, const std::vector<TrialResult>& trials,
                                     const std::vector<std::string>& unlabeled_urls, int min_passes = 6);

/// Unlabeled URL nodes within the top K of the S-PPR ranking.
std::vector<std::string> expansion_pool(const QueryClickGraph& g, const PprScores& scores, const LabelStore& labels,
                                        std::size_t k);

/// CSV trial,auc,tpr,fpr,tpr_at_median,t_med,t_prec,threshold,epochs.
void write_trials(std::ostream& out, const std::string& region, const std::vector<TrialResult>& trials, bool header);

}  // namespace intentscope
