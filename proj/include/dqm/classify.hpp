#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dqm/dataset.hpp"

namespace dqm::classify {

using dataset::EncodedRecord;

struct ConfusionMatrix {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
};

// (tp+tn) / (tp+tn+fp+fn); throws on an all-zero matrix
double accuracy(const ConfusionMatrix& c);

enum class ModelKind { LDA, LR, SVM, MLP };

std::string kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name);

struct LdaParams {
    std::vector<double> w;   // Fisher discriminant direction, oriented so attacks project high
    double threshold = 0.0;  // decision boundary on the projected axis
    double mean_proj_0 = 0.0;
    double mean_proj_1 = 0.0;
};

struct LinearParams {       // shared by LR and linear SVM
    std::vector<double> w;
    double bias = 0.0;
};

struct MlpParams {
    std::size_t hidden = 0;
    std::vector<double> w1;  // hidden x input, row-major
    std::vector<double> b1;
    std::vector<double> w2;  // 1 x hidden
    double b2 = 0.0;
};

struct TrainedModel {
    ModelKind kind = ModelKind::LDA;
    std::size_t feature_dim = 0;
    double train_time_s = 0.0;
    bool converged = true;

    LdaParams lda;
    LinearParams linear;
    MlpParams mlp;
};

struct TrainingReport {
    TrainedModel model;
    ConfusionMatrix confusion;
    double train_accuracy = 0.0;
    double train_time_s = 0.0;
};

struct OptimizerConfig {
    double learning_rate = 0.5;
    double l2_lambda = 1e-4;
    int max_iters = 500;
    double tolerance = 1e-6;  // on loss delta
};

struct MlpConfig {
    std::size_t hidden_units = 32;
    int epochs = 50;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
};

TrainedModel fit_lda(const std::vector<EncodedRecord>& train);
TrainedModel fit_logreg(const std::vector<EncodedRecord>& train, const OptimizerConfig& cfg = {});
TrainedModel fit_svm(const std::vector<EncodedRecord>& train, const OptimizerConfig& cfg = {});
TrainedModel fit_mlp(const std::vector<EncodedRecord>& train, const MlpConfig& cfg = {});

// Ties at the boundary classify as attack.
int predict(const TrainedModel& model, const std::vector<double>& x);

// 1-D reduced representation (LDA only): w . x
double project_lda(const TrainedModel& model, const std::vector<double>& x);

ConfusionMatrix evaluate(const TrainedModel& model, const std::vector<EncodedRecord>& data);

TrainingReport train_with_report(ModelKind kind, const std::vector<EncodedRecord>& train,
                                 const OptimizerConfig& opt, const MlpConfig& mlp);

// JSON persistence; load rejects a stored feature_dim that disagrees with
// expected_dim when expected_dim > 0.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path, std::size_t expected_dim = 0);

// loss/gradient surfaces, exposed for finite-difference checks
double logreg_loss_grad(const std::vector<double>& w, double bias,
                        const std::vector<EncodedRecord>& batch, double l2_lambda,
                        std::vector<double>& grad_w, double& grad_b);
double mlp_loss_grad(const MlpParams& p, std::size_t input_dim,
                     const std::vector<EncodedRecord>& batch, MlpParams& grad);

}  // namespace dqm::classify
