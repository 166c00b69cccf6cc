#include "dqm/classify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dqm/rng.hpp"

namespace dqm::classify {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

void require_both_classes(const std::vector<EncodedRecord>& train, const char* op) {
    bool has0 = false, has1 = false;
    for (const auto& r : train) (r.y == 1 ? has1 : has0) = true;
    if (!has0 || !has1)
        throw std::runtime_error(std::string(op) + ": training set must contain both classes");
}

// Cholesky solve of the SPD system A x = rhs (A row-major d x d, overwritten).
std::vector<double> cholesky_solve(std::vector<double>& a, std::vector<double> rhs,
                                   std::size_t d) {
    for (std::size_t j = 0; j < d; ++j) {
        double diag = a[j * d + j];
        for (std::size_t k = 0; k < j; ++k) diag -= a[j * d + k] * a[j * d + k];
        if (!(diag > 0.0) || !std::isfinite(diag))
            throw std::runtime_error("fit_lda: covariance not positive definite");
        diag = std::sqrt(diag);
        a[j * d + j] = diag;
        for (std::size_t i = j + 1; i < d; ++i) {
            double v = a[i * d + j];
            for (std::size_t k = 0; k < j; ++k) v -= a[i * d + k] * a[j * d + k];
            a[i * d + j] = v / diag;
        }
    }
    // forward then back substitution
    for (std::size_t i = 0; i < d; ++i) {
        double v = rhs[i];
        for (std::size_t k = 0; k < i; ++k) v -= a[i * d + k] * rhs[k];
        rhs[i] = v / a[i * d + i];
    }
    for (std::size_t ii = d; ii-- > 0;) {
        double v = rhs[ii];
        for (std::size_t k = ii + 1; k < d; ++k) v -= a[k * d + ii] * rhs[k];
        rhs[ii] = v / a[ii * d + ii];
    }
    return rhs;
}

}  // namespace

double accuracy(const ConfusionMatrix& c) {
    if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0)
        throw std::runtime_error("accuracy: negative count");
    long n = c.total();
    if (n == 0) throw std::runtime_error("accuracy: empty confusion matrix");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
}

std::string kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::LDA: return "lda";
        case ModelKind::LR: return "lr";
        case ModelKind::SVM: return "svm";
        case ModelKind::MLP: return "mlp";
    }
    throw std::logic_error("bad model kind");
}

ModelKind kind_from_name(const std::string& name) {
    if (name == "lda") return ModelKind::LDA;
    if (name == "lr") return ModelKind::LR;
    if (name == "svm") return ModelKind::SVM;
    if (name == "mlp") return ModelKind::MLP;
    throw std::runtime_error("unknown model kind: " + name);
}

TrainedModel fit_lda(const std::vector<EncodedRecord>& train) {
    require_both_classes(train, "fit_lda");
    auto t0 = Clock::now();
    const std::size_t d = train[0].x.size();
    const std::size_t n = train.size();

    std::vector<double> mean0(d, 0.0), mean1(d, 0.0);
    std::size_t n0 = 0, n1 = 0;
    for (const auto& r : train) {
        auto& m = (r.y == 1) ? mean1 : mean0;
        for (std::size_t i = 0; i < d; ++i) m[i] += r.x[i];
        (r.y == 1 ? n1 : n0)++;
    }
    for (std::size_t i = 0; i < d; ++i) {
        mean0[i] /= static_cast<double>(n0);
        mean1[i] /= static_cast<double>(n1);
    }

    // pooled within-class scatter
    std::vector<double> sw(d * d, 0.0);
    std::vector<double> centered(d);
    for (const auto& r : train) {
        const auto& m = (r.y == 1) ? mean1 : mean0;
        for (std::size_t i = 0; i < d; ++i) centered[i] = r.x[i] - m[i];
        for (std::size_t i = 0; i < d; ++i) {
            double ci = centered[i];
            if (ci == 0.0) continue;
            double* row = sw.data() + i * d;
            for (std::size_t j = i; j < d; ++j) row[j] += ci * centered[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) sw[i * d + j] = sw[j * d + i];

    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += sw[i * d + i];
    if (!std::isfinite(trace)) throw std::runtime_error("fit_lda: non-finite covariance");
    double eps = 1e-6 * trace / static_cast<double>(d);
    if (eps <= 0.0) eps = 1e-12;
    for (std::size_t i = 0; i < d; ++i) sw[i * d + i] += eps;

    std::vector<double> delta(d);
    double delta_norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        delta[i] = mean1[i] - mean0[i];
        delta_norm += delta[i] * delta[i];
    }
    if (delta_norm == 0.0)
        throw std::runtime_error("fit_lda: identical class means, no discriminant direction");

    std::vector<double> w = cholesky_solve(sw, delta, d);

    double m0 = dot(w, mean0);
    double m1 = dot(w, mean1);
    if (m1 < m0) {  // orient so attacks project high
        for (auto& v : w) v = -v;
        m0 = -m0;
        m1 = -m1;
    }

    // projected pooled variance; sw was overwritten by the factorization, so
    // recompute w' S_w w from the data
    double s2 = 0.0;
    for (const auto& r : train) {
        const auto& m = (r.y == 1) ? mean1 : mean0;
        double p = 0.0;
        for (std::size_t i = 0; i < d; ++i) p += w[i] * (r.x[i] - m[i]);
        s2 += p * p;
    }
    s2 /= static_cast<double>(n - 2);

    double pi0 = static_cast<double>(n0) / static_cast<double>(n);
    double pi1 = static_cast<double>(n1) / static_cast<double>(n);
    double threshold = 0.5 * (m0 + m1);
    if (m1 > m0) threshold += std::log(pi0 / pi1) * s2 / (m1 - m0);

    TrainedModel model;
    model.kind = ModelKind::LDA;
    model.feature_dim = d;
    model.lda.w = std::move(w);
    model.lda.threshold = threshold;
    model.lda.mean_proj_0 = m0;
    model.lda.mean_proj_1 = m1;
    for (double v : model.lda.w)
        if (!std::isfinite(v)) throw std::runtime_error("fit_lda: non-finite weights");
    model.train_time_s = seconds_since(t0);
    return model;
}

double logreg_loss_grad(const std::vector<double>& w, double bias,
                        const std::vector<EncodedRecord>& batch, double l2_lambda,
                        std::vector<double>& grad_w, double& grad_b) {
    const std::size_t d = w.size();
    const double n = static_cast<double>(batch.size());
    grad_w.assign(d, 0.0);
    grad_b = 0.0;
    double loss = 0.0;
    for (const auto& r : batch) {
        double z = dot(w, r.x) + bias;
        double p = sigmoid(z);
        double y = static_cast<double>(r.y);
        // clamped log for numeric safety at saturation
        loss += -(y * std::log(std::max(p, 1e-15)) +
                  (1.0 - y) * std::log(std::max(1.0 - p, 1e-15)));
        double g = (p - y) / n;
        for (std::size_t i = 0; i < d; ++i) grad_w[i] += g * r.x[i];
        grad_b += g;
    }
    loss /= n;
    for (std::size_t i = 0; i < d; ++i) {
        loss += 0.5 * l2_lambda * w[i] * w[i];
        grad_w[i] += l2_lambda * w[i];
    }
    return loss;
}

TrainedModel fit_logreg(const std::vector<EncodedRecord>& train, const OptimizerConfig& cfg) {
    require_both_classes(train, "fit_logreg");
    auto t0 = Clock::now();
    const std::size_t d = train[0].x.size();

    std::vector<double> w(d, 0.0), grad_w;
    double bias = 0.0, grad_b = 0.0;
    double prev_loss = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int it = 0; it < cfg.max_iters; ++it) {
        double loss = logreg_loss_grad(w, bias, train, cfg.l2_lambda, grad_w, grad_b);
        if (!std::isfinite(loss))
            throw std::runtime_error("fit_logreg: non-finite loss at iteration " +
                                     std::to_string(it));
        for (std::size_t i = 0; i < d; ++i) w[i] -= cfg.learning_rate * grad_w[i];
        bias -= cfg.learning_rate * grad_b;
        if (std::abs(prev_loss - loss) < cfg.tolerance) {
            converged = true;
            break;
        }
        prev_loss = loss;
    }

    TrainedModel model;
    model.kind = ModelKind::LR;
    model.feature_dim = d;
    model.linear.w = std::move(w);
    model.linear.bias = bias;
    model.converged = converged;
    model.train_time_s = seconds_since(t0);
    return model;
}

TrainedModel fit_svm(const std::vector<EncodedRecord>& train, const OptimizerConfig& cfg) {
    require_both_classes(train, "fit_svm");
    auto t0 = Clock::now();
    const std::size_t d = train[0].x.size();
    const double n = static_cast<double>(train.size());

    std::vector<double> w(d, 0.0), grad(d);
    double bias = 0.0;
    double prev_loss = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int it = 0; it < cfg.max_iters; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0, loss = 0.0;
        for (const auto& r : train) {
            double s = r.y == 1 ? 1.0 : -1.0;
            double margin = s * (dot(w, r.x) + bias);
            if (margin < 1.0) {
                loss += 1.0 - margin;
                for (std::size_t i = 0; i < d; ++i) grad[i] -= s * r.x[i] / n;
                grad_b -= s / n;
            }
        }
        loss /= n;
        for (std::size_t i = 0; i < d; ++i) {
            loss += 0.5 * cfg.l2_lambda * w[i] * w[i];
            grad[i] += cfg.l2_lambda * w[i];
        }
        if (!std::isfinite(loss))
            throw std::runtime_error("fit_svm: non-finite loss at iteration " +
                                     std::to_string(it));
        for (std::size_t i = 0; i < d; ++i) w[i] -= cfg.learning_rate * grad[i];
        bias -= cfg.learning_rate * grad_b;
        if (std::abs(prev_loss - loss) < cfg.tolerance) {
            converged = true;
            break;
        }
        prev_loss = loss;
    }

    TrainedModel model;
    model.kind = ModelKind::SVM;
    model.feature_dim = d;
    model.linear.w = std::move(w);
    model.linear.bias = bias;
    model.converged = converged;
    model.train_time_s = seconds_since(t0);
    return model;
}

double mlp_loss_grad(const MlpParams& p, std::size_t input_dim,
                     const std::vector<EncodedRecord>& batch, MlpParams& grad) {
    const std::size_t h = p.hidden;
    grad.hidden = h;
    grad.w1.assign(h * input_dim, 0.0);
    grad.b1.assign(h, 0.0);
    grad.w2.assign(h, 0.0);
    grad.b2 = 0.0;

    const double n = static_cast<double>(batch.size());
    std::vector<double> hidden(h);
    double loss = 0.0;
    for (const auto& r : batch) {
        for (std::size_t j = 0; j < h; ++j) {
            double z = p.b1[j];
            const double* row = p.w1.data() + j * input_dim;
            for (std::size_t i = 0; i < input_dim; ++i) z += row[i] * r.x[i];
            hidden[j] = sigmoid(z);
        }
        double zo = p.b2;
        for (std::size_t j = 0; j < h; ++j) zo += p.w2[j] * hidden[j];
        double o = sigmoid(zo);
        double y = static_cast<double>(r.y);
        loss += -(y * std::log(std::max(o, 1e-15)) +
                  (1.0 - y) * std::log(std::max(1.0 - o, 1e-15)));

        double delta_o = (o - y) / n;  // dL/dzo for mean cross-entropy
        grad.b2 += delta_o;
        for (std::size_t j = 0; j < h; ++j) {
            grad.w2[j] += delta_o * hidden[j];
            double delta_h = delta_o * p.w2[j] * hidden[j] * (1.0 - hidden[j]);
            grad.b1[j] += delta_h;
            double* grow = grad.w1.data() + j * input_dim;
            for (std::size_t i = 0; i < input_dim; ++i) grow[i] += delta_h * r.x[i];
        }
    }
    return loss / n;
}

TrainedModel fit_mlp(const std::vector<EncodedRecord>& train, const MlpConfig& cfg) {
    require_both_classes(train, "fit_mlp");
    if (cfg.hidden_units == 0)
        throw std::runtime_error("fit_mlp: at least one hidden unit required");
    auto t0 = Clock::now();
    const std::size_t d = train[0].x.size();
    const std::size_t h = cfg.hidden_units;

    MlpParams p;
    p.hidden = h;
    Rng rng(derive_seed(cfg.seed, "mlp-init"));
    p.w1.resize(h * d);
    p.b1.assign(h, 0.0);
    p.w2.resize(h);
    for (auto& v : p.w1) v = rng.uniform(-0.5, 0.5);
    for (auto& v : p.w2) v = rng.uniform(-0.5, 0.5);
    p.b2 = rng.uniform(-0.5, 0.5);

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> hidden(h);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "mlp-epoch" + std::to_string(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            const auto& r = train[idx];
            for (std::size_t j = 0; j < h; ++j) {
                double z = p.b1[j];
                const double* row = p.w1.data() + j * d;
                for (std::size_t i = 0; i < d; ++i) z += row[i] * r.x[i];
                hidden[j] = sigmoid(z);
            }
            double zo = p.b2;
            for (std::size_t j = 0; j < h; ++j) zo += p.w2[j] * hidden[j];
            double o = sigmoid(zo);
            double y = static_cast<double>(r.y);
            epoch_loss += -(y * std::log(std::max(o, 1e-15)) +
                            (1.0 - y) * std::log(std::max(1.0 - o, 1e-15)));

            double delta_o = o - y;
            for (std::size_t j = 0; j < h; ++j) {
                double delta_h = delta_o * p.w2[j] * hidden[j] * (1.0 - hidden[j]);
                p.w2[j] -= cfg.learning_rate * delta_o * hidden[j];
                double* row = p.w1.data() + j * d;
                for (std::size_t i = 0; i < d; ++i)
                    row[i] -= cfg.learning_rate * delta_h * r.x[i];
                p.b1[j] -= cfg.learning_rate * delta_h;
            }
            p.b2 -= cfg.learning_rate * delta_o;
        }
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("fit_mlp: non-finite loss at epoch " +
                                     std::to_string(epoch));
    }

    TrainedModel model;
    model.kind = ModelKind::MLP;
    model.feature_dim = d;
    model.mlp = std::move(p);
    model.train_time_s = seconds_since(t0);
    return model;
}

namespace {

double decision_score(const TrainedModel& m, const std::vector<double>& x) {
    switch (m.kind) {
        case ModelKind::LDA:
            return dot(m.lda.w, x) - m.lda.threshold;
        case ModelKind::LR:
        case ModelKind::SVM:
            return dot(m.linear.w, x) + m.linear.bias;
        case ModelKind::MLP: {
            const std::size_t d = m.feature_dim, h = m.mlp.hidden;
            double zo = m.mlp.b2;
            for (std::size_t j = 0; j < h; ++j) {
                double z = m.mlp.b1[j];
                const double* row = m.mlp.w1.data() + j * d;
                for (std::size_t i = 0; i < d; ++i) z += row[i] * x[i];
                zo += m.mlp.w2[j] * sigmoid(z);
            }
            return zo;  // output-unit pre-activation; sign matches o vs 0.5
        }
    }
    throw std::logic_error("bad model kind");
}

}  // namespace

int predict(const TrainedModel& model, const std::vector<double>& x) {
    if (x.size() != model.feature_dim)
        throw std::runtime_error("predict: expected " + std::to_string(model.feature_dim) +
                                 " features, got " + std::to_string(x.size()));
    for (double v : x)
        if (!std::isfinite(v)) throw std::runtime_error("predict: non-finite feature");
    return decision_score(model, x) >= 0.0 ? 1 : 0;
}

double project_lda(const TrainedModel& model, const std::vector<double>& x) {
    if (model.kind != ModelKind::LDA)
        throw std::runtime_error("project_lda: model is not LDA");
    if (x.size() != model.feature_dim)
        throw std::runtime_error("project_lda: dimension mismatch");
    return dot(model.lda.w, x);
}

ConfusionMatrix evaluate(const TrainedModel& model, const std::vector<EncodedRecord>& data) {
    if (data.empty()) throw std::runtime_error("evaluate: empty data");
    ConfusionMatrix c;
    for (const auto& r : data) {
        int pred = predict(model, r.x);
        if (r.y == 1)
            (pred == 1 ? c.tp : c.fn)++;
        else
            (pred == 1 ? c.fp : c.tn)++;
    }
    return c;
}

TrainingReport train_with_report(ModelKind kind, const std::vector<EncodedRecord>& train,
                                 const OptimizerConfig& opt, const MlpConfig& mlp) {
    TrainingReport rep;
    switch (kind) {
        case ModelKind::LDA: rep.model = fit_lda(train); break;
        case ModelKind::LR: rep.model = fit_logreg(train, opt); break;
        case ModelKind::SVM: rep.model = fit_svm(train, opt); break;
        case ModelKind::MLP: rep.model = fit_mlp(train, mlp); break;
    }
    rep.confusion = evaluate(rep.model, train);
    rep.train_accuracy = accuracy(rep.confusion);
    rep.train_time_s = rep.model.train_time_s;
    return rep;
}

void save_model(const TrainedModel& m, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["kind"] = kind_name(m.kind);
    j["feature_dim"] = m.feature_dim;
    j["train_time_s"] = m.train_time_s;
    j["converged"] = m.converged;
    switch (m.kind) {
        case ModelKind::LDA:
            j["w"] = m.lda.w;
            j["threshold"] = m.lda.threshold;
            j["mean_proj_0"] = m.lda.mean_proj_0;
            j["mean_proj_1"] = m.lda.mean_proj_1;
            break;
        case ModelKind::LR:
        case ModelKind::SVM:
            j["w"] = m.linear.w;
            j["bias"] = m.linear.bias;
            break;
        case ModelKind::MLP:
            j["hidden"] = m.mlp.hidden;
            j["w1"] = m.mlp.w1;
            j["b1"] = m.mlp.b1;
            j["w2"] = m.mlp.w2;
            j["b2"] = m.mlp.b2;
            break;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << j.dump(2) << '\n';
}

TrainedModel load_model(const std::string& path, std::size_t expected_dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("version", 0) != 1)
        throw std::runtime_error("unsupported model file version in " + path);

    TrainedModel m;
    m.kind = kind_from_name(j.at("kind").get<std::string>());
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.train_time_s = j.value("train_time_s", 0.0);
    m.converged = j.value("converged", true);
    if (expected_dim > 0 && m.feature_dim != expected_dim)
        throw std::runtime_error("model feature_dim " + std::to_string(m.feature_dim) +
                                 " does not match expected " + std::to_string(expected_dim));
    switch (m.kind) {
        case ModelKind::LDA:
            m.lda.w = j.at("w").get<std::vector<double>>();
            m.lda.threshold = j.at("threshold").get<double>();
            m.lda.mean_proj_0 = j.value("mean_proj_0", 0.0);
            m.lda.mean_proj_1 = j.value("mean_proj_1", 0.0);
            if (m.lda.w.size() != m.feature_dim)
                throw std::runtime_error("model parameter size mismatch in " + path);
            break;
        case ModelKind::LR:
        case ModelKind::SVM:
            m.linear.w = j.at("w").get<std::vector<double>>();
            m.linear.bias = j.at("bias").get<double>();
            if (m.linear.w.size() != m.feature_dim)
                throw std::runtime_error("model parameter size mismatch in " + path);
            break;
        case ModelKind::MLP:
            m.mlp.hidden = j.at("hidden").get<std::size_t>();
            m.mlp.w1 = j.at("w1").get<std::vector<double>>();
            m.mlp.b1 = j.at("b1").get<std::vector<double>>();
            m.mlp.w2 = j.at("w2").get<std::vector<double>>();
            m.mlp.b2 = j.at("b2").get<double>();
            if (m.mlp.w1.size() != m.mlp.hidden * m.feature_dim ||
                m.mlp.b1.size() != m.mlp.hidden || m.mlp.w2.size() != m.mlp.hidden)
                throw std::runtime_error("model parameter size mismatch in " + path);
            break;
    }
    return m;
}

}  // namespace dqm::classify
