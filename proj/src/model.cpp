#include "csl/model.hpp"

#include <cmath>

namespace csl {

DataShard::DataShard(Matrix x, Vector y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.rows() < 1) throw DomainError("DataShard: at least one sample is required");
    if (y_.size() != x_.rows()) {
        throw DimensionError("DataShard: " + std::to_string(y_.size()) + " responses for " +
                             std::to_string(x_.rows()) + " rows");
    }
    if (!x_.allFinite() || !y_.allFinite()) throw DomainError("DataShard: non-finite entry");
    binary_ = true;
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
        if (y_[i] != 0.0 && y_[i] != 1.0) {
            binary_ = false;
            break;
        }
    }
}

DataShard DataShard::rows(Eigen::Index begin, Eigen::Index count) const {
    if (begin < 0 || count < 1 || begin + count > n()) throw DimensionError("DataShard::rows: range out of bounds");
    return DataShard(x_.middleRows(begin, count), y_.segment(begin, count));
}

LossModel LossModel::parse(std::string_view name) {
    if (name == "logistic") return logistic();
    if (name == "linear") return linear();
    if (name == "glm-logistic") return glm(Link::Logistic);
    if (name == "glm-poisson" || name == "poisson") return glm(Link::Poisson);
    throw DomainError("unknown loss model '" + std::string(name) + "'");
}

std::string LossModel::name() const {
    switch (family_) {
    case Family::Logistic: return "logistic";
    case Family::Linear: return "linear";
    case Family::Glm: return link_ == Link::Logistic ? "glm-logistic" : "glm-poisson";
    }
    return "?";
}

double log1pexp(double u) {
    if (u > 0) return u + std::log1p(std::exp(-u));
    return std::log1p(std::exp(u));
}

double sigmoid(double u) {
    if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

double link_phi(Link link, double u) { return link == Link::Logistic ? log1pexp(u) : std::exp(u); }

double link_phi1(Link link, double u) { return link == Link::Logistic ? sigmoid(u) : std::exp(u); }

double link_phi2(Link link, double u) {
    if (link == Link::Poisson) return std::exp(u);
    const double s = sigmoid(u);
    return s * (1.0 - s);
}

namespace {

void check_inputs(const LossModel& model, const Vector& theta, const DataShard& shard) {
    require_dim(theta, shard.d(), "loss: parameter");
    if (model.bernoulli() && !shard.binary_response()) {
        throw DomainError("loss: " + model.name() + " requires responses in {0,1}");
    }
}

// d(loss_i)/du_i for the linear predictor u_i = x_i' theta.
Vector residual_weights(const LossModel& model, const Vector& u, const Vector& y) {
    Vector r(u.size());
    if (model.family() == Family::Linear) {
        for (Eigen::Index i = 0; i < u.size(); ++i) r[i] = 2.0 * (u[i] - y[i]);
    } else {
        const Link link = model.link();
        for (Eigen::Index i = 0; i < u.size(); ++i) r[i] = link_phi1(link, u[i]) - y[i];
    }
    return r;
}

double mean_loss(const LossModel& model, const Vector& u, const Vector& y) {
    double sum = 0.0;
    if (model.family() == Family::Linear) {
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const double e = y[i] - u[i];
            sum += e * e;
        }
    } else {
        const Link link = model.link();
        for (Eigen::Index i = 0; i < u.size(); ++i) sum += -y[i] * u[i] + link_phi(link, u[i]);
    }
    const double value = sum / static_cast<double>(u.size());
    if (!std::isfinite(value)) throw DomainError("loss: non-finite value");
    return value;
}

}  // namespace

double loss_value(const LossModel& model, const Vector& theta, const DataShard& shard) {
    check_inputs(model, theta, shard);
    const Vector u = shard.x() * theta;
    return mean_loss(model, u, shard.y());
}

Vector loss_gradient(const LossModel& model, const Vector& theta, const DataShard& shard) {
    check_inputs(model, theta, shard);
    const Vector u = shard.x() * theta;
    Vector g = shard.x().transpose() * residual_weights(model, u, shard.y());
    g /= static_cast<double>(shard.n());
    if (!g.allFinite()) throw DomainError("loss: non-finite gradient");
    return g;
}

ValueGradient loss_value_gradient(const LossModel& model, const Vector& theta, const DataShard& shard) {
    check_inputs(model, theta, shard);
    const Vector u = shard.x() * theta;
    const double value = mean_loss(model, u, shard.y());
    Vector g = shard.x().transpose() * residual_weights(model, u, shard.y());
    g /= static_cast<double>(shard.n());
    if (!g.allFinite()) throw DomainError("loss: non-finite gradient");
    return {value, std::move(g)};
}

Matrix loss_hessian(const LossModel& model, const Vector& theta, const DataShard& shard) {
    check_inputs(model, theta, shard);
    const auto& x = shard.x();
    const double inv_n = 1.0 / static_cast<double>(shard.n());
    Matrix h(shard.d(), shard.d());
    if (model.family() == Family::Linear) {
        h.noalias() = x.transpose() * x;
        h *= 2.0 * inv_n;
    } else {
        const Vector u = x * theta;
        Vector w(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) w[i] = link_phi2(model.link(), u[i]);
        h.noalias() = x.transpose() * w.asDiagonal() * x;
        h *= inv_n;
    }
    // Exactly symmetric regardless of the product kernel's rounding.
    h = 0.5 * (h + h.transpose()).eval();
    if (!h.allFinite()) throw DomainError("loss: non-finite Hessian");
    return h;
}

Matrix per_sample_gradients(const LossModel& model, const Vector& theta, const DataShard& shard) {
    check_inputs(model, theta, shard);
    const Vector u = shard.x() * theta;
    const Vector r = residual_weights(model, u, shard.y());
    Matrix g = r.asDiagonal() * shard.x();
    if (!g.allFinite()) throw DomainError("loss: non-finite per-sample gradient");
    return g;
}

}  // namespace csl
