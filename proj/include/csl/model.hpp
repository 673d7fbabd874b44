#pragma once

#include <string>
#include <string_view>

#include "csl/common.hpp"

namespace csl {

/// One machine's data: covariates (rows are samples) and responses.
///
/// Construction validates the invariants (n >= 1, matching lengths, finite
/// entries) so every loss routine can assume them.
class DataShard {
public:
    DataShard(Matrix x, Vector y);

    const Matrix& x() const { return x_; }
    const Vector& y() const { return y_; }
    Eigen::Index n() const { return x_.rows(); }
    Eigen::Index d() const { return x_.cols(); }
    /// True when every response is exactly 0 or 1.
    bool binary_response() const { return binary_; }

    /// Rows [begin, begin + count) as a new shard.
    DataShard rows(Eigen::Index begin, Eigen::Index count) const;

private:
    Matrix x_;
    Vector y_;
    bool binary_;
};

enum class Family { Logistic, Linear, Glm };

/// Canonical GLM links. phi is the log-partition function:
/// logistic phi(u) = log(1 + e^u), Poisson phi(u) = e^u.
enum class Link { Logistic, Poisson };

class LossModel {
public:
    static LossModel logistic() { return LossModel(Family::Logistic, Link::Logistic); }
    static LossModel linear() { return LossModel(Family::Linear, Link::Logistic); }
    static LossModel glm(Link link) { return LossModel(Family::Glm, link); }
    /// Accepts "logistic", "linear", "glm-logistic", "glm-poisson" (also "poisson").
    static LossModel parse(std::string_view name);

    Family family() const { return family_; }
    Link link() const { return link_; }
    /// Logistic and Glm(Logistic) require responses in {0,1}.
    bool bernoulli() const { return family_ != Family::Linear && link_ == Link::Logistic; }
    std::string name() const;

    bool operator==(const LossModel& other) const {
        return family_ == other.family_ && (family_ == Family::Linear || link_ == other.link_);
    }

private:
    LossModel(Family f, Link l) : family_(f), link_(l) {}
    Family family_;
    Link link_;
};

/// log(1 + e^u) without overflow.
double log1pexp(double u);
/// Logistic function 1 / (1 + e^-u) without overflow.
double sigmoid(double u);

// Link function and its first two derivatives.
double link_phi(Link link, double u);
double link_phi1(Link link, double u);
double link_phi2(Link link, double u);

// Losses are means over the shard's samples. Linear uses the un-halved
// squared error, so its gradient and Hessian carry a factor of 2.
//
// All four routines throw DimensionError when theta's length differs from the
// shard's column count, DomainError for non-binary y under a Bernoulli family
// or a non-finite result.

double loss_value(const LossModel& model, const Vector& theta, const DataShard& shard);
Vector loss_gradient(const LossModel& model, const Vector& theta, const DataShard& shard);
Matrix loss_hessian(const LossModel& model, const Vector& theta, const DataShard& shard);
/// Row i holds the gradient of sample i's loss.
Matrix per_sample_gradients(const LossModel& model, const Vector& theta, const DataShard& shard);

/// Value and gradient from a single pass over the linear predictor.
struct ValueGradient {
    double value;
    Vector gradient;
};
ValueGradient loss_value_gradient(const LossModel& model, const Vector& theta, const DataShard& shard);

}  // namespace csl
