#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

// Minkowski geometry primitives, signature (+,-,-,-), units hbar = c = 1.
namespace rbm {

struct FourVector {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double& operator[](int mu) {
        switch (mu) {
            case 0: return t;
            case 1: return x;
            case 2: return y;
            default: return z;
        }
    }
    double operator[](int mu) const {
        switch (mu) {
            case 0: return t;
            case 1: return x;
            case 2: return y;
            default: return z;
        }
    }

    FourVector operator+(const FourVector& o) const { return {t + o.t, x + o.x, y + o.y, z + o.z}; }
    FourVector operator-(const FourVector& o) const { return {t - o.t, x - o.x, y - o.y, z - o.z}; }
    FourVector operator*(double a) const { return {a * t, a * x, a * y, a * z}; }
    FourVector& operator+=(const FourVector& o) {
        t += o.t; x += o.x; y += o.y; z += o.z;
        return *this;
    }
};

inline FourVector operator*(double a, const FourVector& v) { return v * a; }

// eta_{mu nu} u^mu v^nu = u0 v0 - u1 v1 - u2 v2 - u3 v3
inline double dot(const FourVector& u, const FourVector& v) {
    return u.t * v.t - u.x * v.x - u.y * v.y - u.z * v.z;
}

// Metric sign of component mu: +1 for time, -1 for space.
inline double metric_sign(int mu) { return mu == 0 ? 1.0 : -1.0; }

class InvalidBoostError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Active Lorentz boost with frame velocity beta, |beta| < 1 strictly.
// Convention: t' = gamma (t - beta . x_par), x_par' = gamma (x_par - beta t),
// transverse components unchanged.
class Boost {
public:
    explicit Boost(std::array<double, 3> beta) : beta_(beta) {
        const double b2 = beta[0] * beta[0] + beta[1] * beta[1] + beta[2] * beta[2];
        if (b2 >= 1.0) throw InvalidBoostError("boost velocity |beta| must be < 1");
        gamma_ = 1.0 / std::sqrt(1.0 - b2);
        b2_ = b2;
    }

    const std::array<double, 3>& beta() const { return beta_; }
    double gamma() const { return gamma_; }

    Boost inverse() const { return Boost({-beta_[0], -beta_[1], -beta_[2]}); }

    FourVector operator()(const FourVector& v) const {
        if (b2_ == 0.0) return v;
        const double bx = v.x * beta_[0] + v.y * beta_[1] + v.z * beta_[2];
        const double tp = gamma_ * (v.t - bx);
        // x' = x + [(gamma - 1) (b.x)/b^2 - gamma t] beta
        const double coef = (gamma_ - 1.0) * bx / b2_ - gamma_ * v.t;
        return {tp, v.x + coef * beta_[0], v.y + coef * beta_[1], v.z + coef * beta_[2]};
    }

private:
    std::array<double, 3> beta_;
    double gamma_;
    double b2_;
};

}  // namespace rbm
