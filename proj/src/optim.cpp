#include "coattn/optim.hpp"

#include <cmath>

#include "coattn/error.hpp"
#include "coattn/serialize.hpp"

namespace coattn {

Adam::Adam(std::vector<Tensor> params, const AdamConfig& config)
    : params_(std::move(params)), config_(config) {
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        const bool has_grad = p.has_grad();
        for (std::size_t k = 0; k < p.size(); ++k) {
            double g = has_grad ? p.grad()[k] : 0.0;
            if (!std::isfinite(g))
                throw DataError("adam_step: non-finite gradient in parameter '" + p.name() +
                                "' at element " + std::to_string(k));
            m_[i][k] = config_.beta1 * m_[i][k] + (1.0 - config_.beta1) * g;
            v_[i][k] = config_.beta2 * v_[i][k] + (1.0 - config_.beta2) * g * g;
            double mhat = m_[i][k] / bc1;
            double vhat = v_[i][k] / bc2;
            p.values()[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void Adam::save_state(std::ostream& out) const {
    write_u64(out, t_);
    write_u64(out, params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        write_u64(out, m_[i].size());
        for (double x : m_[i]) write_f64_le(out, x);
        for (double x : v_[i]) write_f64_le(out, x);
    }
}

void Adam::load_state(std::istream& in) {
    t_ = read_u64(in);
    std::uint64_t count = read_u64(in);
    if (count != params_.size())
        throw IoError("Adam::load_state: state holds " + std::to_string(count) +
                      " parameters, optimizer has " + std::to_string(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        std::uint64_t n = read_u64(in);
        if (n != params_[i].size())
            throw IoError("Adam::load_state: size mismatch for parameter '" +
                          params_[i].name() + "'");
        for (double& x : m_[i]) x = read_f64_le(in);
        for (double& x : v_[i]) x = read_f64_le(in);
    }
}

} // namespace coattn
