#pragma once

#include <iosfwd>
#include <vector>

#include "coattn/tensor.hpp"

namespace coattn {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// ADAM with bias correction. A parameter whose grad buffer was never touched
// this step counts as zero gradient (moments decay, value unchanged). A NaN
// or Inf gradient aborts the step with a diagnostic naming the parameter.
class Adam {
public:
    Adam(std::vector<Tensor> params, const AdamConfig& config);

    void step();
    void zero_grad();
    std::size_t step_count() const { return t_; }

    void save_state(std::ostream& out) const;
    void load_state(std::istream& in);

private:
    std::vector<Tensor> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

} // namespace coattn
