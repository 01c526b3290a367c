#include "coattn/rnn.hpp"

#include <cmath>

#include "coattn/error.hpp"

namespace coattn {

namespace {

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng,
                    std::string name) {
    Tensor t = Tensor::zeros(rows, cols);
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    t.set_requires_grad(true);
    t.set_name(std::move(name));
    return t;
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

LstmParams LstmParams::init(std::size_t input, std::size_t hidden, Rng& rng,
                            const std::string& name) {
    LstmParams p;
    p.wx = uniform_init(4 * hidden, input, input, rng, name + ".wx");
    p.wh = uniform_init(4 * hidden, hidden, hidden, rng, name + ".wh");
    p.b = Tensor::zeros(4 * hidden, 1);
    for (std::size_t i = hidden; i < 2 * hidden; ++i) p.b.at(i, 0) = 1.0; // forget gate
    p.b.set_requires_grad(true);
    p.b.set_name(name + ".b");
    return p;
}

BiLstmParams BiLstmParams::init(std::size_t input, std::size_t hidden, Rng& rng,
                                const std::string& name) {
    BiLstmParams p;
    p.fwd = LstmParams::init(input, hidden, rng, name + ".fwd");
    p.bwd = LstmParams::init(input, hidden, rng, name + ".bwd");
    return p;
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& p) {
    const std::size_t h = p.hidden();
    const std::size_t d = p.input();
    if (x.rows() != d || x.cols() != 1)
        throw ShapeError("lstm_cell: input must be " + std::to_string(d) + "x1, got " +
                         x.shape_str());
    if (h_prev.rows() != h || c_prev.rows() != h)
        throw ShapeError("lstm_cell: state must be " + std::to_string(h) + "x1, got " +
                         h_prev.shape_str() + " / " + c_prev.shape_str());

    // Pre-activations z = Wx x + Wh h_prev + b, blocks [i; f; g; o].
    std::vector<double> z(4 * h);
    for (std::size_t r = 0; r < 4 * h; ++r) {
        double acc = p.b.at(r, 0);
        for (std::size_t k = 0; k < d; ++k) acc += p.wx.at(r, k) * x.at(k, 0);
        for (std::size_t k = 0; k < h; ++k) acc += p.wh.at(r, k) * h_prev.at(k, 0);
        z[r] = acc;
    }

    auto gates = std::make_shared<std::vector<double>>(4 * h); // activated i,f,g,o
    auto tanh_c = std::make_shared<std::vector<double>>(h);
    Tensor c = Tensor::zeros(h, 1);
    Tensor h_out = Tensor::zeros(h, 1);
    for (std::size_t r = 0; r < h; ++r) {
        double gi = logistic(z[r]);
        double gf = logistic(z[h + r]);
        double gg = std::tanh(z[2 * h + r]);
        double go = logistic(z[3 * h + r]);
        (*gates)[r] = gi;
        (*gates)[h + r] = gf;
        (*gates)[2 * h + r] = gg;
        (*gates)[3 * h + r] = go;
        double cv = gf * c_prev.at(r, 0) + gi * gg;
        c.at(r, 0) = cv;
        double tc = std::tanh(cv);
        (*tanh_c)[r] = tc;
        h_out.at(r, 0) = go * tc;
    }

    if (grad_enabled({&x, &h_prev, &c_prev, &p.wx, &p.wh, &p.b})) {
        h_out.node()->requires_grad = true;
        c.node()->requires_grad = true;
        Tape::active()->record([xn = x.node(), hpn = h_prev.node(), cpn = c_prev.node(),
                                wxn = p.wx.node(), whn = p.wh.node(), bn = p.b.node(),
                                hn = h_out.node(), cn = c.node(), gates, tanh_c, h, d] {
            const bool has_dh = !hn->grad.empty();
            const bool has_dc = !cn->grad.empty();
            if (!has_dh && !has_dc) return;

            std::vector<double> dz(4 * h, 0.0);
            std::vector<double> dc_prev_local(h, 0.0);
            for (std::size_t r = 0; r < h; ++r) {
                double dh = has_dh ? hn->grad[r] : 0.0;
                double gi = (*gates)[r], gf = (*gates)[h + r];
                double gg = (*gates)[2 * h + r], go = (*gates)[3 * h + r];
                double tc = (*tanh_c)[r];
                double dgo = dh * tc;
                double dc = (has_dc ? cn->grad[r] : 0.0) + dh * go * (1.0 - tc * tc);
                double dgf = dc * cpn->value[r];
                double dgi = dc * gg;
                double dgg = dc * gi;
                dc_prev_local[r] = dc * gf;
                dz[r] = dgi * gi * (1.0 - gi);
                dz[h + r] = dgf * gf * (1.0 - gf);
                dz[2 * h + r] = dgg * (1.0 - gg * gg);
                dz[3 * h + r] = dgo * go * (1.0 - go);
            }

            if (wxn->requires_grad) {
                wxn->ensure_grad();
                for (std::size_t r = 0; r < 4 * h; ++r)
                    for (std::size_t k = 0; k < d; ++k)
                        wxn->grad[r * d + k] += dz[r] * xn->value[k];
            }
            if (whn->requires_grad) {
                whn->ensure_grad();
                for (std::size_t r = 0; r < 4 * h; ++r)
                    for (std::size_t k = 0; k < h; ++k)
                        whn->grad[r * h + k] += dz[r] * hpn->value[k];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t r = 0; r < 4 * h; ++r) bn->grad[r] += dz[r];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t r = 0; r < 4 * h; ++r) {
                    double dzr = dz[r];
                    if (dzr == 0.0) continue;
                    for (std::size_t k = 0; k < d; ++k)
                        xn->grad[k] += wxn->value[r * d + k] * dzr;
                }
            }
            if (hpn->requires_grad) {
                hpn->ensure_grad();
                for (std::size_t r = 0; r < 4 * h; ++r) {
                    double dzr = dz[r];
                    if (dzr == 0.0) continue;
                    for (std::size_t k = 0; k < h; ++k)
                        hpn->grad[k] += whn->value[r * h + k] * dzr;
                }
            }
            if (cpn->requires_grad) {
                cpn->ensure_grad();
                for (std::size_t r = 0; r < h; ++r) cpn->grad[r] += dc_prev_local[r];
            }
        });
    }
    return {h_out, c};
}

Tensor bilstm(const Tensor& seq, const LstmParams& params_fwd, const LstmParams& params_bwd) {
    const std::size_t t_len = seq.cols();
    if (t_len == 0) throw InputError("bilstm: empty sequence");
    if (params_fwd.hidden() != params_bwd.hidden())
        throw ShapeError("bilstm: direction hidden sizes disagree");
    const std::size_t h = params_fwd.hidden();

    std::vector<Tensor> fwd_out(t_len), bwd_out(t_len);
    Tensor h_state = Tensor::zeros(h, 1);
    Tensor c_state = Tensor::zeros(h, 1);
    for (std::size_t t = 0; t < t_len; ++t) {
        auto [hh, cc] = lstm_cell(slice_cols(seq, t, t + 1), h_state, c_state, params_fwd);
        fwd_out[t] = hh;
        h_state = hh;
        c_state = cc;
    }
    h_state = Tensor::zeros(h, 1);
    c_state = Tensor::zeros(h, 1);
    for (std::size_t t = t_len; t-- > 0;) {
        auto [hh, cc] = lstm_cell(slice_cols(seq, t, t + 1), h_state, c_state, params_bwd);
        bwd_out[t] = hh;
        h_state = hh;
        c_state = cc;
    }

    std::vector<Tensor> fwd_cols(fwd_out.begin(), fwd_out.end());
    std::vector<Tensor> bwd_cols(bwd_out.begin(), bwd_out.end());
    return concat_rows({concat_cols(fwd_cols), concat_cols(bwd_cols)});
}

} // namespace coattn
