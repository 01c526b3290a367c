#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "coattn/random.hpp"
#include "coattn/tensor.hpp"

namespace coattn {

// One direction of an LSTM. Gate rows in Wx/Wh/b are stacked as
// [input; forget; candidate; output], each block `hidden` rows tall.
// The forget-gate bias block is initialized to 1.
struct LstmParams {
    Tensor wx; // 4h x d
    Tensor wh; // 4h x h
    Tensor b;  // 4h x 1

    static LstmParams init(std::size_t input, std::size_t hidden, Rng& rng,
                           const std::string& name);
    std::size_t hidden() const { return wh.cols(); }
    std::size_t input() const { return wx.cols(); }
};

// Single fused LSTM step. x is d x 1, h_prev/c_prev are h x 1; returns
// (h, c). Recorded as one tape node with a handwritten backward.
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& p);

struct BiLstmParams {
    LstmParams fwd;
    LstmParams bwd;

    static BiLstmParams init(std::size_t input, std::size_t hidden, Rng& rng,
                             const std::string& name);
    std::size_t hidden() const { return fwd.hidden(); }
};

// Runs both directions over the columns of seq (d x T) and stacks the
// results: rows [0, h) are the forward half, rows [h, 2h) the backward
// half. Position t of the forward half depends only on columns 0..t and
// position t of the backward half only on columns t..T-1.
Tensor bilstm(const Tensor& seq, const LstmParams& params_fwd, const LstmParams& params_bwd);

inline Tensor bilstm(const Tensor& seq, const BiLstmParams& p) {
    return bilstm(seq, p.fwd, p.bwd);
}

} // namespace coattn
