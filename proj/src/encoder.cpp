#include "coattn/encoder.hpp"

#include <cmath>

#include "coattn/error.hpp"

namespace coattn {

namespace {

constexpr double kMaskPenalty = -1e30;

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng,
                    const std::string& name) {
    Tensor t = Tensor::zeros(rows, cols);
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    t.set_requires_grad(true);
    t.set_name(name);
    return t;
}

// Additive mask over the rows of a logits matrix: masked rows get a penalty
// large enough that softmax assigns them exactly zero. The final row is the
// sentinel and is always live.
Tensor row_mask_bias(const std::vector<int>& mask, std::size_t rows, std::size_t cols) {
    Tensor bias = Tensor::zeros(rows, cols);
    for (std::size_t i = 0; i + 1 < rows; ++i)
        if (mask[i] == 0)
            for (std::size_t j = 0; j < cols; ++j) bias.at(i, j) = kMaskPenalty;
    return bias;
}

} // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
    const std::size_t e = config.embed_dim, h = config.hidden;
    if (config.identity_rnns && e != h)
        throw ConfigError("EncoderParams: identity_rnns requires embed_dim == hidden");
    EncoderParams p;
    p.bilstm1 = BiLstmParams::init(e, h, rng, "enc.bilstm1");
    p.proj1_w = uniform_init(h, 2 * h, 2 * h, rng, "enc.proj1.w");
    p.proj1_b = uniform_init(h, 1, 2 * h, rng, "enc.proj1.b");
    p.qx_w = uniform_init(h, h, h, rng, "enc.qx.w");
    p.qx_b = uniform_init(h, 1, h, rng, "enc.qx.b");
    p.sent1_doc = uniform_init(h, 1, h, rng, "enc.sent1.doc");
    p.sent1_q = uniform_init(h, 1, h, rng, "enc.sent1.q");
    p.bilstm2 = BiLstmParams::init(h, h, rng, "enc.bilstm2");
    const std::size_t w2 = config.identity_rnns ? h : 2 * h; // summary width after bilstm2
    p.sent2_doc = uniform_init(w2, 1, w2, rng, "enc.sent2.doc");
    p.sent2_q = uniform_init(w2, 1, w2, rng, "enc.sent2.q");
    // E1_D, S1_D, C1_D are h-wide; E2_D, S2_D, C2_D carry the bilstm2 width.
    const std::size_t fuse_in = config.residual ? (3 * h + 3 * w2) : w2;
    p.bilstm_u = BiLstmParams::init(fuse_in, h, rng, "enc.bilstm_u");
    return p;
}

std::vector<Tensor> EncoderParams::parameters() const {
    std::vector<Tensor> out;
    for (const BiLstmParams* bp : {&bilstm1, &bilstm2, &bilstm_u})
        for (const LstmParams* lp : {&bp->fwd, &bp->bwd})
            for (const Tensor* t : {&lp->wx, &lp->wh, &lp->b}) out.push_back(*t);
    for (const Tensor* t :
         {&proj1_w, &proj1_b, &qx_w, &qx_b, &sent1_doc, &sent1_q, &sent2_doc, &sent2_q})
        out.push_back(*t);
    return out;
}

InitialEncodings encode_initial(const Tensor& doc_emb, const Tensor& q_emb,
                                const EncoderParams& params, const EncoderConfig& config) {
    if (doc_emb.cols() == 0 || q_emb.cols() == 0)
        throw InputError("encode_initial: empty document or question");

    auto first_layer = [&](const Tensor& emb) -> Tensor {
        if (config.identity_rnns) return emb;
        return affine(params.proj1_w, bilstm(emb, params.bilstm1), params.proj1_b);
    };

    Tensor doc = first_layer(doc_emb);
    Tensor q = tanh(affine(params.qx_w, first_layer(q_emb), params.qx_b));

    InitialEncodings out;
    out.e1_d = concat_cols({doc, params.sent1_doc});
    out.e1_q = concat_cols({q, params.sent1_q});
    return out;
}

Tensor affinity(const Tensor& e_q, const Tensor& e_d) {
    if (e_q.rows() != e_d.rows())
        throw ShapeError("affinity: encoding widths disagree: " + e_d.shape_str() + " vs " +
                         e_q.shape_str());
    return matmul(transpose(e_d), e_q); // (m+1) x (n+1)
}

CoattentionOutput coattend(const Tensor& e_d, const Tensor& e_q,
                           const std::vector<int>& doc_mask, const std::vector<int>& q_mask) {
    if (e_d.cols() != doc_mask.size() + 1 || e_q.cols() != q_mask.size() + 1)
        throw ContractError("coattend: sentinel column missing: got " + e_d.shape_str() + "/" +
                            e_q.shape_str() + " for mask lengths " +
                            std::to_string(doc_mask.size()) + "/" +
                            std::to_string(q_mask.size()));

    const std::size_t mp1 = e_d.cols(), np1 = e_q.cols();
    Tensor a = affinity(e_q, e_d); // (m+1) x (n+1)

    // softmax(A) normalizes over document positions; padded documents rows
    // are pushed to exactly zero weight. softmax(A^T) normalizes over
    // question positions likewise.
    Tensor a_doc = add(a, row_mask_bias(doc_mask, mp1, np1));
    Tensor at_q = add(transpose(a), row_mask_bias(q_mask, np1, mp1));

    CoattentionOutput out;
    out.att_doc_over_q = softmax_columns(at_q); // (n+1) x (m+1)
    out.att_q_over_doc = softmax_columns(a_doc); // (m+1) x (n+1)
    out.s_d = matmul(e_q, out.att_doc_over_q);          // h' x (m+1)
    out.s_q = matmul(e_d, out.att_q_over_doc);          // h' x (n+1)
    Tensor c_full = matmul(out.s_q, out.att_doc_over_q); // h' x (m+1)
    out.c_d = slice_cols(c_full, 0, mp1 - 1);            // sentinel column dropped
    return out;
}

DeepEncoding encode_deep(const Tensor& doc_emb, const Tensor& q_emb,
                         const std::vector<int>& doc_mask, const std::vector<int>& q_mask,
                         const EncoderParams& params, const EncoderConfig& config) {
    const std::size_t m = doc_emb.cols(), n = q_emb.cols();
    if (m != doc_mask.size() || n != q_mask.size())
        throw ShapeError("encode_deep: mask lengths " + std::to_string(doc_mask.size()) + "/" +
                         std::to_string(q_mask.size()) + " do not match inputs " +
                         doc_emb.shape_str() + "/" + q_emb.shape_str());

    DeepEncoding out;
    out.initial = encode_initial(doc_emb, q_emb, params, config);
    out.layer1 = coattend(out.initial.e1_d, out.initial.e1_q, doc_mask, q_mask);

    // Second-layer encodings: bilstm2 consumes the summaries including their
    // sentinel column; the sentinel-derived output column is dropped and a
    // fresh learned sentinel appended before the second coattention.
    auto second_layer = [&](const Tensor& summary, const Tensor& sentinel,
                            std::size_t len) -> std::pair<Tensor, Tensor> {
        Tensor enc = config.identity_rnns ? summary : bilstm(summary, params.bilstm2);
        Tensor trimmed = slice_cols(enc, 0, len);
        return {trimmed, concat_cols({trimmed, sentinel})};
    };
    auto [e2_d_bare, e2_d] = second_layer(out.layer1.s_d, params.sent2_doc, m);
    auto [e2_q_bare, e2_q] = second_layer(out.layer1.s_q, params.sent2_q, n);
    (void)e2_q_bare;

    out.layer2 = coattend(e2_d, e2_q, doc_mask, q_mask);

    Tensor fuse_in;
    if (config.residual) {
        fuse_in = concat_rows({slice_cols(out.initial.e1_d, 0, m), e2_d_bare,
                               slice_cols(out.layer1.s_d, 0, m),
                               slice_cols(out.layer2.s_d, 0, m), out.layer1.c_d,
                               out.layer2.c_d});
    } else {
        fuse_in = out.layer2.c_d;
    }
    out.u = config.identity_rnns ? fuse_in : bilstm(fuse_in, params.bilstm_u);
    return out;
}

} // namespace coattn
