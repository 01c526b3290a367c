#pragma once

#include <cstddef>
#include <vector>

#include "coattn/rnn.hpp"
#include "coattn/tensor.hpp"

namespace coattn {

// Deep residual coattention encoder. Two stacked coattention layers over
// shared-weight biLSTM encodings, with a learned sentinel column appended to
// every sequence so attention can point at "nothing", and a final biLSTM
// fusing the document-side signals of both layers.
//
// Width bookkeeping (hidden size h, document length m, question length n):
//   E1_D: h x (m+1)      first-layer encodings, sentinel appended
//   A:    (m+1) x (n+1)  affinity, A[i][j] = <doc_i, question_j>
//   S1_D: h x (m+1), S1_Q: h x (n+1), C1_D: h x m
//   E2_D: 2h x m before its fresh sentinel is appended
//   U:    2h x m
// The first biLSTM concatenates directions (2h) and projects back to h; the
// later biLSTMs keep their native 2h output.

struct EncoderConfig {
    std::size_t embed_dim = 16;
    std::size_t hidden = 16;
    bool residual = true;
    // Replaces every biLSTM (and the first layer's projection) with the
    // identity map. Used by tests to isolate the attention algebra; requires
    // embed_dim == hidden.
    bool identity_rnns = false;
};

struct EncoderParams {
    BiLstmParams bilstm1;  // shared by document and question
    Tensor proj1_w, proj1_b; // 2h -> h after bilstm1
    Tensor qx_w, qx_b;       // question non-linearity
    Tensor sent1_doc, sent1_q; // h x 1
    BiLstmParams bilstm2;  // shared by both summary sequences
    Tensor sent2_doc, sent2_q; // 2h x 1 (h x 1 under identity_rnns)
    BiLstmParams bilstm_u; // fusion biLSTM

    static EncoderParams init(const EncoderConfig& config, Rng& rng);
    std::vector<Tensor> parameters() const;
};

struct InitialEncodings {
    Tensor e1_d; // h x (m+1)
    Tensor e1_q; // h x (n+1)
};

struct CoattentionOutput {
    Tensor s_d; // h' x (m+1)
    Tensor s_q; // h' x (n+1)
    Tensor c_d; // h' x m, sentinel column dropped
    // Attention weights, kept for diagnostics: column j of att_doc_over_q is
    // the distribution over question positions attended by document position
    // j, and vice versa.
    Tensor att_doc_over_q; // (n+1) x (m+1)
    Tensor att_q_over_doc; // (m+1) x (n+1)
};

struct DeepEncoding {
    Tensor u; // 2h x m
    InitialEncodings initial;
    CoattentionOutput layer1;
    CoattentionOutput layer2;
};

InitialEncodings encode_initial(const Tensor& doc_emb, const Tensor& q_emb,
                                const EncoderParams& params, const EncoderConfig& config);

// A[i][j] = inner product of document position i and question position j.
Tensor affinity(const Tensor& e_q, const Tensor& e_d);

// One coattention layer. Inputs carry their sentinel column (so their column
// counts are mask length + 1); attention weight at padded positions is
// exactly zero.
CoattentionOutput coattend(const Tensor& e_d, const Tensor& e_q,
                           const std::vector<int>& doc_mask, const std::vector<int>& q_mask);

DeepEncoding encode_deep(const Tensor& doc_emb, const Tensor& q_emb,
                         const std::vector<int>& doc_mask, const std::vector<int>& q_mask,
                         const EncoderParams& params, const EncoderConfig& config);

} // namespace coattn
