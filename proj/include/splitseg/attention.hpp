#pragma once

#include "splitseg/ops.hpp"
#include "splitseg/tensor.hpp"

namespace splitseg {

/// Conv(1x1, d) + BatchNorm + ReLU projection used around attention blocks.
struct ProjectionWeights {
    ConvSpec conv;
    BatchNormSpec bn;

    Tensor apply(const Tensor& x) const { return batchnorm_relu(conv2d(x, conv), bn); }
    static ProjectionWeights zero(int dim);
};

/// Single-head self attention: three input projections, one output projection.
/// All map d -> d channels. No 1/sqrt(d) scaling inside this block.
struct SelfAttentionWeights {
    ProjectionWeights query;
    ProjectionWeights key;
    ProjectionWeights value;
    ProjectionWeights out;

    int dim() const { return query.conv.out_channels; }
};

/// Learnable class tokens c = K^(c), one d-vector per class.
struct ClassTokens {
    Tensor tokens;  // S x d

    int classes() const { return tokens.rank() == 2 ? tokens.dim(0) : 0; }
    int dim() const { return tokens.rank() == 2 ? tokens.dim(1) : 0; }
};

/// Custom cross attention: FC projections for the concatenated query and for
/// the class-token key; the value is the un-projected class tokens.
struct CrossAttentionWeights {
    Tensor w_query;  // d x d
    Tensor b_query;  // d
    Tensor w_key;    // d x d
    Tensor b_key;    // d
    ClassTokens tokens;

    int dim() const { return w_query.rank() == 2 ? w_query.dim(0) : 0; }
};

/// Two-stage context mining block: stage-1 self attention, a 1x1 skip conv,
/// class-token cross attention feeding stage-2 self attention; the three
/// branch outputs are summed into N.
struct ContextMiningWeights {
    SelfAttentionWeights stage1;
    ConvSpec skip;
    CrossAttentionWeights cross;
    SelfAttentionWeights stage2;
};

struct AttentionTrace {
    Tensor output;     // d x h x w
    Tensor attention;  // T x T, rows sum to 1
};

struct CrossAttentionTrace {
    Tensor output;     // d x h x w
    Tensor scores;     // (T+S) x S, scaled by 1/sqrt(d), before the drop
    Tensor attention;  // T x S, rows sum to 1
};

/// Keeps the first keep_rows rows, discarding the class-token query rows.
Tensor drop_class_rows(const Tensor& scores, int keep_rows);

AttentionTrace self_attention_traced(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const SelfAttentionWeights& w);
Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                      const SelfAttentionWeights& w);

CrossAttentionTrace custom_cross_attention_traced(const Tensor& f, const CrossAttentionWeights& w);
Tensor custom_cross_attention(const Tensor& f, const CrossAttentionWeights& w);

Tensor context_mining(const Tensor& f, const ContextMiningWeights& w);

/// Elementwise sum of equally shaped tensors.
Tensor add(const Tensor& a, const Tensor& b);

}  // namespace splitseg
