#include "splitseg/attention.hpp"

#include <cmath>
#include <string>

namespace splitseg {

namespace {

void check_feature_map(const Tensor& t, int dim, const char* who) {
    if (t.rank() != 3) {
        throw ShapeError(std::string(who) + ": expected d x h x w input, got rank " +
                         std::to_string(t.rank()));
    }
    if (t.dim(0) != dim) {
        throw ShapeError(std::string(who) + ": channel axis is " + std::to_string(t.dim(0)) +
                         ", weights expect d = " + std::to_string(dim));
    }
}

/// X * W + b with X rows as vectors, W d x d, b length d.
Tensor affine_rows(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor out = matmul(x, w);
    if (!b.empty()) {
        const int rows = out.dim(0), cols = out.dim(1);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) out.at(r, c) += b.data()[c];
        }
    }
    return out;
}

Tensor transpose2d(const Tensor& m) {
    Tensor out({m.dim(1), m.dim(0)});
    for (int r = 0; r < m.dim(0); ++r) {
        for (int c = 0; c < m.dim(1); ++c) out.at(c, r) = m.at(r, c);
    }
    return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("concat: column counts differ, " + std::to_string(a.dim(1)) + " vs " +
                         std::to_string(b.dim(1)));
    }
    Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + a.size());
    return out;
}

}  // namespace

ProjectionWeights ProjectionWeights::zero(int dim) {
    ProjectionWeights p;
    p.conv = ConvSpec::conv(1, dim, dim);
    p.bn = BatchNormSpec::identity(dim);
    return p;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shapes differ, " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

Tensor drop_class_rows(const Tensor& scores, int keep_rows) {
    if (scores.rank() != 2) throw ShapeError("drop: expected rank-2 scores");
    if (keep_rows < 0 || keep_rows > scores.dim(0)) {
        throw ShapeError("drop: keep_rows " + std::to_string(keep_rows) + " out of range for " +
                         std::to_string(scores.dim(0)) + " rows");
    }
    const int cols = scores.dim(1);
    Tensor out({keep_rows, cols});
    std::copy(scores.values().begin(),
              scores.values().begin() + static_cast<std::size_t>(keep_rows) * cols,
              out.values().begin());
    return out;
}

AttentionTrace self_attention_traced(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const SelfAttentionWeights& w) {
    const int d = w.dim();
    check_feature_map(q, d, "self_attention(q)");
    check_feature_map(k, d, "self_attention(k)");
    check_feature_map(v, d, "self_attention(v)");
    if (q.shape() != k.shape() || q.shape() != v.shape()) {
        throw ShapeError("self_attention: q/k/v shapes differ");
    }

    const int h = q.dim(1), width = q.dim(2);
    const Tensor qp = tokens_from_map(w.query.apply(q));  // T x d
    const Tensor kp = tokens_from_map(w.key.apply(k));
    const Tensor vp = tokens_from_map(w.value.apply(v));

    AttentionTrace trace;
    trace.attention = softmax_rows(matmul(qp, transpose2d(kp)));  // T x T
    const Tensor mixed = matmul(trace.attention, vp);             // T x d
    trace.output = w.out.apply(map_from_tokens(mixed, d, h, width));
    return trace;
}

Tensor self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                      const SelfAttentionWeights& w) {
    return self_attention_traced(q, k, v, w).output;
}

CrossAttentionTrace custom_cross_attention_traced(const Tensor& f,
                                                  const CrossAttentionWeights& w) {
    const int d = w.dim();
    check_feature_map(f, d, "custom_cross_attention");
    if (w.tokens.dim() != d) {
        throw ShapeError("custom_cross_attention: class-token dim " +
                         std::to_string(w.tokens.dim()) + " != d " + std::to_string(d));
    }
    const int s = w.tokens.classes();
    if (s < 1) throw ShapeError("custom_cross_attention: need at least one class token");

    const int h = f.dim(1), width = f.dim(2);
    const int t = h * width;
    const Tensor tokens = tokens_from_map(f);                       // T x d
    const Tensor query = concat_rows(tokens, w.tokens.tokens);      // (T+S) x d
    const Tensor qp = affine_rows(query, w.w_query, w.b_query);     // (T+S) x d
    const Tensor kp = affine_rows(w.tokens.tokens, w.w_key, w.b_key);  // S x d

    CrossAttentionTrace trace;
    trace.scores = matmul(qp, transpose2d(kp));  // (T+S) x S
    const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
    for (float& x : trace.scores.values()) x *= scale;

    trace.attention = softmax_rows(drop_class_rows(trace.scores, t));  // T x S
    // V^(c) = K^(c): the class tokens are used unprojected.
    const Tensor mixed = matmul(trace.attention, w.tokens.tokens);  // T x d
    trace.output = map_from_tokens(mixed, d, h, width);
    return trace;
}

Tensor custom_cross_attention(const Tensor& f, const CrossAttentionWeights& w) {
    return custom_cross_attention_traced(f, w).output;
}

Tensor context_mining(const Tensor& f, const ContextMiningWeights& w) {
    const Tensor skip = conv2d(f, w.skip);
    const Tensor h1 = self_attention(f, f, f, w.stage1);
    const Tensor kv = custom_cross_attention(f, w.cross);
    const Tensor h2 = self_attention(f, kv, kv, w.stage2);
    return add(add(skip, h1), h2);
}

}  // namespace splitseg
