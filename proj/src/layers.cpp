#include "ouroboros/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ouro {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::embedding: return "embedding";
    case LayerKind::block: return "block";
    case LayerKind::head: return "head";
  }
  return "?";
}

void BatchSample::validate(std::size_t vocab) const {
  if (tokens.size() != batch * seq || targets.size() != batch * seq) {
    throw DimensionError("batch sample: expected " + std::to_string(batch * seq) + " ids");
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab ||
        targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw std::out_of_range("batch sample: id out of range for vocab " + std::to_string(vocab));
    }
  }
}

Tensor dropout_mask(const DropoutStream& stream, const Shape& shape, double keep) {
  Tensor mask(shape);
  const double inv = 1.0 / keep;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = SeededRng::uniform_at(stream.seed, stream.position + i) < keep ? inv : 0.0;
  }
  return mask;
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;
  constexpr double k = 0.044715;
  const double t = std::tanh(c * (x + k * x * x * x));
  return 0.5 * x * (1.0 + t);
}

double gelu_derivative(double x) {
  constexpr double c = 0.7978845608028654;
  constexpr double k = 0.044715;
  const double t = std::tanh(c * (x + k * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
}

namespace {

// y = gain * (x - mean) / sqrt(var + eps) + bias, row-wise over D.
void layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                        Tensor& y, Tensor& hat, Tensor& rstd) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  y = Tensor({n, d});
  hat = Tensor({n, d});
  rstd = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.raw() + i * d;
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) sum += row[j];
    const double mean = sum / static_cast<double>(d);
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += (row[j] - mean) * (row[j] - mean);
    const double var = sq / static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + eps);
    rstd[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * r;
      hat[i * d + j] = h;
      y[i * d + j] = gain[j] * h + bias[j];
    }
  }
}

// Accumulates into dx, dgain, dbias.
void layer_norm_backward(const Tensor& dy, const Tensor& hat, const Tensor& rstd,
                         const Tensor& gain, Tensor& dx, Tensor& dgain, Tensor& dbias) {
  const std::size_t n = dy.dim(0), d = dy.dim(1);
  std::vector<double> dhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* g = dy.raw() + i * d;
    const double* h = hat.raw() + i * d;
    double sum_dhat = 0.0, sum_dhat_h = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dgain[j] += g[j] * h[j];
      dbias[j] += g[j];
      dhat[j] = g[j] * gain[j];
      sum_dhat += dhat[j];
      sum_dhat_h += dhat[j] * h[j];
    }
    const double mean_dhat = sum_dhat / static_cast<double>(d);
    const double mean_dhat_h = sum_dhat_h / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx[i * d + j] += rstd[i] * (dhat[j] - mean_dhat - h[j] * mean_dhat_h);
    }
  }
}

Tensor add_bias(Tensor y, const Tensor& bias) {
  const std::size_t n = y.dim(0), d = y.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] += bias[j];
  return y;
}

Tensor column_sum(const Tensor& g) {
  const std::size_t n = g.dim(0), d = g.dim(1);
  Tensor s({d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s[j] += g[i * d + j];
  return s;
}

Tensor as_rows(const Tensor& t, std::size_t d) { return t.reshaped({t.size() / d, d}); }

// Single-head causal attention per batch element. probs is [B,S,S] with
// zeros above the diagonal.
void attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                       std::size_t seq, std::size_t d, Tensor& probs, Tensor& attn) {
  probs = Tensor({batch, seq, seq});
  attn = Tensor({batch * seq, d});
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * seq;
    for (std::size_t i = 0; i < seq; ++i) {
      const double* qi = q.raw() + (base + i) * d;
      double m = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* kj = k.raw() + (base + j) * d;
        double dot = 0.0;
        for (std::size_t e = 0; e < d; ++e) dot += qi[e] * kj[e];
        scores[j] = dot * scale;
        m = j == 0 ? scores[j] : std::max(m, scores[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        scores[j] = std::exp(scores[j] - m);
        sum += scores[j];
      }
      double* prow = probs.raw() + (base + i) * seq;
      double* out = attn.raw() + (base + i) * d;
      for (std::size_t j = 0; j <= i; ++j) {
        prow[j] = scores[j] / sum;
        const double* vj = v.raw() + (base + j) * d;
        for (std::size_t e = 0; e < d; ++e) out[e] += prow[j] * vj[e];
      }
    }
  }
}

void attention_backward(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& probs,
                        const Tensor& dattn, std::size_t batch, std::size_t seq, std::size_t d,
                        Tensor& dq, Tensor& dk, Tensor& dv) {
  dq = Tensor({batch * seq, d});
  dk = Tensor({batch * seq, d});
  dv = Tensor({batch * seq, d});
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> dp(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * seq;
    for (std::size_t i = 0; i < seq; ++i) {
      const double* prow = probs.raw() + (base + i) * seq;
      const double* gi = dattn.raw() + (base + i) * d;
      double row_dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* vj = v.raw() + (base + j) * d;
        double acc = 0.0;
        for (std::size_t e = 0; e < d; ++e) acc += gi[e] * vj[e];
        dp[j] = acc;
        row_dot += prow[j] * acc;
        double* dvj = dv.raw() + (base + j) * d;
        for (std::size_t e = 0; e < d; ++e) dvj[e] += prow[j] * gi[e];
      }
      const double* qi = q.raw() + (base + i) * d;
      double* dqi = dq.raw() + (base + i) * d;
      for (std::size_t j = 0; j <= i; ++j) {
        const double ds = prow[j] * (dp[j] - row_dot) * scale;
        const double* kj = k.raw() + (base + j) * d;
        double* dkj = dk.raw() + (base + j) * d;
        for (std::size_t e = 0; e < d; ++e) {
          dqi[e] += ds * kj[e];
          dkj[e] += ds * qi[e];
        }
      }
    }
  }
}

bool dropout_active(const ModelDims& dims, bool train) { return train && dims.dropout > 0.0; }

Tensor block_forward(const ParamList& w, const ModelDims& dims, const Tensor& input,
                     std::size_t batch, std::size_t seq, const DropoutStream& dropout, bool train,
                     BlockCache& c) {
  using namespace block_param;
  const std::size_t d = dims.dim;
  const std::size_t n = batch * seq;
  if (input.size() != n * d) {
    throw DimensionError("block: input " + shape_string(input.shape()) + " does not match [" +
                         std::to_string(batch) + "x" + std::to_string(seq) + "x" +
                         std::to_string(d) + "]");
  }
  c.x = as_rows(input, d);
  layer_norm_forward(c.x, w[ln1_gain], w[ln1_bias], dims.ln_eps, c.a, c.ln1_hat, c.ln1_rstd);
  c.q = matmul(c.a, w[wq]);
  c.k = matmul(c.a, w[wk]);
  c.v = matmul(c.a, w[wv]);
  attention_forward(c.q, c.k, c.v, batch, seq, d, c.probs, c.attn);
  Tensor o = matmul(c.attn, w[wo]);
  const bool drop = dropout_active(dims, train);
  const double keep = 1.0 - dims.dropout;
  if (drop) {
    c.mask1 = dropout_mask(dropout, {n, d}, keep);
    o = mul(o, c.mask1);
  } else {
    c.mask1 = Tensor();
  }
  c.x1 = add(c.x, o);
  layer_norm_forward(c.x1, w[ln2_gain], w[ln2_bias], dims.ln_eps, c.c, c.ln2_hat, c.ln2_rstd);
  c.f1 = add_bias(matmul(c.c, w[w1]), w[b1]);
  c.r = Tensor(c.f1.shape());
  for (std::size_t i = 0; i < c.f1.size(); ++i) c.r[i] = gelu(c.f1[i]);
  Tensor f2 = add_bias(matmul(c.r, w[w2]), w[b2]);
  if (drop) {
    c.mask2 = dropout_mask({dropout.seed, dropout.position + n * d}, {n, d}, keep);
    f2 = mul(f2, c.mask2);
  } else {
    c.mask2 = Tensor();
  }
  Tensor out = add(c.x1, f2);
  out.require_finite("block forward");
  return std::move(out).reshaped({batch, seq, d});
}

LayerGradients block_backward(const BlockCache& c, const ParamList& w, const ModelDims& dims,
                              std::size_t batch, std::size_t seq, const Tensor& grad_out) {
  using namespace block_param;
  const std::size_t d = dims.dim;
  const std::size_t n = batch * seq;
  if (grad_out.size() != n * d) {
    throw DimensionError("block backward: grad " + shape_string(grad_out.shape()) +
                         " does not match tape");
  }
  LayerGradients g;
  g.weights = zeros_like(w);
  const Tensor dout = as_rows(grad_out, d);

  // Feed-forward branch.
  const Tensor df2 = c.mask2.empty() ? dout : mul(dout, c.mask2);
  g.weights[w2] = matmul(transpose(c.r), df2);
  g.weights[b2] = column_sum(df2);
  Tensor df1 = matmul(df2, transpose(w[w2]));
  for (std::size_t i = 0; i < df1.size(); ++i) df1[i] *= gelu_derivative(c.f1[i]);
  g.weights[w1] = matmul(transpose(c.c), df1);
  g.weights[b1] = column_sum(df1);
  const Tensor dc = matmul(df1, transpose(w[w1]));
  Tensor dx1 = dout;
  layer_norm_backward(dc, c.ln2_hat, c.ln2_rstd, w[ln2_gain], dx1, g.weights[ln2_gain],
                      g.weights[ln2_bias]);

  // Attention branch.
  const Tensor dout_attn = c.mask1.empty() ? dx1 : mul(dx1, c.mask1);
  g.weights[wo] = matmul(transpose(c.attn), dout_attn);
  const Tensor dattn = matmul(dout_attn, transpose(w[wo]));
  Tensor dq, dk, dv;
  attention_backward(c.q, c.k, c.v, c.probs, dattn, batch, seq, d, dq, dk, dv);
  const Tensor at = transpose(c.a);
  g.weights[wq] = matmul(at, dq);
  g.weights[wk] = matmul(at, dk);
  g.weights[wv] = matmul(at, dv);
  Tensor da = matmul(dq, transpose(w[wq]));
  accumulate(da, matmul(dk, transpose(w[wk])));
  accumulate(da, matmul(dv, transpose(w[wv])));
  Tensor dx = dx1;
  layer_norm_backward(da, c.ln1_hat, c.ln1_rstd, w[ln1_gain], dx, g.weights[ln1_gain],
                      g.weights[ln1_bias]);
  dx.require_finite("block backward");
  g.input = std::move(dx).reshaped({batch, seq, d});
  return g;
}

Tensor embedding_forward(const ParamList& w, const Tensor& vocab_matrix, const ModelDims& dims,
                         const BatchSample& batch) {
  const std::size_t d = dims.dim;
  const Tensor& pos = w[embedding_param::positions];
  if (batch.seq > pos.dim(0)) {
    throw DimensionError("embedding: sequence length " + std::to_string(batch.seq) +
                         " exceeds positional table " + std::to_string(pos.dim(0)));
  }
  batch.validate(vocab_matrix.dim(0));
  Tensor out({batch.batch, batch.seq, d});
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t s = 0; s < batch.seq; ++s) {
      const std::size_t tok = static_cast<std::size_t>(batch.tokens[b * batch.seq + s]);
      double* dst = out.raw() + (b * batch.seq + s) * d;
      const double* row = vocab_matrix.raw() + tok * d;
      const double* p = pos.raw() + s * d;
      for (std::size_t e = 0; e < d; ++e) dst[e] = row[e] + p[e];
    }
  }
  return out;
}

Tensor head_forward(const ParamList& w, const Tensor& vocab_matrix, const ModelDims& dims,
                    const Tensor& input, std::span<const int> targets, HeadCache& c) {
  const std::size_t d = dims.dim;
  Tensor x = as_rows(input, d);
  layer_norm_forward(x, w[head_param::ln_gain], w[head_param::ln_bias], dims.ln_eps, c.features,
                     c.ln_hat, c.ln_rstd);
  const Tensor logits = matmul(c.features, transpose(vocab_matrix));
  return Tensor({1}, {softmax_cross_entropy(logits, targets)});
}

}  // namespace

LayerForward layer_forward(const Layer& layer, const Tensor& vocab_matrix, const ModelDims& dims,
                           const Tensor* input, const BatchSample& batch, DropoutStream dropout,
                           bool train, bool keep_activations) {
  LayerForward f;
  LayerTape& tape = f.tape;
  tape.kind = layer.kind;
  tape.batch = batch.batch;
  tape.seq = batch.seq;
  tape.dropout = dropout;
  tape.train = train;
  switch (layer.kind) {
    case LayerKind::embedding:
      tape.tokens = batch.tokens;
      f.output = embedding_forward(layer.params, vocab_matrix, dims, batch);
      break;
    case LayerKind::block: {
      if (!input) throw DimensionError("block: missing input");
      tape.input = *input;
      auto cache = std::make_shared<BlockCache>();
      f.output = block_forward(layer.params, dims, *input, batch.batch, batch.seq, dropout, train,
                               *cache);
      if (keep_activations) tape.block_cache = std::move(cache);
      break;
    }
    case LayerKind::head: {
      if (!input) throw DimensionError("head: missing input");
      tape.input = *input;
      tape.targets = batch.targets;
      auto cache = std::make_shared<HeadCache>();
      f.output = head_forward(layer.params, vocab_matrix, dims, *input, batch.targets, *cache);
      if (keep_activations) tape.head_cache = std::move(cache);
      break;
    }
  }
  f.output.require_finite("layer forward");
  return f;
}

LayerGradients layer_backward(const LayerTape& tape, const Layer& layer,
                              const Tensor& vocab_matrix, const ModelDims& dims,
                              const Tensor& grad_out) {
  if (tape.kind != layer.kind) throw DimensionError("layer backward: tape/layer kind mismatch");
  switch (layer.kind) {
    case LayerKind::embedding: {
      LayerGradients g;
      g.weights = zeros_like(layer.params);
      const std::size_t d = dims.dim;
      if (grad_out.size() != tape.batch * tape.seq * d) {
        throw DimensionError("embedding backward: grad " + shape_string(grad_out.shape()) +
                             " does not match tape");
      }
      Tensor& dpos = g.weights[embedding_param::positions];
      for (std::size_t b = 0; b < tape.batch; ++b)
        for (std::size_t s = 0; s < tape.seq; ++s)
          for (std::size_t e = 0; e < d; ++e)
            dpos[s * d + e] += grad_out[(b * tape.seq + s) * d + e];
      g.embedding = embedding_input_gradient(tape, grad_out, vocab_matrix.dim(0));
      return g;
    }
    case LayerKind::block: {
      if (tape.block_cache) {
        return block_backward(*tape.block_cache, layer.params, dims, tape.batch, tape.seq, grad_out);
      }
      BlockCache cache;
      block_forward(layer.params, dims, tape.input, tape.batch, tape.seq, tape.dropout, tape.train,
                    cache);
      return block_backward(cache, layer.params, dims, tape.batch, tape.seq, grad_out);
    }
    case LayerKind::head: {
      if (grad_out.size() != 1) throw DimensionError("head backward: expects a scalar gradient");
      HeadCache local;
      const HeadCache* cache = tape.head_cache.get();
      if (!cache) {
        head_forward(layer.params, vocab_matrix, dims, tape.input, tape.targets, local);
        cache = &local;
      }
      HeadLoss hl = loss_and_head_backward(cache->features, vocab_matrix, tape.targets, grad_out[0]);
      LayerGradients g;
      g.weights = zeros_like(layer.params);
      Tensor dx(cache->features.shape());
      layer_norm_backward(hl.grad_input, cache->ln_hat, cache->ln_rstd,
                          layer.params[head_param::ln_gain], dx,
                          g.weights[head_param::ln_gain], g.weights[head_param::ln_bias]);
      g.input = std::move(dx).reshaped(tape.input.shape());
      g.embedding = std::move(hl.grad_projection);
      return g;
    }
  }
  throw std::logic_error("unreachable");
}

Tensor embedding_input_gradient(const LayerTape& tape, const Tensor& grad_out, std::size_t vocab) {
  if (tape.kind != LayerKind::embedding) {
    throw DimensionError("embedding_input_gradient: tape is not from an embedding layer");
  }
  const std::size_t n = tape.tokens.size();
  if (n == 0 || grad_out.size() % n != 0) {
    throw DimensionError("embedding_input_gradient: grad " + shape_string(grad_out.shape()) +
                         " does not match " + std::to_string(n) + " tokens");
  }
  const std::size_t d = grad_out.size() / n;
  Tensor g({vocab, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto tok = static_cast<std::size_t>(tape.tokens[i]);
    if (tok >= vocab) throw std::out_of_range("embedding_input_gradient: token out of range");
    double* row = g.raw() + tok * d;
    const double* src = grad_out.raw() + i * d;
    for (std::size_t e = 0; e < d; ++e) row[e] += src[e];
  }
  return g;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  if (targets.size() != n) throw DimensionError("cross entropy: target count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw std::out_of_range("cross entropy: target id " + std::to_string(targets[i]) +
                              " outside vocab " + std::to_string(v));
    }
    const double* row = logits.raw() + i * v;
    double m = row[0];
    for (std::size_t j = 1; j < v; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) sum += std::exp(row[j] - m);
    total += (m + std::log(sum)) - row[targets[i]];
  }
  return total / static_cast<double>(n);
}

HeadLoss loss_and_head_backward(const Tensor& features, const Tensor& projection,
                                std::span<const int> targets, double grad_scale) {
  if (features.rank() != 2 || projection.rank() != 2 || features.dim(1) != projection.dim(1)) {
    throw DimensionError("head: features " + shape_string(features.shape()) +
                         " incompatible with projection " + shape_string(projection.shape()));
  }
  const std::size_t n = features.dim(0), v = projection.dim(0);
  Tensor logits = matmul(features, transpose(projection));
  HeadLoss out;
  out.loss = softmax_cross_entropy(logits, targets);
  // logits becomes d loss / d logits in place.
  const double inv_n = grad_scale / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = logits.raw() + i * v;
    double m = row[0];
    for (std::size_t j = 1; j < v; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    for (std::size_t j = 0; j < v; ++j) row[j] = row[j] / sum;
    row[targets[i]] -= 1.0;
    for (std::size_t j = 0; j < v; ++j) row[j] *= inv_n;
  }
  out.grad_projection = matmul(transpose(logits), features);
  out.grad_input = matmul(logits, projection);
  return out;
}

Tensor linear_forward(const Tensor& x, const Tensor& weight) { return matmul(x, weight); }

LinearGradients linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out) {
  return {matmul(grad_out, transpose(weight)), matmul(transpose(x), grad_out)};
}

Layer init_layer(LayerKind kind, const ModelDims& dims, SeededRng& rng) {
  const std::size_t d = dims.dim, f = dims.ffn_dim;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  Layer layer;
  layer.kind = kind;
  switch (kind) {
    case LayerKind::embedding:
      layer.params.push_back(rng_symmetric(rng, {dims.seq_len, d}, sd));
      break;
    case LayerKind::block:
      layer.params.resize(block_param::count);
      layer.params[block_param::ln1_gain] = Tensor::filled({d}, 1.0);
      layer.params[block_param::ln1_bias] = Tensor({d});
      layer.params[block_param::wq] = rng_symmetric(rng, {d, d}, sd);
      layer.params[block_param::wk] = rng_symmetric(rng, {d, d}, sd);
      layer.params[block_param::wv] = rng_symmetric(rng, {d, d}, sd);
      layer.params[block_param::wo] = rng_symmetric(rng, {d, d}, sd);
      layer.params[block_param::ln2_gain] = Tensor::filled({d}, 1.0);
      layer.params[block_param::ln2_bias] = Tensor({d});
      layer.params[block_param::w1] = rng_symmetric(rng, {d, f}, sd);
      layer.params[block_param::b1] = Tensor({f});
      layer.params[block_param::w2] = rng_symmetric(rng, {f, d}, sf);
      layer.params[block_param::b2] = Tensor({d});
      break;
    case LayerKind::head:
      layer.params.push_back(Tensor::filled({d}, 1.0));
      layer.params.push_back(Tensor({d}));
      break;
  }
  return layer;
}

Tensor init_vocab_matrix(const ModelDims& dims, SeededRng& rng) {
  return rng_symmetric(rng, {dims.vocab, dims.dim}, 1.0 / std::sqrt(static_cast<double>(dims.dim)));
}

ParamList zeros_like(const ParamList& params) {
  ParamList out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.shape());
  return out;
}

}  // namespace ouro
