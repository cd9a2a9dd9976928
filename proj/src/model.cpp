#include "shopagent/model.hpp"

#include <cmath>

namespace shopagent::model {

template <typename T>
std::size_t ModelParameters<T>::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.data.size();
  return n;
}

template <typename T>
bool ModelParameters<T>::all_finite() const {
  for (const auto& t : tensors)
    for (T x : t.data)
      if (!std::isfinite(x)) return false;
  return true;
}

template <typename T>
GradientBuffers<T> ModelParameters<T>::zeros_like() const {
  GradientBuffers<T> g;
  g.reserve(tensors.size());
  for (const auto& t : tensors) g.emplace_back(t.data.size(), T(0));
  return g;
}

template <typename T>
std::uint64_t ModelParameters<T>::architecture_hash() const {
  std::string desc = "shopagent-policy-v1;";
  for (const auto& t : tensors)
    desc += t.name + ":" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + ";";
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : desc) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
ModelParameters<T> make_parameters(const ModelConfig& cfg) {
  require(cfg.vocab_size > Vocabulary::kNumSpecials, "model needs a vocabulary");
  require(cfg.dim > 0 && cfg.value_hidden > 0, "model dimensions must be positive");
  const int N = cfg.vocab_size, d = cfg.dim, H = cfg.value_hidden;
  ModelParameters<T> p;
  p.config = cfg;
  auto add = [&](const char* name, int rows, int cols) {
    p.tensors.push_back(Tensor<T>{name, rows, cols,
                                  std::vector<T>(static_cast<std::size_t>(rows) * cols, T(0))});
  };
  add("embedding", N, d);
  add("segment_embedding", kNumSegments, d);
  add("encoder.weight", d, d);
  add("encoder.bias", 1, d);
  add("encoder.pool_query", 1, d);
  add("decoder.init_weight", d, d);
  add("decoder.init_bias", 1, d);
  add("decoder.state_weight", d, d);
  add("decoder.input_weight", d, d);
  add("decoder.bias", 1, d);
  add("decoder.query_weight", d, d);
  add("decoder.out_weight", 2 * d, d);
  add("decoder.out_bias", 1, d);
  add("lm_head.weight", d, N);
  add("lm_head.bias", 1, N);
  add("lm_head.copy_weight", d, d);
  add("value_head.weight1", d, H);
  add("value_head.bias1", 1, H);
  add("value_head.weight2", H, 1);
  add("value_head.bias2", 1, 1);
  return p;
}

template <typename T>
ModelParameters<T> initialize_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParameters<T> p = make_parameters<T>(cfg);
  Rng rng(mix_seed(seed, 0x1417));
  for (auto& t : p.tensors)
    for (auto& x : t.data) x = static_cast<T>(uniform_real(rng, -kInitScale, kInitScale));
  return p;
}

template <typename T>
typename Forward<T>::Var Forward<T>::p(ParamIndex i) {
  const Tensor<T>& t = params_[i];
  return tape_.param(i, t.data.data(), t.rows, t.cols);
}

template <typename T>
Forward<T>::Forward(const ModelParameters<T>& params, Tape<T>& tape)
    : params_(params), tape_(tape), unit_(tape.scalar(T(1))) {}

template <typename T>
typename Forward<T>::Encoded Forward<T>::encode(const ContextEncoding& context) {
  require(!context.token_ids.empty(), "empty context");
  require(context.segments.size() == context.token_ids.size(), "context segments misaligned");
  Encoded enc;
  enc.ids.assign(context.token_ids.begin(), context.token_ids.end());
  std::vector<int> segs(context.segments.begin(), context.segments.end());
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(params_.config.dim));

  Var x = tape_.add(tape_.gather_rows(p(kEmbedding), enc.ids), tape_.gather_rows(p(kSegmentEmb), segs));
  enc.states = tape_.tanh(tape_.add_row_bias(tape_.matmul(x, p(kEncW)), p(kEncB)));
  Var weights = tape_.softmax(tape_.scale(tape_.matvec(enc.states, p(kEncQuery)), inv_sqrt_d));
  enc.summary = tape_.vecmat(weights, enc.states);
  return enc;
}

template <typename T>
typename Forward<T>::Step Forward<T>::decode(const Encoded& enc, Var state, std::span<const int> tokens) {
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(params_.config.dim));
  Var e = tape_.gather_rows(p(kEmbedding), tokens);
  Var pre = tape_.add(tape_.matmul(state, p(kDecStateW)), tape_.matmul(e, p(kDecInputW)));
  Var s = tape_.tanh(tape_.add_row_bias(pre, p(kDecB)));

  Var q = tape_.matmul(s, p(kDecQueryW));
  Var attn = tape_.softmax(tape_.scale(tape_.matmul_nt(q, enc.states), inv_sqrt_d));
  Var ctx = tape_.matmul(attn, enc.states);
  Var o = tape_.tanh(tape_.add_row_bias(tape_.matmul(tape_.concat(s, ctx), p(kDecOutW)), p(kDecOutB)));

  // Every context token adds its copy score (o W_c) . h_i to its own logit.
  Var copy = tape_.matmul_nt(tape_.matmul(o, p(kCopyW)), enc.states);
  Var logits = tape_.add_row_bias(tape_.matmul(o, p(kLmW)), p(kLmB));
  logits = tape_.scatter_add(logits, copy, enc.ids, unit_);
  return Step{s, tape_.log_softmax(logits)};
}

template <typename T>
typename Forward<T>::Step Forward<T>::start(const Encoded& enc) {
  Var s0 = tape_.tanh(tape_.add_row_bias(tape_.matmul(enc.summary, p(kDecInitW)), p(kDecInitB)));
  const int sep[1] = {Vocabulary::kSep};
  return decode(enc, s0, sep);
}

template <typename T>
typename Forward<T>::Step Forward<T>::advance(const Encoded& enc, const Step& prev, int token) {
  require(token >= 0 && token < params_.config.vocab_size, "token id out of range");
  require(tape_.rows(prev.state) == 1, "advance() continues a single sequence");
  const int ids[1] = {token};
  return decode(enc, prev.state, ids);
}

template <typename T>
typename Forward<T>::Step Forward<T>::advance_rows(const Encoded& enc, const Step& prev,
                                                   std::span<const int> parents, std::span<const int> tokens) {
  require(!parents.empty() && parents.size() == tokens.size(), "advance_rows: one token per parent row");
  for (int t : tokens) require(t >= 0 && t < params_.config.vocab_size, "token id out of range");
  return decode(enc, tape_.gather_rows(prev.state, parents), tokens);
}

template <typename T>
typename Forward<T>::Var Forward<T>::value(const Encoded& enc) {
  Var h = tape_.tanh(tape_.add_row_bias(tape_.matmul(enc.summary, p(kValW1)), p(kValB1)));
  return tape_.add_row_bias(tape_.matmul(h, p(kValW2)), p(kValB2));
}

template <typename T>
std::vector<T> token_logprobs(const ModelParameters<T>& params, const ContextEncoding& context,
                              const std::vector<int>& prefix) {
  for (int id : context.token_ids)
    require(id >= 0 && id < params.config.vocab_size, "context token id out of range");
  for (int id : prefix) require(id >= 0 && id < params.config.vocab_size, "prefix token id out of range");
  Tape<T> tape(false);
  Forward<T> fwd(params, tape);
  auto enc = fwd.encode(context);
  auto step = fwd.start(enc);
  for (int id : prefix) step = fwd.advance(enc, step, id);
  auto v = tape.values(step.logprobs);
  return {v.begin(), v.end()};
}

template <typename T>
T estimate_value(const ModelParameters<T>& params, const ContextEncoding& context) {
  for (int id : context.token_ids)
    require(id >= 0 && id < params.config.vocab_size, "context token id out of range");
  Tape<T> tape(false);
  Forward<T> fwd(params, tape);
  auto enc = fwd.encode(context);
  return tape.item(fwd.value(enc));
}

template <typename T>
double grad_norm(const GradientBuffers<T>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (T x : g) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

template <typename T>
double clip_grad_norm(GradientBuffers<T>& grads, double max_norm) {
  const double norm = grad_norm(grads);
  const double coef = max_norm / (norm + 1e-6);
  if (coef < 1.0) {
    for (auto& g : grads)
      for (T& x : g) x = static_cast<T>(x * coef);
  }
  return norm;
}

#define SHOPAGENT_INSTANTIATE(T)                                                              \
  template struct ModelParameters<T>;                                                         \
  template ModelParameters<T> make_parameters<T>(const ModelConfig&);                        \
  template ModelParameters<T> initialize_parameters<T>(const ModelConfig&, std::uint64_t);   \
  template class Forward<T>;                                                                  \
  template std::vector<T> token_logprobs<T>(const ModelParameters<T>&, const ContextEncoding&, \
                                            const std::vector<int>&);                         \
  template T estimate_value<T>(const ModelParameters<T>&, const ContextEncoding&);           \
  template double grad_norm<T>(const GradientBuffers<T>&);                                    \
  template double clip_grad_norm<T>(GradientBuffers<T>&, double);

SHOPAGENT_INSTANTIATE(float)
SHOPAGENT_INSTANTIATE(double)
#undef SHOPAGENT_INSTANTIATE

}  // namespace shopagent::model
