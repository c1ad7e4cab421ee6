#include "psi/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace psi {

namespace {

constexpr float kLnEps = 1e-5f;
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)

float gelu_f(float x) {
  float t = std::tanh(kGeluC * (x + 0.044715f * x * x * x));
  return 0.5f * x * (1.0f + t);
}

float gelu_grad_f(float x) {
  float u = kGeluC * (x + 0.044715f * x * x * x);
  float t = std::tanh(u);
  float sech2 = 1.0f - t * t;
  return 0.5f * (1.0f + t) +
         0.5f * x * sech2 * kGeluC * (1.0f + 3.0f * 0.044715f * x * x);
}

// Row-wise layer norm. Stores the normalized rows and 1/std for backprop.
void ln_forward(const Eigen::MatrixXf& x, const Eigen::MatrixXf& g,
                const Eigen::MatrixXf& b, Eigen::MatrixXf& x_hat,
                Eigen::VectorXf& rstd, Eigen::MatrixXf& out) {
  const int rows = static_cast<int>(x.rows());
  const int w = static_cast<int>(x.cols());
  x_hat.resize(rows, w);
  rstd.resize(rows);
  out.resize(rows, w);
  for (int i = 0; i < rows; ++i) {
    float mu = x.row(i).mean();
    float var = (x.row(i).array() - mu).square().sum() / w;
    float rs = 1.0f / std::sqrt(var + kLnEps);
    rstd(i) = rs;
    x_hat.row(i) = (x.row(i).array() - mu) * rs;
    out.row(i) = x_hat.row(i).cwiseProduct(g.row(0)) + b.row(0);
  }
}

// dL/dx for y = g*x_hat + b; accumulates dG/dB.
Eigen::MatrixXf ln_backward(const Eigen::MatrixXf& dy,
                            const Eigen::MatrixXf& x_hat,
                            const Eigen::VectorXf& rstd,
                            const Eigen::MatrixXf& g, Eigen::MatrixXf& dg,
                            Eigen::MatrixXf& db) {
  const int rows = static_cast<int>(dy.rows());
  const int w = static_cast<int>(dy.cols());
  Eigen::MatrixXf dx(rows, w);
  for (int i = 0; i < rows; ++i) {
    dg.row(0) += dy.row(i).cwiseProduct(x_hat.row(i));
    db.row(0) += dy.row(i);
    Eigen::RowVectorXf dxhat = dy.row(i).cwiseProduct(g.row(0));
    float m1 = dxhat.mean();
    float m2 = dxhat.cwiseProduct(x_hat.row(i)).mean();
    dx.row(i) =
        (dxhat.array() - m1 - x_hat.row(i).array() * m2) * rstd(i);
  }
  return dx;
}

Eigen::RowVectorXf ln_row(const Eigen::RowVectorXf& x, const Eigen::MatrixXf& g,
                          const Eigen::MatrixXf& b) {
  const int w = static_cast<int>(x.cols());
  float mu = x.mean();
  float var = (x.array() - mu).square().sum() / w;
  float rs = 1.0f / std::sqrt(var + kLnEps);
  Eigen::RowVectorXf x_hat = (x.array() - mu) * rs;
  return x_hat.cwiseProduct(g.row(0)) + b.row(0);
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"width", c.width},
                     {"heads", c.heads},
                     {"context", c.context},
                     {"vocab", c.vocab},
                     {"pointer_count", c.pointer_count},
                     {"init_std", c.init_std},
                     {"fused_pointer_embedding", c.fused_pointer_embedding}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("layers").get_to(c.layers);
  j.at("width").get_to(c.width);
  j.at("heads").get_to(c.heads);
  j.at("context").get_to(c.context);
  j.at("vocab").get_to(c.vocab);
  j.at("pointer_count").get_to(c.pointer_count);
  j.at("init_std").get_to(c.init_std);
  j.at("fused_pointer_embedding").get_to(c.fused_pointer_embedding);
}

float WsdSchedule::lr_at(int step) const {
  if (step < 1 || step > total_steps())
    throw InvariantError("lr_at: step outside the schedule");
  if (step <= warmup)
    return peak_lr * static_cast<float>(step) / static_cast<float>(warmup);
  if (step <= stable_end()) return peak_lr;
  // Linear ramp from peak down to peak/decay on the last step; never zero,
  // so every update still moves the weights.
  return peak_lr * static_cast<float>(total_steps() - step + 1) /
         static_cast<float>(decay);
}

void to_json(nlohmann::json& j, const WsdSchedule& s) {
  j = nlohmann::json{{"warmup", s.warmup},
                     {"stable", s.stable},
                     {"decay", s.decay},
                     {"peak_lr", s.peak_lr}};
}

void from_json(const nlohmann::json& j, WsdSchedule& s) {
  j.at("warmup").get_to(s.warmup);
  j.at("stable").get_to(s.stable);
  j.at("decay").get_to(s.decay);
  j.at("peak_lr").get_to(s.peak_lr);
}

LrasModel::LrasModel(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg_.width % cfg_.heads != 0)
    throw ConfigError("width must be divisible by heads");
  if (cfg_.layers < 1 || cfg_.width < 4 || cfg_.context < 2)
    throw ConfigError("degenerate model shape");
  if (cfg_.pointer_count == 0)
    throw ConfigError("pointer_count must be set before building the model");

  auto add = [&](const std::string& name, int rows, int cols) {
    index_[name] = static_cast<int>(params_.size());
    params_.push_back(Tensor{name, {rows, cols},
                             Eigen::MatrixXf::Zero(rows, cols)});
  };
  add("embed", cfg_.embed_rows(), cfg_.width);
  add("pos", cfg_.context, cfg_.width);
  for (int l = 0; l < cfg_.layers; ++l) {
    std::string pre = "l" + std::to_string(l) + ".";
    add(pre + "ln1.g", 1, cfg_.width);
    add(pre + "ln1.b", 1, cfg_.width);
    add(pre + "attn.wq", cfg_.width, cfg_.width);
    add(pre + "attn.wk", cfg_.width, cfg_.width);
    add(pre + "attn.wv", cfg_.width, cfg_.width);
    add(pre + "attn.wo", cfg_.width, cfg_.width);
    add(pre + "ln2.g", 1, cfg_.width);
    add(pre + "ln2.b", 1, cfg_.width);
    add(pre + "mlp.w1", cfg_.width, 4 * cfg_.width);
    add(pre + "mlp.b1", 1, 4 * cfg_.width);
    add(pre + "mlp.w2", 4 * cfg_.width, cfg_.width);
    add(pre + "mlp.b2", 1, cfg_.width);
  }
  add("lnf.g", 1, cfg_.width);
  add("lnf.b", 1, cfg_.width);
  add("head", cfg_.width, cfg_.vocab);
}

const Eigen::MatrixXf& LrasModel::p(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvariantError("unknown parameter " + name);
  return params_[it->second].v;
}

Eigen::MatrixXf& LrasModel::p(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvariantError("unknown parameter " + name);
  return params_[it->second].v;
}

void LrasModel::init_params(Rng& rng) {
  for (Tensor& t : params_) {
    bool is_gain = t.name.ends_with(".g");
    bool is_bias = t.name.ends_with(".b") || t.name.ends_with(".b1") ||
                   t.name.ends_with(".b2");
    if (is_gain) {
      t.v.setOnes();
    } else if (is_bias) {
      t.v.setZero();
    } else {
      for (Eigen::Index i = 0; i < t.v.size(); ++i)
        t.v.data()[i] = rng.normal_f32() * cfg_.init_std;
    }
  }
}

std::vector<Eigen::MatrixXf> LrasModel::zero_like_params() const {
  std::vector<Eigen::MatrixXf> out;
  out.reserve(params_.size());
  for (const Tensor& t : params_)
    out.push_back(Eigen::MatrixXf::Zero(t.v.rows(), t.v.cols()));
  return out;
}

LrasModel::EncodedSeq LrasModel::encode_sequence(const TokenSequence& seq) const {
  const size_t n = seq.items.size();
  if (n == 0) throw MalformedSequenceError("empty token sequence");
  if (n > static_cast<size_t>(cfg_.context))
    throw ContextOverflowError("sequence longer than the model context");
  EncodedSeq es;
  es.main.resize(n);
  es.aux.assign(n, -1);
  es.target.assign(n, -1);
  for (size_t i = 0; i < n; ++i) {
    bool is_pointer = i % 2 == 0;
    uint32_t item = seq.items[i];
    if (is_pointer) {
      if (item >= cfg_.pointer_count)
        throw MalformedSequenceError("pointer id outside the registry");
      es.main[i] = static_cast<int>(cfg_.vocab + item);
      if (i + 1 < n) es.target[i] = static_cast<int>(seq.items[i + 1]);
    } else {
      if (item >= cfg_.vocab)
        throw MalformedSequenceError("value code outside the vocabulary");
      es.main[i] = static_cast<int>(item);
      if (cfg_.fused_pointer_embedding)
        es.aux[i] = static_cast<int>(cfg_.vocab + seq.items[i - 1]);
    }
  }
  return es;
}

struct LrasModel::Workspace {
  int T{0};
  Eigen::MatrixXf x0;
  struct Layer {
    Eigen::MatrixXf x_in;
    Eigen::MatrixXf a_hat, a;
    Eigen::VectorXf ln1_rstd;
    Eigen::MatrixXf q, k, v;
    std::vector<Eigen::MatrixXf> probs;
    Eigen::MatrixXf o;
    Eigen::MatrixXf x_mid;
    Eigen::MatrixXf b_hat, b;
    Eigen::VectorXf ln2_rstd;
    Eigen::MatrixXf h1, g;
  };
  std::vector<Layer> layers;
  Eigen::MatrixXf x_last;
  Eigen::MatrixXf f_hat, f;
  Eigen::VectorXf lnf_rstd;
  Eigen::MatrixXf logits;
};

void LrasModel::forward(const EncodedSeq& es, Workspace& ws) const {
  const int T = static_cast<int>(es.main.size());
  const int W = cfg_.width;
  const int H = cfg_.heads;
  const int hd = W / H;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  const Eigen::MatrixXf& embed = p("embed");
  const Eigen::MatrixXf& pos = p("pos");

  ws.T = T;
  ws.x0.resize(T, W);
  for (int i = 0; i < T; ++i) {
    ws.x0.row(i) = embed.row(es.main[i]) + pos.row(i);
    if (es.aux[i] >= 0) ws.x0.row(i) += embed.row(es.aux[i]);
  }

  ws.layers.assign(cfg_.layers, Workspace::Layer{});
  Eigen::MatrixXf x = ws.x0;
  for (int l = 0; l < cfg_.layers; ++l) {
    auto& L = ws.layers[l];
    std::string pre = "l" + std::to_string(l) + ".";
    L.x_in = x;
    ln_forward(x, p(pre + "ln1.g"), p(pre + "ln1.b"), L.a_hat, L.ln1_rstd, L.a);
    L.q.noalias() = L.a * p(pre + "attn.wq");
    L.k.noalias() = L.a * p(pre + "attn.wk");
    L.v.noalias() = L.a * p(pre + "attn.wv");
    L.o.resize(T, W);
    L.probs.assign(H, Eigen::MatrixXf());
    for (int h = 0; h < H; ++h) {
      auto qh = L.q.middleCols(h * hd, hd);
      auto kh = L.k.middleCols(h * hd, hd);
      auto vh = L.v.middleCols(h * hd, hd);
      Eigen::MatrixXf s = qh * kh.transpose() * scale;
      Eigen::MatrixXf& pm = L.probs[h];
      pm.setZero(T, T);
      for (int i = 0; i < T; ++i) {
        float mx = s(i, 0);
        for (int j = 1; j <= i; ++j) mx = std::max(mx, s(i, j));
        float denom = 0.0f;
        for (int j = 0; j <= i; ++j) {
          float e = std::exp(s(i, j) - mx);
          pm(i, j) = e;
          denom += e;
        }
        for (int j = 0; j <= i; ++j) pm(i, j) /= denom;
      }
      L.o.middleCols(h * hd, hd).noalias() = pm * vh;
    }
    x.noalias() += L.o * p(pre + "attn.wo");
    L.x_mid = x;
    ln_forward(x, p(pre + "ln2.g"), p(pre + "ln2.b"), L.b_hat, L.ln2_rstd, L.b);
    L.h1.noalias() = L.b * p(pre + "mlp.w1");
    L.h1.rowwise() += p(pre + "mlp.b1").row(0);
    L.g = L.h1.unaryExpr([](float v) { return gelu_f(v); });
    x.noalias() += L.g * p(pre + "mlp.w2");
    x.rowwise() += p(pre + "mlp.b2").row(0);
  }
  ws.x_last = x;
  ln_forward(x, p("lnf.g"), p("lnf.b"), ws.f_hat, ws.lnf_rstd, ws.f);
  ws.logits.noalias() = ws.f * p("head");
}

double LrasModel::loss_and_grad(const TokenSequence& seq,
                                std::vector<Eigen::MatrixXf>& grads,
                                int* rows) const {
  if (grads.size() != params_.size())
    throw ShapeError("gradient buffer count mismatch");
  EncodedSeq es = encode_sequence(seq);
  Workspace ws;
  forward(es, ws);
  const int T = ws.T;
  const int W = cfg_.width;
  const int H = cfg_.heads;
  const int hd = W / H;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  int supervised = 0;
  for (int i = 0; i < T; ++i)
    if (es.target[i] >= 0) ++supervised;
  if (rows) *rows = supervised;
  if (supervised == 0) throw MalformedSequenceError("no supervised positions");

  auto g = [&](const std::string& name) -> Eigen::MatrixXf& {
    return grads[index_.at(name)];
  };

  // Softmax cross-entropy at supervised positions.
  double loss = 0.0;
  Eigen::MatrixXf dlogits = Eigen::MatrixXf::Zero(T, cfg_.vocab);
  const float inv_n = 1.0f / static_cast<float>(supervised);
  for (int i = 0; i < T; ++i) {
    if (es.target[i] < 0) continue;
    float mx = ws.logits.row(i).maxCoeff();
    Eigen::RowVectorXf e = (ws.logits.row(i).array() - mx).exp();
    float denom = e.sum();
    loss -= std::log(static_cast<double>(e(es.target[i]) / denom));
    dlogits.row(i) = e / denom * inv_n;
    dlogits(i, es.target[i]) -= inv_n;
  }
  loss /= supervised;

  g("head").noalias() += ws.f.transpose() * dlogits;
  Eigen::MatrixXf df = dlogits * p("head").transpose();
  Eigen::MatrixXf dx =
      ln_backward(df, ws.f_hat, ws.lnf_rstd, p("lnf.g"), g("lnf.g"), g("lnf.b"));

  for (int l = cfg_.layers - 1; l >= 0; --l) {
    auto& L = ws.layers[l];
    std::string pre = "l" + std::to_string(l) + ".";

    // MLP block.
    Eigen::MatrixXf dg_act = dx * p(pre + "mlp.w2").transpose();
    g(pre + "mlp.w2").noalias() += L.g.transpose() * dx;
    g(pre + "mlp.b2").row(0) += dx.colwise().sum();
    Eigen::MatrixXf dh1 =
        dg_act.cwiseProduct(L.h1.unaryExpr([](float v) { return gelu_grad_f(v); }));
    g(pre + "mlp.w1").noalias() += L.b.transpose() * dh1;
    g(pre + "mlp.b1").row(0) += dh1.colwise().sum();
    Eigen::MatrixXf db = dh1 * p(pre + "mlp.w1").transpose();
    dx += ln_backward(db, L.b_hat, L.ln2_rstd, p(pre + "ln2.g"),
                      g(pre + "ln2.g"), g(pre + "ln2.b"));

    // Attention block.
    Eigen::MatrixXf dattn = dx;  // residual carries dx through unchanged
    g(pre + "attn.wo").noalias() += L.o.transpose() * dattn;
    Eigen::MatrixXf do_ = dattn * p(pre + "attn.wo").transpose();
    Eigen::MatrixXf dq(T, W), dk(T, W), dv(T, W);
    for (int h = 0; h < H; ++h) {
      auto vh = L.v.middleCols(h * hd, hd);
      auto qh = L.q.middleCols(h * hd, hd);
      auto kh = L.k.middleCols(h * hd, hd);
      auto doh = do_.middleCols(h * hd, hd);
      const Eigen::MatrixXf& pm = L.probs[h];
      Eigen::MatrixXf dp = doh * vh.transpose();
      dv.middleCols(h * hd, hd).noalias() = pm.transpose() * doh;
      Eigen::MatrixXf ds(T, T);
      for (int i = 0; i < T; ++i) {
        float dot = 0.0f;
        for (int j = 0; j <= i; ++j) dot += dp(i, j) * pm(i, j);
        for (int j = 0; j < T; ++j)
          ds(i, j) = j <= i ? pm(i, j) * (dp(i, j) - dot) : 0.0f;
      }
      dq.middleCols(h * hd, hd).noalias() = ds * kh * scale;
      dk.middleCols(h * hd, hd).noalias() = ds.transpose() * qh * scale;
    }
    g(pre + "attn.wq").noalias() += L.a.transpose() * dq;
    g(pre + "attn.wk").noalias() += L.a.transpose() * dk;
    g(pre + "attn.wv").noalias() += L.a.transpose() * dv;
    Eigen::MatrixXf da = dq * p(pre + "attn.wq").transpose() +
                         dk * p(pre + "attn.wk").transpose() +
                         dv * p(pre + "attn.wv").transpose();
    dx += ln_backward(da, L.a_hat, L.ln1_rstd, p(pre + "ln1.g"),
                      g(pre + "ln1.g"), g(pre + "ln1.b"));
  }

  Eigen::MatrixXf& dembed = g("embed");
  Eigen::MatrixXf& dpos = g("pos");
  for (int i = 0; i < T; ++i) {
    dembed.row(es.main[i]) += dx.row(i);
    if (es.aux[i] >= 0) dembed.row(es.aux[i]) += dx.row(i);
    dpos.row(i) += dx.row(i);
  }
  return loss;
}

double LrasModel::loss_only(const TokenSequence& seq, int* rows) const {
  EncodedSeq es = encode_sequence(seq);
  Workspace ws;
  forward(es, ws);
  int supervised = 0;
  double loss = 0.0;
  for (int i = 0; i < ws.T; ++i) {
    if (es.target[i] < 0) continue;
    ++supervised;
    float mx = ws.logits.row(i).maxCoeff();
    Eigen::RowVectorXf e = (ws.logits.row(i).array() - mx).exp();
    loss -= std::log(static_cast<double>(e(es.target[i]) / e.sum()));
  }
  if (rows) *rows = supervised;
  if (supervised == 0) throw MalformedSequenceError("no supervised positions");
  return loss / supervised;
}

LrasModel::Cache LrasModel::make_cache() const {
  Cache c;
  c.k.assign(cfg_.layers, Eigen::MatrixXf::Zero(cfg_.context, cfg_.width));
  c.v.assign(cfg_.layers, Eigen::MatrixXf::Zero(cfg_.context, cfg_.width));
  c.len = 0;
  return c;
}

Eigen::VectorXf LrasModel::step_logits(const Cache& cache, int main_id,
                                       int aux_id, Eigen::MatrixXf* k_out,
                                       Eigen::MatrixXf* v_out) const {
  if (cache.len >= cfg_.context)
    throw ContextOverflowError("inference cache is full");
  if (main_id < 0 || main_id >= cfg_.embed_rows() ||
      (aux_id >= 0 && aux_id >= cfg_.embed_rows()))
    throw MalformedSequenceError("embedding row out of range");
  const int W = cfg_.width;
  const int H = cfg_.heads;
  const int hd = W / H;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  const int t = cache.len;

  if (k_out) k_out->resize(cfg_.layers, W);
  if (v_out) v_out->resize(cfg_.layers, W);

  Eigen::RowVectorXf x = p("embed").row(main_id) + p("pos").row(t);
  if (aux_id >= 0) x += p("embed").row(aux_id);

  for (int l = 0; l < cfg_.layers; ++l) {
    std::string pre = "l" + std::to_string(l) + ".";
    Eigen::RowVectorXf a = ln_row(x, p(pre + "ln1.g"), p(pre + "ln1.b"));
    Eigen::RowVectorXf q = a * p(pre + "attn.wq");
    Eigen::RowVectorXf k_new = a * p(pre + "attn.wk");
    Eigen::RowVectorXf v_new = a * p(pre + "attn.wv");
    if (k_out) k_out->row(l) = k_new;
    if (v_out) v_out->row(l) = v_new;

    Eigen::RowVectorXf o(W);
    for (int h = 0; h < H; ++h) {
      auto qh = q.segment(h * hd, hd);
      // Scores over the stored history plus the new token itself.
      Eigen::VectorXf s(t + 1);
      for (int j = 0; j < t; ++j)
        s(j) = qh.dot(cache.k[l].row(j).segment(h * hd, hd)) * scale;
      s(t) = qh.dot(k_new.segment(h * hd, hd)) * scale;
      float mx = s.maxCoeff();
      Eigen::VectorXf e = (s.array() - mx).exp();
      float denom = e.sum();
      Eigen::RowVectorXf oh = Eigen::RowVectorXf::Zero(hd);
      for (int j = 0; j < t; ++j)
        oh += e(j) / denom * cache.v[l].row(j).segment(h * hd, hd);
      oh += e(t) / denom * v_new.segment(h * hd, hd);
      o.segment(h * hd, hd) = oh;
    }
    x += o * p(pre + "attn.wo");
    Eigen::RowVectorXf b = ln_row(x, p(pre + "ln2.g"), p(pre + "ln2.b"));
    Eigen::RowVectorXf h1 = b * p(pre + "mlp.w1") + p(pre + "mlp.b1").row(0);
    Eigen::RowVectorXf gact = h1.unaryExpr([](float v) { return gelu_f(v); });
    x += gact * p(pre + "mlp.w2") + p(pre + "mlp.b2").row(0);
  }
  Eigen::RowVectorXf f = ln_row(x, p("lnf.g"), p("lnf.b"));
  return (f * p("head")).transpose();
}

Eigen::VectorXf LrasModel::extend(Cache& cache, int main_id, int aux_id) const {
  Eigen::MatrixXf k_new, v_new;
  Eigen::VectorXf logits = step_logits(cache, main_id, aux_id, &k_new, &v_new);
  for (int l = 0; l < cfg_.layers; ++l) {
    cache.k[l].row(cache.len) = k_new.row(l);
    cache.v[l].row(cache.len) = v_new.row(l);
  }
  cache.len += 1;
  return logits;
}

Eigen::VectorXf LrasModel::peek(const Cache& cache, int main_id,
                                int aux_id) const {
  return step_logits(cache, main_id, aux_id, nullptr, nullptr);
}

}  // namespace psi
