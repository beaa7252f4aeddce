#include "grainsim/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "grainsim/errors.hpp"
#include "grainsim/kernels.hpp"

namespace grainsim::nn {

void Linear::init(int in_dim, int out_dim, Rng& rng) {
  in = in_dim;
  out = out_dim;
  const double bound = 1.0 / std::sqrt(double(in));
  w.resize(size_t(out) * in);
  b.assign(out, 0.0);
  for (double& x : w) x = rng.uniform(-bound, bound);
  for (double& x : b) x = rng.uniform(-bound, bound);
  gw.assign(w.size(), 0.0);
  gb.assign(b.size(), 0.0);
}

void Linear::zero_grad() {
  std::fill(gw.begin(), gw.end(), 0.0);
  std::fill(gb.begin(), gb.end(), 0.0);
}

Mlp::Mlp(const std::vector<int>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp needs >= 2 sizes");
  layers_.resize(sizes.size() - 1);
  for (size_t i = 0; i + 1 < sizes.size(); ++i)
    layers_[i].init(sizes[i], sizes[i + 1], rng);
  acts_.resize(layers_.size() + 1);
  pre_.resize(layers_.size());
}

const std::vector<double>& Mlp::forward(const std::vector<double>& x, int batch) {
  batch_ = batch;
  acts_[0] = x;
  const auto& k = kern::get();
  for (size_t l = 0; l < layers_.size(); ++l) {
    Linear& L = layers_[l];
    auto& y = pre_[l];
    y.assign(size_t(batch) * L.out, 0.0);
    for (int r = 0; r < batch; ++r)
      std::memcpy(y.data() + size_t(r) * L.out, L.b.data(), sizeof(double) * L.out);
    k.gemm_nt(batch, L.out, L.in, acts_[l].data(), L.w.data(), y.data());
    if (l + 1 < layers_.size()) {
      acts_[l + 1].resize(y.size());
      for (size_t i = 0; i < y.size(); ++i) acts_[l + 1][i] = y[i] > 0 ? y[i] : 0;
    } else {
      acts_[l + 1] = y;
    }
  }
  return acts_.back();
}

const std::vector<double>& Mlp::backward(const std::vector<double>& dy, int batch) {
  const auto& k = kern::get();
  std::vector<double> cur = dy;
  for (size_t l = layers_.size(); l-- > 0;) {
    Linear& L = layers_[l];
    if (l + 1 < layers_.size()) {  // relu gate (post-activation stored)
      const auto& h = acts_[l + 1];
      for (size_t i = 0; i < cur.size(); ++i)
        if (h[i] <= 0) cur[i] = 0;
    }
    k.gemm_tn(L.out, L.in, batch, cur.data(), acts_[l].data(), L.gw.data());
    for (int r = 0; r < batch; ++r)
      for (int o = 0; o < L.out; ++o) L.gb[o] += cur[size_t(r) * L.out + o];
    dx_.assign(size_t(batch) * L.in, 0.0);
    k.gemm_nn(batch, L.in, L.out, cur.data(), L.w.data(), dx_.data());
    cur = dx_;
  }
  dx_ = cur;
  return dx_;
}

void Mlp::zero_grad() {
  for (Linear& L : layers_) L.zero_grad();
}

size_t Mlp::param_count() const {
  size_t n = 0;
  for (const Linear& L : layers_) n += L.w.size() + L.b.size();
  return n;
}

void Mlp::blend_from(const Mlp& other, double keep) {
  for (size_t l = 0; l < layers_.size(); ++l) {
    Linear& a = layers_[l];
    const Linear& b = other.layers_[l];
    for (size_t i = 0; i < a.w.size(); ++i)
      a.w[i] = keep * a.w[i] + (1 - keep) * b.w[i];
    for (size_t i = 0; i < a.b.size(); ++i)
      a.b[i] = keep * a.b[i] + (1 - keep) * b.b[i];
  }
}

void Mlp::copy_from(const Mlp& other) {
  layers_ = other.layers_;
  acts_.resize(layers_.size() + 1);
  pre_.resize(layers_.size());
}

void Mlp::save(std::ostream& os) const {
  const uint32_t nl = static_cast<uint32_t>(layers_.size());
  os.write(reinterpret_cast<const char*>(&nl), sizeof(nl));
  for (const Linear& L : layers_) {
    const uint32_t dims[2] = {uint32_t(L.in), uint32_t(L.out)};
    os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    os.write(reinterpret_cast<const char*>(L.w.data()),
             std::streamsize(L.w.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(L.b.data()),
             std::streamsize(L.b.size() * sizeof(double)));
  }
}

void Mlp::load(std::istream& is) {
  uint32_t nl = 0;
  is.read(reinterpret_cast<char*>(&nl), sizeof(nl));
  layers_.resize(nl);
  for (Linear& L : layers_) {
    uint32_t dims[2];
    is.read(reinterpret_cast<char*>(dims), sizeof(dims));
    L.in = int(dims[0]);
    L.out = int(dims[1]);
    L.w.resize(size_t(L.in) * L.out);
    L.b.resize(L.out);
    is.read(reinterpret_cast<char*>(L.w.data()),
            std::streamsize(L.w.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(L.b.data()),
            std::streamsize(L.b.size() * sizeof(double)));
    L.gw.assign(L.w.size(), 0.0);
    L.gb.assign(L.b.size(), 0.0);
  }
  if (!is) throw ValidationError("network checkpoint truncated");
  acts_.resize(layers_.size() + 1);
  pre_.resize(layers_.size());
}

Adam::Adam(Mlp& net, double lr) : net_(&net), lr_(lr) {
  for (Linear& L : net.layers()) {
    mw_.emplace_back(L.w.size(), 0.0);
    vw_.emplace_back(L.w.size(), 0.0);
    mb_.emplace_back(L.b.size(), 0.0);
    vb_.emplace_back(L.b.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 / (1.0 - std::pow(b1, t_));
  const double bc2 = 1.0 / (1.0 - std::pow(b2, t_));
  const auto& k = kern::get();
  auto& ls = net_->layers();
  for (size_t l = 0; l < ls.size(); ++l) {
    k.adam_step(ls[l].w.size(), ls[l].w.data(), ls[l].gw.data(), mw_[l].data(),
                vw_[l].data(), lr_, b1, b2, eps, bc1, bc2);
    k.adam_step(ls[l].b.size(), ls[l].b.data(), ls[l].gb.data(), mb_[l].data(),
                vb_[l].data(), lr_, b1, b2, eps, bc1, bc2);
  }
}

void save_checkpoint(const std::string& path, const std::vector<const Mlp*>& nets,
                     double log_alpha) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("cannot open checkpoint '" + tmp + "'");
    os << "GSIMNET 1\n";
    os.write(reinterpret_cast<const char*>(&log_alpha), sizeof(log_alpha));
    const uint32_t n = static_cast<uint32_t>(nets.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const Mlp* net : nets) net->save(os);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ValidationError("cannot rename checkpoint into place: " + path);
}

void load_checkpoint(const std::string& path, const std::vector<Mlp*>& nets,
                     double* log_alpha) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint '" + path + "'");
  std::string magic, version;
  is >> magic >> version;
  is.get();
  if (magic != "GSIMNET") throw ValidationError("not a network checkpoint: " + path);
  double la = 0;
  is.read(reinterpret_cast<char*>(&la), sizeof(la));
  if (log_alpha) *log_alpha = la;
  uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (n != nets.size())
    throw ValidationError("checkpoint '" + path + "' holds " + std::to_string(n) +
                          " networks, expected " + std::to_string(nets.size()));
  for (Mlp* net : nets) net->load(is);
}

}  // namespace grainsim::nn
