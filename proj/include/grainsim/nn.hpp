#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "grainsim/rng.hpp"

namespace grainsim::nn {

// Fully-connected ReLU networks with explicit forward/backward passes,
// batch-major double buffers, and the shared gemm kernels underneath.

struct Linear {
  int in = 0, out = 0;
  std::vector<double> w, b;    // w is out x in, row-major
  std::vector<double> gw, gb;

  void init(int in_dim, int out_dim, Rng& rng);
  void zero_grad();
};

class Mlp {
 public:
  Mlp() = default;
  /// sizes = {input, hidden..., output}; ReLU between all but the last.
  Mlp(const std::vector<int>& sizes, Rng& rng);

  int input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  int output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

  /// x is batch*input. Returns batch*output (valid until next forward).
  const std::vector<double>& forward(const std::vector<double>& x, int batch);
  /// dy is batch*output. Accumulates parameter grads; returns dx.
  const std::vector<double>& backward(const std::vector<double>& dy, int batch);

  void zero_grad();
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

  size_t param_count() const;
  /// Polyak update: this = keep*this + (1-keep)*src.
  void blend_from(const Mlp& other, double keep);
  void copy_from(const Mlp& other);

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::vector<Linear> layers_;
  std::vector<std::vector<double>> acts_;  // acts_[0]=input copy, then post-relu
  std::vector<std::vector<double>> pre_;   // pre-activation per layer
  std::vector<double> dx_;
  int batch_ = 0;
};

/// Adam over a whole Mlp.
class Adam {
 public:
  Adam() = default;
  Adam(Mlp& net, double lr);
  void step();
  void set_lr(double lr) { lr_ = lr; }

 private:
  Mlp* net_ = nullptr;
  double lr_ = 1e-3;
  int t_ = 0;
  std::vector<std::vector<double>> mw_, vw_, mb_, vb_;
};

/// Versioned binary checkpoint (shape header + raw doubles).
void save_checkpoint(const std::string& path, const std::vector<const Mlp*>& nets,
                     double log_alpha);
void load_checkpoint(const std::string& path, const std::vector<Mlp*>& nets,
                     double* log_alpha);

}  // namespace grainsim::nn
