#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "se/grad/tape.hpp"
#include "se/io/container.hpp"
#include "se/matrix.hpp"

namespace se::flow {

/// Log-scales of coupling and autoregressive layers are squashed to
/// (-kLogScaleBound, kLogScaleBound) by bound * tanh(raw / bound).
inline constexpr double kLogScaleBound = 7.0;

struct NamedTensor {
  std::string name;
  grad::Tensor value;
  bool trainable = true;
};

/// Tape nodes produced by recording a flow on a batch (one window per row).
struct FlowOutput {
  grad::Var z;        // [B, D]
  grad::Var log_det;  // [B, 1], log |det d z / d x| per row
};

/// Latent code of a single window.
struct LatentCode {
  std::vector<double> z;
  double log_det = 0.0;
};

/// Latent codes of a batch of windows.
struct BatchLatent {
  Matrix z;
  Vector log_det;
};

/// An invertible map x -> z with a tractable Jacobian determinant. The
/// forward direction is recorded on a tape so that it can be differentiated
/// with respect to both the input and the parameters; the inverse is
/// evaluated numerically.
///
/// A model's tensors are the trainable parameters plus fixed buffers
/// (permutations, masks, signs). `bind` places them on a tape, as
/// variables when the caller wants parameter gradients and as constants
/// otherwise.
class Flow {
 public:
  virtual ~Flow() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::map<std::string, std::string> topology() const = 0;
  virtual std::unique_ptr<Flow> clone() const = 0;

  /// Records x -> z for a batch x of shape [B, dim()].
  virtual FlowOutput record_forward(grad::Tape& tape, grad::Var x, std::span<const grad::Var> bound) const = 0;

  /// z -> x for a batch of latent rows.
  virtual Matrix inverse(const Matrix& z) const = 0;

  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  /// Mutable access; invalidates derived caches.
  std::vector<NamedTensor>& mutable_tensors() {
    ++version_;
    return tensors_;
  }
  const grad::Tensor& tensor(const std::string& name) const;
  std::uint64_t version() const { return version_; }

  std::vector<grad::Var> bind(grad::Tape& tape, bool trainable) const;

  /// Trainable tensors, in storage order.
  std::vector<grad::Tensor*> trainable_parameters();
  std::size_t parameter_count() const;

 protected:
  std::size_t add_tensor(std::string name, grad::Tensor value, bool trainable);

  std::vector<NamedTensor> tensors_;
  std::uint64_t version_ = 0;
};

/// Records per-row log p(x) = log N(z; 0, I) + log|det dz/dx| as a [B, 1] node.
grad::Var record_log_likelihood(const Flow& model, grad::Tape& tape, grad::Var x, std::span<const grad::Var> bound);

LatentCode forward(const Flow& model, std::span<const double> x);
BatchLatent forward(const Flow& model, const Matrix& x);

std::vector<double> inverse(const Flow& model, std::span<const double> z);
Matrix inverse(const Flow& model, const Matrix& z);

double log_likelihood(const Flow& model, std::span<const double> x);
Vector log_likelihood(const Flow& model, const Matrix& x);

/// d log p(x) / dx; parameters are bound as constants and left untouched.
std::vector<double> grad_loglik_wrt_input(const Flow& model, std::span<const double> x);
Matrix grad_loglik_wrt_input(const Flow& model, const Matrix& x);

/// log N(z; 0, I) for a dim-dimensional standard normal at the origin.
double standard_normal_log_norm(std::size_t dim);

/// Serialises topology and tensors. Extra attributes are stored alongside.
io::Container to_container(const Flow& model, const std::map<std::string, std::string>& extra = {});
/// Rebuilds a CouplingFlow or MafFlow from a container written by to_container.
std::unique_ptr<Flow> from_container(const io::Container& container);

void save_flow(const std::filesystem::path& path, const Flow& model);
std::unique_ptr<Flow> load_flow(const std::filesystem::path& path);

}  // namespace se::flow
