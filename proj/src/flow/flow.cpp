#include "se/flow/flow.hpp"

#include <cmath>
#include <numbers>

#include "se/errors.hpp"
#include "se/flow/coupling_flow.hpp"
#include "se/flow/maf.hpp"

namespace se::flow {

namespace {

void check_dim(const Flow& model, std::size_t got, const char* who) {
  if (got != model.dim()) {
    throw DimensionError(std::string(who) + ": window of " + std::to_string(got) + " values, model expects " +
                         std::to_string(model.dim()));
  }
}

Matrix row_matrix(std::span<const double> x) {
  Matrix m(1, static_cast<Eigen::Index>(x.size()));
  std::copy(x.begin(), x.end(), m.data());
  return m;
}

}  // namespace

const grad::Tensor& Flow::tensor(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t.value;
  }
  throw ContractError("flow has no tensor '" + name + "'");
}

std::size_t Flow::add_tensor(std::string name, grad::Tensor value, bool trainable) {
  tensors_.push_back(NamedTensor{std::move(name), std::move(value), trainable});
  return tensors_.size() - 1;
}

std::vector<grad::Var> Flow::bind(grad::Tape& tape, bool trainable) const {
  std::vector<grad::Var> bound;
  bound.reserve(tensors_.size());
  for (const auto& t : tensors_) {
    bound.push_back(trainable && t.trainable ? tape.variable(t.value) : tape.constant(t.value));
  }
  return bound;
}

std::vector<grad::Tensor*> Flow::trainable_parameters() {
  ++version_;
  std::vector<grad::Tensor*> out;
  for (auto& t : tensors_) {
    if (t.trainable) out.push_back(&t.value);
  }
  return out;
}

std::size_t Flow::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) {
    if (t.trainable) n += t.value.size();
  }
  return n;
}

double standard_normal_log_norm(std::size_t dim) {
  return -0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi);
}

grad::Var record_log_likelihood(const Flow& model, grad::Tape& tape, grad::Var x, std::span<const grad::Var> bound) {
  const FlowOutput out = model.record_forward(tape, x, bound);
  const grad::Var quadratic = grad::scale(grad::sum_rows(grad::mul(out.z, out.z)), -0.5);
  const grad::Var norm = tape.constant(grad::Tensor::scalar(standard_normal_log_norm(model.dim())));
  return grad::add(grad::add(quadratic, norm), out.log_det);
}

BatchLatent forward(const Flow& model, const Matrix& x) {
  check_dim(model, static_cast<std::size_t>(x.cols()), "forward");
  grad::Tape tape;
  const auto bound = model.bind(tape, false);
  const FlowOutput out = model.record_forward(tape, tape.constant(to_tensor(x)), bound);
  BatchLatent result;
  result.z = to_matrix(out.z.value());
  const grad::Tensor& ld = out.log_det.value();
  result.log_det = Eigen::Map<const Vector>(ld.data(), static_cast<Eigen::Index>(ld.size()));
  return result;
}

LatentCode forward(const Flow& model, std::span<const double> x) {
  const BatchLatent b = forward(model, row_matrix(x));
  return LatentCode{std::vector<double>(b.z.data(), b.z.data() + b.z.size()), b.log_det(0)};
}

Matrix inverse(const Flow& model, const Matrix& z) {
  check_dim(model, static_cast<std::size_t>(z.cols()), "inverse");
  Matrix x = model.inverse(z);
  if (!x.allFinite()) throw NumericError("inverse produced non-finite values");
  return x;
}

std::vector<double> inverse(const Flow& model, std::span<const double> z) {
  const Matrix x = inverse(model, row_matrix(z));
  return std::vector<double>(x.data(), x.data() + x.size());
}

Vector log_likelihood(const Flow& model, const Matrix& x) {
  check_dim(model, static_cast<std::size_t>(x.cols()), "log_likelihood");
  grad::Tape tape;
  const auto bound = model.bind(tape, false);
  const grad::Var ll = record_log_likelihood(model, tape, tape.constant(to_tensor(x)), bound);
  const grad::Tensor& v = ll.value();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double log_likelihood(const Flow& model, std::span<const double> x) {
  return log_likelihood(model, row_matrix(x))(0);
}

Matrix grad_loglik_wrt_input(const Flow& model, const Matrix& x) {
  check_dim(model, static_cast<std::size_t>(x.cols()), "grad_loglik_wrt_input");
  grad::Tape tape;
  const auto bound = model.bind(tape, false);
  const grad::Var input = tape.variable(to_tensor(x));
  const grad::Var total = grad::sum(record_log_likelihood(model, tape, input, bound));
  const grad::Gradients g = tape.backward(total);
  return to_matrix(g.wrt(input));
}

std::vector<double> grad_loglik_wrt_input(const Flow& model, std::span<const double> x) {
  const Matrix g = grad_loglik_wrt_input(model, row_matrix(x));
  return std::vector<double>(g.data(), g.data() + g.size());
}

io::Container to_container(const Flow& model, const std::map<std::string, std::string>& extra) {
  io::Container c;
  c.kind = model.kind();
  c.attrs = model.topology();
  for (const auto& [k, v] : extra) c.attrs[k] = v;
  for (const auto& t : model.tensors()) c.tensors.emplace_back(t.name, t.value);
  return c;
}

std::unique_ptr<Flow> from_container(const io::Container& container) {
  std::unique_ptr<Flow> model;
  if (container.kind == "coupling-flow") {
    model = std::make_unique<CouplingFlow>(CouplingFlow::config_from_topology(container.attrs));
  } else if (container.kind == "maf-flow") {
    model = std::make_unique<MafFlow>(MafFlow::config_from_topology(container.attrs));
  } else {
    throw DataError("container kind '" + container.kind + "' is not a flow");
  }
  for (auto& t : model->mutable_tensors()) {
    const grad::Tensor& stored = container.tensor(t.name);
    if (!stored.same_shape(t.value)) {
      throw DataError("tensor '" + t.name + "' has shape " + grad::shape_string(stored.shape()) + ", topology expects " +
                      grad::shape_string(t.value.shape()));
    }
    t.value = stored;
  }
  return model;
}

void save_flow(const std::filesystem::path& path, const Flow& model) {
  io::write_container(path, to_container(model));
}

std::unique_ptr<Flow> load_flow(const std::filesystem::path& path) {
  return from_container(io::read_container(path));
}

}  // namespace se::flow
