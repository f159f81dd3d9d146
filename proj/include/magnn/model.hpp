#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "magnn/graph.hpp"
#include "magnn/metapath.hpp"
#include "magnn/tensor.hpp"

namespace magnn {

enum class Encoder { Mean, Linear, Rotation };
enum class Activation { Elu, Identity, Tanh, Softmax };

std::string to_string(Encoder e);
std::string to_string(Activation a);
Encoder parse_encoder(std::string_view s);
Activation parse_activation(std::string_view s);

struct ModelConfig {
  std::size_t hidden_dim = 64;  // must be even
  std::size_t attn_dim = 128;
  std::size_t out_dim = 64;
  std::size_t heads = 8;
  std::size_t layers = 1;
  Encoder encoder = Encoder::Rotation;
  double dropout = 0.5;
  Activation activation = Activation::Elu;         // inside attention and hidden layers
  Activation output_activation = Activation::Elu;  // last projection
  bool endpoints_only = false;  // encoders see only the two instance endpoints
  std::vector<Metapath> metapaths;

  /// Throws ConfigError on inconsistent settings.
  void validate(const Schema& schema) const;
  /// Node types that are the target of at least one metapath, in id order.
  std::vector<NodeTypeId> target_types(const Schema& schema) const;
  /// Indices into `metapaths` whose target type is t.
  std::vector<std::size_t> metapaths_for(NodeTypeId t) const;
};

/// Learnable tensors keyed by name. Iteration order is the insertion order,
/// which init_params keeps deterministic.
class ModelParams {
 public:
  void add(std::string name, ad::Tensor t);
  const ad::Tensor& get(const std::string& name) const;
  ad::Tensor& get(const std::string& name);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<ad::Tensor>& tensors() const { return tensors_; }
  std::size_t num_scalars() const;

  /// Deep copy with fresh leaf nodes.
  ModelParams clone() const;
  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Parameter names, built from type symbols, metapath strings and relation names.
namespace param_name {
std::string type_projection(const std::string& type_symbol);
std::string attention_target(std::size_t layer, const std::string& path);
std::string attention_instance(std::size_t layer, const std::string& path);
std::string path_projection(std::size_t layer, const std::string& path);
std::string phase(std::size_t layer, const std::string& relation);
std::string summary_projection(std::size_t layer, const std::string& type_symbol);
std::string summary_bias(std::size_t layer, const std::string& type_symbol);
std::string summary_query(std::size_t layer, const std::string& type_symbol);
std::string output_projection(std::size_t layer);
}  // namespace param_name

/// Glorot-uniform matrices and attention vectors, phases in [-pi, pi), zero biases.
ModelParams init_params(const HetGraph& graph, const ModelConfig& config, std::uint64_t seed);

ad::Tensor activate(const ad::Tensor& x, Activation a);

/// Rows W x_v for every node of a type; weight is [hidden, feature_dim].
ad::Tensor content_transform(const FeatureMatrix& features, const ad::Tensor& weight);

struct EncoderParams {
  Encoder kind = Encoder::Mean;
  ad::Tensor path_projection;           // linear: [hidden, hidden]
  std::vector<ad::Tensor> step_phases;  // rotation: one [hidden/2] phase vector per metapath step
  bool endpoints_only = false;
};

/// Encodes every instance of `table`. `node_vectors[t]` holds the current
/// vectors of node type t. Returns [num_instances, hidden].
ad::Tensor encode_instances(const InstanceTable& table, const std::vector<ad::Tensor>& node_vectors,
                            const EncoderParams& params);

struct IntraResult {
  ad::Tensor output;     // [targets, heads * hidden]
  ad::Tensor attention;  // [instances, heads]
};

/// Multi-head attention over each target's block of encoded instances.
/// attention_target / attention_instance are the two halves of the score
/// vector, each [heads, hidden].
IntraResult intra_metapath_aggregate(const ad::Tensor& target_vectors, const ad::Tensor& encoded,
                                     const ad::SegmentLayout& blocks, const ad::Tensor& attention_target,
                                     const ad::Tensor& attention_instance, Activation activation,
                                     double leaky_slope = 0.2);

struct InterResult {
  ad::Tensor output;  // [nodes, dim]
  ad::Tensor weights;  // [1, metapaths]
};

InterResult inter_metapath_aggregate(const std::vector<ad::Tensor>& per_metapath, const ad::Tensor& projection,
                                     const ad::Tensor& bias, const ad::Tensor& query);

ad::Tensor output_projection(const ad::Tensor& h, const ad::Tensor& weight, Activation activation);

struct ForwardOptions {
  bool train = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
};

struct ForwardResult {
  /// Per node type: final outputs (after the last projection) and the
  /// fused vectors that feed it. Undefined for types no metapath targets.
  std::vector<ad::Tensor> output;
  std::vector<ad::Tensor> embedding;
  std::vector<std::vector<ad::Tensor>> intra_attention;  // [layer][metapath] -> [instances, heads]
  std::vector<std::vector<ad::Tensor>> inter_attention;  // [layer][node type] -> [1, metapaths]
};

/// Full L-layer pass. tables[i] must enumerate config.metapaths[i] for every
/// node of its target type.
ForwardResult forward(const HetGraph& graph, const std::vector<InstanceTable>& tables, const ModelParams& params,
                      const ModelConfig& config, const ForwardOptions& options = {});

}  // namespace magnn
