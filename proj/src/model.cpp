#include "magnn/model.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "magnn/error.hpp"
#include "magnn/rng.hpp"

namespace magnn {

using ad::Tensor;

std::string to_string(Encoder e) {
  switch (e) {
    case Encoder::Mean: return "mean";
    case Encoder::Linear: return "linear";
    case Encoder::Rotation: return "rotation";
  }
  return "?";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Elu: return "elu";
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

Encoder parse_encoder(std::string_view s) {
  if (s == "mean") return Encoder::Mean;
  if (s == "linear") return Encoder::Linear;
  if (s == "rotation" || s == "rot") return Encoder::Rotation;
  throw ConfigError("unknown encoder '" + std::string(s) + "' (expected mean, linear or rotation)");
}

Activation parse_activation(std::string_view s) {
  if (s == "elu") return Activation::Elu;
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "softmax") return Activation::Softmax;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

void ModelConfig::validate(const Schema& schema) const {
  if (hidden_dim == 0 || hidden_dim % 2 != 0)
    throw ConfigError("hidden dimension must be a positive even number, got " + std::to_string(hidden_dim));
  if (heads == 0) throw ConfigError("number of attention heads must be at least 1");
  if (layers == 0) throw ConfigError("number of layers must be at least 1");
  if (attn_dim == 0 || out_dim == 0) throw ConfigError("attention and output dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (metapaths.empty()) throw ConfigError("at least one metapath is required");
  for (const auto& p : metapaths) validate_metapath(schema, p);
}

std::vector<NodeTypeId> ModelConfig::target_types(const Schema& schema) const {
  std::vector<NodeTypeId> out;
  for (std::size_t t = 0; t < schema.num_node_types(); ++t)
    if (!metapaths_for(NodeTypeId(t)).empty()) out.push_back(NodeTypeId(t));
  return out;
}

std::vector<std::size_t> ModelConfig::metapaths_for(NodeTypeId t) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < metapaths.size(); ++i)
    if (metapaths[i].target_type() == t) out.push_back(i);
  return out;
}

void ModelParams::add(std::string name, Tensor t) {
  if (has(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_[name] = names_.size();
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(t));
}

const Tensor& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter '" + name + "'");
  return tensors_[it->second];
}

Tensor& ModelParams::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter '" + name + "'");
  return tensors_[it->second];
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto v = tensors_[i].values();
    out.add(names_[i], Tensor::parameter(tensors_[i].shape(), {v.begin(), v.end()}));
  }
  return out;
}

void ModelParams::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

namespace param_name {
std::string type_projection(const std::string& s) { return "type_proj." + s; }
std::string attention_target(std::size_t l, const std::string& p) {
  return "layer" + std::to_string(l) + ".attn_target." + p;
}
std::string attention_instance(std::size_t l, const std::string& p) {
  return "layer" + std::to_string(l) + ".attn_instance." + p;
}
std::string path_projection(std::size_t l, const std::string& p) {
  return "layer" + std::to_string(l) + ".path_proj." + p;
}
std::string phase(std::size_t l, const std::string& r) { return "layer" + std::to_string(l) + ".phase." + r; }
std::string summary_projection(std::size_t l, const std::string& s) {
  return "layer" + std::to_string(l) + ".summary_proj." + s;
}
std::string summary_bias(std::size_t l, const std::string& s) {
  return "layer" + std::to_string(l) + ".summary_bias." + s;
}
std::string summary_query(std::size_t l, const std::string& s) {
  return "layer" + std::to_string(l) + ".summary_query." + s;
}
std::string output_projection(std::size_t l) { return "layer" + std::to_string(l) + ".output_proj"; }
}  // namespace param_name

namespace {

Tensor glorot(std::uint64_t seed, const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in,
              std::size_t fan_out) {
  auto rng = make_rng(seed, name);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = bound * (2.0 * uniform01(rng) - 1.0);
  return Tensor::parameter({rows, cols}, std::move(v));
}

Tensor phases(std::uint64_t seed, const std::string& name, std::size_t n) {
  auto rng = make_rng(seed, name);
  std::vector<double> v(n);
  for (auto& x : v) x = std::numbers::pi * (2.0 * uniform01(rng) - 1.0);
  return Tensor::parameter({n}, std::move(v));
}

std::set<std::uint32_t> used_types(const ModelConfig& config) {
  std::set<std::uint32_t> out;
  for (const auto& p : config.metapaths)
    for (auto t : p.types) out.insert(index_of(t));
  return out;
}

std::set<std::uint32_t> used_relations(const ModelConfig& config) {
  std::set<std::uint32_t> out;
  for (const auto& p : config.metapaths)
    for (auto r : p.relations) out.insert(index_of(r));
  return out;
}

}  // namespace

ModelParams init_params(const HetGraph& graph, const ModelConfig& config, std::uint64_t seed) {
  const auto& schema = graph.schema();
  config.validate(schema);
  const std::size_t d = config.hidden_dim, K = config.heads;
  ModelParams params;
  for (auto t : used_types(config)) {
    const auto name = param_name::type_projection(schema.node_type(NodeTypeId(t)).symbol);
    const auto in = graph.features(NodeTypeId(t)).dim();
    params.add(name, glorot(seed, name, d, in, in, d));
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    for (const auto& p : config.metapaths) {
      const auto ps = p.to_string(schema);
      for (const auto& name : {param_name::attention_target(l, ps), param_name::attention_instance(l, ps)})
        params.add(name, glorot(seed, name, K, d, 2 * d, 1));
      if (config.encoder == Encoder::Linear) {
        const auto name = param_name::path_projection(l, ps);
        params.add(name, glorot(seed, name, d, d, d, d));
      }
    }
    if (config.encoder == Encoder::Rotation)
      for (auto r : used_relations(config)) {
        const auto name = param_name::phase(l, schema.relation(RelationId(r)).name);
        params.add(name, phases(seed, name, d / 2));
      }
    for (auto t : config.target_types(schema)) {
      const auto& sym = schema.node_type(t).symbol;
      const auto pn = param_name::summary_projection(l, sym);
      params.add(pn, glorot(seed, pn, config.attn_dim, K * d, K * d, config.attn_dim));
      params.add(param_name::summary_bias(l, sym), Tensor::zeros({config.attn_dim}, true));
      const auto qn = param_name::summary_query(l, sym);
      params.add(qn, glorot(seed, qn, 1, config.attn_dim, config.attn_dim, 1));
    }
    const auto on = param_name::output_projection(l);
    const auto out = l + 1 == config.layers ? config.out_dim : d;
    params.add(on, glorot(seed, on, out, K * d, K * d, out));
  }
  return params;
}

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::Elu: return ad::elu(x);
    case Activation::Identity: return x;
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Softmax: return ad::softmax_rows(x);
  }
  return x;
}

Tensor content_transform(const FeatureMatrix& features, const Tensor& weight) {
  if (weight.shape().size() != 2 || weight.cols() != features.dim())
    throw ShapeError("type projection expects " + std::to_string(features.dim()) + " input columns, has " +
                     std::to_string(weight.cols()));
  if (features.is_identity()) return ad::transpose(weight);
  const auto& m = features.values();
  return ad::matmul_nt(Tensor::constant({m.rows, m.cols}, m.data), weight);
}

namespace {

std::vector<std::uint32_t> column(const InstanceTable& table, std::size_t pos) {
  const auto w = table.width();
  const auto nodes = table.nodes();
  std::vector<std::uint32_t> out(table.num_instances());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nodes[i * w + pos];
  return out;
}

}  // namespace

Tensor encode_instances(const InstanceTable& table, const std::vector<Tensor>& node_vectors,
                        const EncoderParams& params) {
  const auto& path = table.path();
  const std::size_t n = path.length();
  auto vectors_at = [&](std::size_t pos) {
    const auto t = index_of(path.types[pos]);
    if (t >= node_vectors.size() || !node_vectors[t].defined())
      throw ShapeError("no node vectors for a node type on the metapath");
    const auto idx = column(table, pos);
    return ad::gather_rows(node_vectors[t], idx);
  };
  const std::size_t d = vectors_at(0).cols();
  for (std::size_t pos = 1; pos <= n; ++pos)
    if (node_vectors[index_of(path.types[pos])].cols() != d)
      throw ShapeError("node vectors along a metapath must share one dimension");

  Tensor h;
  if (params.kind == Encoder::Rotation) {
    if (d % 2 != 0) throw ShapeError("rotation encoder needs an even dimension");
    if (params.step_phases.size() != n)
      throw ShapeError("rotation encoder needs one phase vector per metapath step");
    for (const auto& p : params.step_phases)
      if (p.size() != d / 2) throw ShapeError("phase vector length must be half the hidden dimension");
    if (params.endpoints_only) {
      // The skipped rotations compose into one: their phases add.
      Tensor theta = params.step_phases[0];
      for (std::size_t i = 1; i < n; ++i) theta = ad::add(theta, params.step_phases[i]);
      h = ad::add(vectors_at(n), ad::complex_hadamard(vectors_at(0), ad::unit_phasor(theta)));
      return ad::scale(h, 0.5);
    }
    h = vectors_at(0);
    for (std::size_t i = 1; i <= n; ++i)
      h = ad::add(vectors_at(i), ad::complex_hadamard(h, ad::unit_phasor(params.step_phases[i - 1])));
    return ad::scale(h, 1.0 / static_cast<double>(n + 1));
  }

  if (params.endpoints_only) {
    h = ad::scale(ad::add(vectors_at(0), vectors_at(n)), 0.5);
  } else {
    h = vectors_at(0);
    for (std::size_t i = 1; i <= n; ++i) h = ad::add(h, vectors_at(i));
    h = ad::scale(h, 1.0 / static_cast<double>(n + 1));
  }
  if (params.kind == Encoder::Linear) {
    const auto& W = params.path_projection;
    if (!W.defined() || W.rows() != d || W.cols() != d) throw ShapeError("path projection must be hidden x hidden");
    h = ad::matmul_nt(h, W);
  }
  return h;
}

IntraResult intra_metapath_aggregate(const Tensor& target_vectors, const Tensor& encoded, const ad::SegmentLayout& blocks,
                                     const Tensor& attention_target, const Tensor& attention_instance,
                                     Activation activation, double leaky_slope) {
  const std::size_t T = blocks.num_segments();
  if (target_vectors.rows() != T) throw ShapeError("one target vector per block is required");
  if (encoded.rows() != blocks.total()) throw ShapeError("encoded instances do not match the block layout");
  const std::size_t d = encoded.cols();
  if (target_vectors.cols() != d || attention_target.cols() != d || attention_instance.cols() != d ||
      attention_target.rows() != attention_instance.rows())
    throw ShapeError("attention vectors must be heads x hidden");

  std::vector<std::uint32_t> owner(blocks.total());
  for (std::size_t s = 0; s < T; ++s)
    for (auto i = blocks.begin(s); i < blocks.end(s); ++i) owner[i] = static_cast<std::uint32_t>(s);

  auto target_scores = ad::matmul_nt(target_vectors, attention_target);  // [T, K]
  auto scores = ad::add(ad::gather_rows(target_scores, owner), ad::matmul_nt(encoded, attention_instance));
  auto alpha = ad::segment_softmax(ad::leaky_relu(scores, leaky_slope), blocks);
  auto out = activate(ad::segment_weighted_sum(encoded, alpha, blocks), activation);
  return {out, alpha};
}

InterResult inter_metapath_aggregate(const std::vector<Tensor>& per_metapath, const Tensor& projection,
                                     const Tensor& bias, const Tensor& query) {
  if (per_metapath.empty()) throw ConfigError("inter-metapath aggregation needs at least one metapath");
  const auto& first = per_metapath.front();
  for (const auto& h : per_metapath)
    if (h.rows() != first.rows() || h.cols() != first.cols())
      throw ShapeError("metapath-specific vectors must share one shape");
  if (projection.cols() != first.cols() || bias.size() != projection.rows() || query.size() != projection.rows())
    throw ShapeError("summary parameters do not match the metapath-specific dimension");
  std::vector<Tensor> scores;
  for (const auto& h : per_metapath) {
    auto summary = ad::mean_rows(ad::tanh(ad::add_row_vector(ad::matmul_nt(h, projection), bias)));
    scores.push_back(ad::matmul_nt(summary, query));  // [1, 1]
  }
  auto beta = ad::softmax_rows(ad::concat_cols(scores));
  return {ad::weighted_sum(per_metapath, beta), beta};
}

Tensor output_projection(const Tensor& h, const Tensor& weight, Activation activation) {
  if (weight.cols() != h.cols())
    throw ShapeError("output projection expects " + std::to_string(weight.cols()) + " input columns, got " +
                     std::to_string(h.cols()));
  return activate(ad::matmul_nt(h, weight), activation);
}

ForwardResult forward(const HetGraph& graph, const std::vector<InstanceTable>& tables, const ModelParams& params,
                      const ModelConfig& config, const ForwardOptions& options) {
  const auto& schema = graph.schema();
  const std::size_t types = schema.num_node_types();
  if (tables.size() != config.metapaths.size()) throw ShapeError("one instance table per metapath is required");
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (!(tables[i].path() == config.metapaths[i]))
      throw ShapeError("instance table " + std::to_string(i) + " was built for a different metapath");
    if (!tables[i].covers_all(graph.node_count(config.metapaths[i].target_type())))
      throw ShapeError("instance table for " + config.metapaths[i].to_string(schema) +
                       " must cover every node of its target type");
  }
  Rng dropout_rng(options.dropout_seed);
  auto drop = [&](const Tensor& x) { return ad::dropout(x, config.dropout, options.train, dropout_rng); };

  std::vector<Tensor> h(types);
  for (auto t : used_types(config)) {
    const auto& sym = schema.node_type(NodeTypeId(t)).symbol;
    h[t] = content_transform(graph.features(NodeTypeId(t)), params.get(param_name::type_projection(sym)));
  }
  const auto targets = config.target_types(schema);
  ForwardResult result;
  result.output.resize(types);
  result.embedding.resize(types);

  for (std::size_t l = 0; l < config.layers; ++l) {
    const bool last = l + 1 == config.layers;
    for (auto& x : h)
      if (x.defined()) x = drop(x);

    std::vector<Tensor> per_path(config.metapaths.size());
    result.intra_attention.emplace_back(config.metapaths.size());
    for (std::size_t i = 0; i < config.metapaths.size(); ++i) {
      const auto& path = config.metapaths[i];
      const auto ps = path.to_string(schema);
      EncoderParams enc{config.encoder, {}, {}, config.endpoints_only};
      if (config.encoder == Encoder::Linear) enc.path_projection = params.get(param_name::path_projection(l, ps));
      if (config.encoder == Encoder::Rotation)
        for (auto r : path.relations) enc.step_phases.push_back(params.get(param_name::phase(l, schema.relation(r).name)));
      auto encoded = encode_instances(tables[i], h, enc);
      std::vector<std::size_t> offsets(tables[i].offsets().begin(), tables[i].offsets().end());
      auto intra = intra_metapath_aggregate(h[index_of(path.target_type())], encoded, ad::SegmentLayout(std::move(offsets)),
                                            params.get(param_name::attention_target(l, ps)),
                                            params.get(param_name::attention_instance(l, ps)), config.activation);
      per_path[i] = intra.output;
      result.intra_attention.back()[i] = intra.attention;
    }

    result.inter_attention.emplace_back(types);
    std::vector<Tensor> next = h;
    const auto& W_out = params.get(param_name::output_projection(l));
    for (auto t : targets) {
      const auto ti = index_of(t);
      const auto& sym = schema.node_type(t).symbol;
      std::vector<Tensor> parts;
      for (auto i : config.metapaths_for(t)) parts.push_back(per_path[i]);
      Tensor fused;
      if (graph.node_count(t) == 0) {
        fused = Tensor::zeros({0, parts.front().cols()});
      } else {
        auto inter = inter_metapath_aggregate(parts, params.get(param_name::summary_projection(l, sym)),
                                              params.get(param_name::summary_bias(l, sym)),
                                              params.get(param_name::summary_query(l, sym)));
        fused = inter.output;
        result.inter_attention.back()[ti] = inter.weights;
      }
      if (last) {
        result.embedding[ti] = fused;
        result.output[ti] = output_projection(fused, W_out, config.output_activation);
      } else {
        next[ti] = output_projection(fused, W_out, config.activation);
      }
    }
    h = std::move(next);
  }
  return result;
}

}  // namespace magnn
