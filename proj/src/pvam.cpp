#include "srn/pvam.hpp"

#include <numeric>

#include "srn/errors.hpp"

namespace srn {

template <typename T>
PvamParams<T> PvamParams<T>::create(ParameterSet<T>& ps, const std::string& prefix, std::size_t d,
                                    std::size_t max_len) {
  return {ps.create(prefix + ".w_e", {d}, Init::Glorot),
          ps.create(prefix + ".w_o", {d, d}, Init::Glorot),
          ps.create(prefix + ".w_v", {d, d}, Init::Glorot),
          ps.create(prefix + ".reading_order", {max_len, d}, Init::Glorot)};
}

namespace {

template <typename T>
AlignedFeatures<T> attend_orders(const FeatureMap2D<T>& v, std::span<const int> orders,
                                 const PvamParams<T>& params, bool keep_attention) {
  const std::size_t d = params.width();
  if (v.channels != d || v.values.dim(2) != d) {
    throw ConfigError("PVAM width " + std::to_string(d) + " does not match feature channels " +
                      std::to_string(v.channels));
  }
  const std::size_t batch = v.batch(), cells = v.cells();
  auto keys = reshape(matmul(reshape(v.values, {batch * cells, d}), params.w_v), {batch, cells, d});
  auto query = matmul(embed(orders, params.reading_order), params.w_o);
  query = reshape(query, {1, orders.size(), d});
  auto alpha = softmax(additive_scores(query, keys, params.w_e), 2);
  AlignedFeatures<T> out;
  out.g = matmul(alpha, v.values);
  if (keep_attention) out.attention = alpha;
  out.height = v.height;
  out.width = v.width;
  return out;
}

}  // namespace

template <typename T>
AlignedFeatures<T> attend_all(const FeatureMap2D<T>& v, const PvamParams<T>& params,
                              bool keep_attention) {
  std::vector<int> orders(params.max_len());
  std::iota(orders.begin(), orders.end(), 0);
  return attend_orders(v, orders, params, keep_attention);
}

template <typename T>
AlignedFeatures<T> attend_single(const FeatureMap2D<T>& v, std::size_t t,
                                 const PvamParams<T>& params) {
  if (t >= params.max_len()) {
    throw IndexError("reading order " + std::to_string(t) + " outside [0, " +
                     std::to_string(params.max_len()) + ")");
  }
  const int order = static_cast<int>(t);
  return attend_orders(v, std::span<const int>(&order, 1), params, true);
}

template struct PvamParams<float>;
template struct PvamParams<double>;
template AlignedFeatures<float> attend_all(const FeatureMap2D<float>&, const PvamParams<float>&, bool);
template AlignedFeatures<double> attend_all(const FeatureMap2D<double>&, const PvamParams<double>&,
                                            bool);
template AlignedFeatures<float> attend_single(const FeatureMap2D<float>&, std::size_t,
                                              const PvamParams<float>&);
template AlignedFeatures<double> attend_single(const FeatureMap2D<double>&, std::size_t,
                                               const PvamParams<double>&);

}  // namespace srn
