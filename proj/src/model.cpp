#include "srn/model.hpp"

#include "srn/errors.hpp"

namespace srn {

namespace {

bool is_parallel(DecoderKind kind) { return kind != DecoderKind::Serial; }

bool has_reasoning(DecoderKind kind) {
  return kind == DecoderKind::Srn || kind == DecoderKind::Fsrm || kind == DecoderKind::Bsrm;
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

template <typename T>
SrnModel<T>::SrnModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), params_(seed) {
  config_.validate();
  const std::size_t d = config_.d_model, k = config_.num_classes;
  backbone_ = BackboneParams<T>::create(params_, "backbone", BackboneConfig::from(config_));
  if (!is_parallel(config_.decoder)) {
    serial_ = SerialDecoderParams<T>::create(params_, "serial", d, k);
    return;
  }
  pvam_ = PvamParams<T>::create(params_, "pvam", d, config_.max_len);
  typename GsrmParams<T>::Options opt;
  opt.d_model = d;
  opt.num_classes = k;
  opt.units = config_.gsrm_units;
  opt.transformer = config_.gsrm_transformer();
  opt.shared_streams = config_.gsrm_shared_streams;
  opt.with_forward = config_.decoder != DecoderKind::Bsrm;
  opt.with_backward = config_.decoder != DecoderKind::Fsrm;
  opt.embedding_block_only = config_.decoder == DecoderKind::SrnNoGsrm;
  gsrm_ = GsrmParams<T>::create(params_, "gsrm", opt);
  if (has_reasoning(config_.decoder))
    vsfd_ = VsfdParams<T>::create(params_, "vsfd", d, k, config_.fusion);
}

template <typename T>
FeatureMap2D<T> SrnModel<T>::features(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.image_height ||
      images.dim(3) != config_.channels) {
    throw InputError("images " + shape_str(images.shape()) + " do not match the configured " +
                     std::to_string(config_.image_height) + "-row, " +
                     std::to_string(config_.channels) + "-channel input");
  }
  return extract_features(images, backbone_config(), backbone_);
}

template <typename T>
ForwardResult<T> SrnModel<T>::forward(const Tensor<T>& images, std::span<const int> labels,
                                      Stage stage, const LossWeights& weights,
                                      bool keep_attention) const {
  return forward_features(features(images), labels, stage, weights, keep_attention);
}

template <typename T>
ForwardResult<T> SrnModel<T>::forward_features(const FeatureMap2D<T>& features,
                                               std::span<const int> labels, Stage stage,
                                               const LossWeights& weights,
                                               bool keep_attention) const {
  ForwardResult<T> out;
  out.features = features;
  const std::size_t batch = features.batch(), n = config_.max_len;
  const bool with_loss = !labels.empty();
  if (with_loss && labels.size() != batch * n) {
    throw DimensionError("expected " + std::to_string(batch * n) + " labels, got " +
                         std::to_string(labels.size()));
  }

  if (!is_parallel(config_.decoder)) {
    if (with_loss) {
      out.output_logits = serial_teacher_forced_logits(out.features, labels, serial_, n);
      out.l_f = cross_entropy_mean(out.output_logits, labels);
      out.total = out.l_f;
    }
    return out;
  }

  out.aligned = attend_all(out.features, pvam_, keep_attention);
  auto g = reshape(out.aligned.g, {batch * n, config_.d_model});
  std::vector<int> teacher;
  const bool teach = with_loss && config_.teacher_forcing && stage == Stage::Joint;
  if (teach) teacher.assign(labels.begin(), labels.end());
  auto vts = visual_to_semantic(g, gsrm_, teach ? &teacher : nullptr);
  out.embedding_logits = vts.logits;
  out.output_logits = vts.logits;
  if (with_loss) out.l_e = embedding_loss(vts.logits, labels);

  if (stage == Stage::Joint && has_reasoning(config_.decoder)) {
    SemanticFeatures<T> sem;
    if (config_.decoder == DecoderKind::Srn)
      sem = reason(vts.embeddings, gsrm_, batch);
    else
      sem = reason_one_way(vts.embeddings, gsrm_,
                           config_.decoder == DecoderKind::Fsrm ? Direction::Forward
                                                                : Direction::Backward,
                           batch);
    out.reasoning_logits = sem.logits;
    Tensor<T> fused;
    if (config_.fusion == FusionMode::Gated)
      fused = fuse(g, sem.s, vsfd_, &out.gate);
    else
      fused = fuse_variant(g, sem.s, config_.fusion, vsfd_);
    out.output_logits = decode_logits(fused, vsfd_);
    if (with_loss) {
      out.l_r = reasoning_loss(sem.logits, labels);
      out.l_f = cross_entropy_mean(out.output_logits, labels);
    }
  }
  if (with_loss) {
    LossWeights w = weights;
    if (stage == Stage::Warmup) w.reasoning = w.fusion = 0;
    out.total = total_loss(out.l_e, stage == Stage::Warmup ? Tensor<T>() : out.l_r,
                           stage == Stage::Warmup ? Tensor<T>() : out.l_f, w);
  }
  return out;
}

template <typename T>
std::vector<std::vector<int>> SrnModel<T>::predict(const Tensor<T>& images,
                                                   AlignedFeatures<T>* attention) const {
  NoGradGuard guard;
  if (!is_parallel(config_.decoder))
    return serial_decode(features(images), serial_, config_.max_len, config_.eos()).sequences;
  auto result = forward(images, {}, Stage::Joint, LossWeights{}, attention != nullptr);
  if (attention) *attention = result.aligned;
  return decode_sequences(result.output_logits, images.dim(0), config_.eos());
}

template <typename T>
bool SrnModel<T>::trains(const std::string& name, Stage stage) const {
  if (stage == Stage::Joint || !is_parallel(config_.decoder)) return true;
  return starts_with(name, "backbone.") || starts_with(name, "pvam.") ||
         starts_with(name, "gsrm.embedding_classifier.");
}

template class SrnModel<float>;
template class SrnModel<double>;

}  // namespace srn
