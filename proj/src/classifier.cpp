#include "faddefend/classifier.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace faddefend {

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'F', 'A', 'D', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr int kPredictChunk = 64;

template <typename T>
void build_network(nn::Sequential<T>& net, Architecture arch, InputShape shape, int classes) {
  using std::make_unique;
  if (shape.height % 8 != 0 || shape.width % 8 != 0) {
    throw DimensionError("classifier input sides must be multiples of 8");
  }
  switch (arch) {
    case Architecture::kSmallConvA: {
      net.add(make_unique<nn::Conv2d<T>>(shape.channels, 32, 3, 1, 1));
      net.add(make_unique<nn::LeakyRelu<T>>());
      net.add(make_unique<nn::MaxPool2<T>>());
      net.add(make_unique<nn::Conv2d<T>>(32, 64, 3, 1, 1));
      net.add(make_unique<nn::LeakyRelu<T>>());
      net.add(make_unique<nn::MaxPool2<T>>());
      net.add(make_unique<nn::Conv2d<T>>(64, 64, 3, 1, 1));
      net.add(make_unique<nn::LeakyRelu<T>>());
      net.add(make_unique<nn::MaxPool2<T>>());
      net.add(make_unique<nn::Linear<T>>(64 * (shape.height / 8) * (shape.width / 8), 128));
      net.add(make_unique<nn::LeakyRelu<T>>());
      net.add(make_unique<nn::Linear<T>>(128, classes));
      break;
    }
    case Architecture::kSmallConvB: {
      net.add(make_unique<nn::Conv2d<T>>(shape.channels, 24, 5, 1, 2));
      net.add(make_unique<nn::LeakyRelu<T>>());
      net.add(make_unique<nn::MaxPool2<T>>());
      net.add(make_unique<nn::Conv2d<T>>(24, 48, 5, 1, 2));
      net.add(make_unique<nn::LeakyRelu<T>>());
      net.add(make_unique<nn::MaxPool2<T>>());
      net.add(make_unique<nn::Linear<T>>(48 * (shape.height / 4) * (shape.width / 4), 64));
      net.add(make_unique<nn::LeakyRelu<T>>());
      net.add(make_unique<nn::Linear<T>>(64, classes));
      break;
    }
  }
}

ImageTensor augment(const ImageTensor& img, bool flip, int dy, int dx) {
  ImageTensor out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= img.height()) continue;
    for (int x = 0; x < img.width(); ++x) {
      int sx = x - dx;
      if (sx < 0 || sx >= img.width()) continue;
      if (flip) sx = img.width() - 1 - sx;
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace

int Classifier::predict_label(const ImageTensor& img) const {
  return predict_labels(std::span<const ImageTensor>(&img, 1)).front();
}

std::vector<int> Classifier::predict_labels(std::span<const ImageTensor> batch) const {
  const auto probs = predict(batch);
  std::vector<int> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = static_cast<int>(std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
  }
  return out;
}

std::string to_string(Architecture arch) {
  return arch == Architecture::kSmallConvA ? "small_conv_A" : "small_conv_B";
}

Architecture architecture_from_string(const std::string& name) {
  if (name == "small_conv_A" || name == "A") return Architecture::kSmallConvA;
  if (name == "small_conv_B" || name == "B") return Architecture::kSmallConvB;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

template <typename T>
ConvClassifier<T>::ConvClassifier(Architecture arch, InputShape shape, int num_classes,
                                  ClassifierIdentity identity)
    : arch_(arch), shape_(shape), num_classes_(num_classes), identity_(std::move(identity)) {
  if (num_classes < 2) throw std::invalid_argument("classifier needs at least two classes");
  if (identity_.architecture.empty()) identity_.architecture = to_string(arch);
  build_network(net_, arch, shape, num_classes);
}

template <typename T>
void ConvClassifier<T>::check_shape(const ImageTensor& img) const {
  if (img.height() != shape_.height || img.width() != shape_.width ||
      img.channels() != shape_.channels) {
    throw DimensionError("classifier expects " + std::to_string(shape_.height) + "x" +
                         std::to_string(shape_.width) + "x" + std::to_string(shape_.channels) +
                         ", got " + img.shape_string());
  }
}

template <typename T>
std::vector<std::vector<float>> ConvClassifier<T>::predict(std::span<const ImageTensor> batch) const {
  std::vector<std::vector<float>> out;
  out.reserve(batch.size());
  for (const auto& img : batch) check_shape(img);
  for (std::size_t start = 0; start < batch.size(); start += kPredictChunk) {
    const auto count = std::min<std::size_t>(kPredictChunk, batch.size() - start);
    const auto probs = nn::softmax_rows(net_.forward(nn::to_tensor<T>(batch.subspan(start, count))));
    out.insert(out.end(), probs.begin(), probs.end());
  }
  return out;
}

template <typename T>
std::vector<float> ConvClassifier<T>::input_gradient(const ImageTensor& img, int label) const {
  check_shape(img);
  const auto acts = net_.forward_trace(nn::to_tensor<T>(img));
  nn::Tensor<T> grad_logits;
  const int labels[1] = {label};
  nn::softmax_cross_entropy(acts.back(), std::span<const int>(labels), &grad_logits);
  const nn::Tensor<T> g = net_.backward(acts, grad_logits, {});
  std::vector<float> out(img.size());
  for (int c = 0; c < g.c; ++c) {
    for (int y = 0; y < g.h; ++y) {
      for (int x = 0; x < g.w; ++x) out[img.index(y, x, c)] = static_cast<float>(g.at(0, c, y, x));
    }
  }
  return out;
}

template <typename T>
double ConvClassifier<T>::loss(const ImageTensor& img, int label) const {
  check_shape(img);
  const int labels[1] = {label};
  return nn::softmax_cross_entropy<T>(net_.forward(nn::to_tensor<T>(img)),
                                      std::span<const int>(labels), nullptr);
}

template <typename T>
void ConvClassifier<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < net_.size(); ++i) {
    auto& layer = net_.layer(i);
    if (auto* conv = dynamic_cast<nn::Conv2d<T>*>(&layer)) conv->initialize(rng);
    if (auto* fc = dynamic_cast<nn::Linear<T>*>(&layer)) {
      const bool last = i + 1 == net_.size();
      fc->initialize(rng, last ? 1.0 : std::sqrt(2.0));
    }
  }
}

template <typename T>
void ConvClassifier<T>::zero_parameters() {
  for (auto* p : net_.parameters()) std::fill(p->begin(), p->end(), T(0));
}

template <typename T>
std::string ConvClassifier<T>::layout() const {
  std::string out;
  for (std::size_t i = 0; i < net_.size(); ++i) {
    if (i) out += " > ";
    out += net_.layer(i).describe();
  }
  return out;
}

template class ConvClassifier<float>;
template class ConvClassifier<double>;

double accuracy(const Classifier& model, std::span<const LabeledImage> set) {
  if (set.empty()) return 0.0;
  std::vector<ImageTensor> images;
  images.reserve(set.size());
  for (const auto& s : set) images.push_back(s.image);
  const auto labels = model.predict_labels(images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i) hits += labels[i] == set[i].label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

TrainedClassifier train_classifier(std::span<const LabeledImage> train,
                                   std::span<const LabeledImage> test, int num_classes,
                                   const TrainOptions& options) {
  if (num_classes < 2) throw TrainingError("training needs at least two classes");
  if (train.empty()) throw TrainingError("training set is empty");
  const auto& first = train.front().image;
  InputShape shape{first.height(), first.width(), first.channels()};
  for (const auto& s : train) {
    if (s.label < 0 || s.label >= num_classes) throw TrainingError("label out of range in " + s.source_id);
    if (!s.image.same_shape(first)) throw TrainingError("mixed image shapes in training set");
  }

  auto model = std::make_unique<ConvClassifier<float>>(
      options.arch, shape, num_classes,
      ClassifierIdentity{options.name, to_string(options.arch), options.dataset_tag});
  model->initialize(options.seed);

  auto& net = model->network();
  nn::Adam<float> adam(net.parameters(), nn::AdamOptions{options.learning_rate});
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::uniform_int_distribution<int> shift(-options.augment_shift, options.augment_shift);
  std::bernoulli_distribution coin(0.5);

  TrainReport report;
  report.seed = options.seed;
  double lr = options.learning_rate;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const auto count = std::min<std::size_t>(options.batch_size, order.size() - start);
      std::vector<ImageTensor> images;
      std::vector<int> labels;
      images.reserve(count);
      for (std::size_t j = 0; j < count; ++j) {
        const auto& s = train[order[start + j]];
        const bool flip = options.augment_flip && coin(rng);
        const int dy = options.augment_shift > 0 ? shift(rng) : 0;
        const int dx = options.augment_shift > 0 ? shift(rng) : 0;
        images.push_back(flip || dy || dx ? augment(s.image, flip, dy, dx) : s.image);
        labels.push_back(s.label);
      }
      const auto acts = net.forward_trace(nn::to_tensor<float>(images));
      nn::Tensor<float> grad_logits;
      loss_sum += nn::softmax_cross_entropy(acts.back(), std::span<const int>(labels), &grad_logits);
      auto grads = nn::zeros_like(net.parameters());
      net.backward(acts, grad_logits, grads);
      adam.step(grads);
      ++batches;
    }
    report.final_train_loss = loss_sum / std::max(batches, 1);
    lr *= options.lr_decay;
    adam.set_learning_rate(lr);
  }
  report.epochs = options.epochs;
  report.final_test_accuracy = test.empty() ? 0.0 : accuracy(*model, test);
  return {std::move(model), report};
}

void save_checkpoint(const ConvClassifier<float>& model, const TrainReport& report,
                     const std::filesystem::path& path) {
  nlohmann::json meta = {
      {"format_version", kCheckpointVersion},
      {"name", model.identity().name},
      {"architecture", model.identity().architecture},
      {"dataset", model.identity().dataset},
      {"num_classes", model.num_classes()},
      {"input_shape", {model.input_shape().height, model.input_shape().width, model.input_shape().channels}},
      {"layout", model.layout()},
      {"train_report",
       {{"epochs", report.epochs},
        {"final_test_accuracy", report.final_test_accuracy},
        {"final_train_loss", report.final_train_loss},
        {"seed", report.seed}}},
  };
  const std::string text = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  const std::uint64_t meta_len = text.size();
  out.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto params = model.network().parameters();
  const std::uint64_t tensors = params.size();
  out.write(reinterpret_cast<const char*>(&tensors), sizeof(tensors));
  for (const auto* p : params) {
    const std::uint64_t n = p->size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(p->data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

LoadedClassifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw std::runtime_error(path.string() + " is not a checkpoint");
  std::uint64_t meta_len = 0;
  in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
  if (!in || meta_len > (1u << 24)) throw std::runtime_error("corrupt checkpoint header in " + path.string());
  std::string text(meta_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw std::runtime_error("truncated checkpoint header in " + path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
  }
  if (meta.at("format_version").get<std::uint32_t>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path.string());
  }
  const auto dims = meta.at("input_shape");
  InputShape shape{dims.at(0).get<int>(), dims.at(1).get<int>(), dims.at(2).get<int>()};
  LoadedClassifier loaded;
  loaded.model = std::make_unique<ConvClassifier<float>>(
      architecture_from_string(meta.at("architecture").get<std::string>()), shape,
      meta.at("num_classes").get<int>(),
      ClassifierIdentity{meta.at("name").get<std::string>(), meta.at("architecture").get<std::string>(),
                         meta.at("dataset").get<std::string>()});
  const auto& tr = meta.at("train_report");
  loaded.report = TrainReport{tr.at("epochs").get<int>(), tr.at("final_test_accuracy").get<double>(),
                              tr.at("final_train_loss").get<double>(), tr.at("seed").get<std::uint64_t>()};
  auto params = loaded.model->network().parameters();
  std::uint64_t tensors = 0;
  in.read(reinterpret_cast<char*>(&tensors), sizeof(tensors));
  if (!in || tensors != params.size()) throw std::runtime_error("checkpoint tensor count mismatch");
  for (auto* p : params) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n != p->size()) throw std::runtime_error("checkpoint tensor size mismatch");
    in.read(reinterpret_cast<char*>(p->data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  return loaded;
}

}  // namespace faddefend
