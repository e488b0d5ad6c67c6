#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "faddefend/image.hpp"
#include "faddefend/nn/network.hpp"

namespace faddefend {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InputShape {
  int height = 32;
  int width = 32;
  int channels = 3;

  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct ClassifierIdentity {
  std::string name;
  std::string architecture;
  std::string dataset;

  std::string to_string() const { return name + "/" + architecture + "/" + dataset; }
  friend bool operator==(const ClassifierIdentity&, const ClassifierIdentity&) = default;
};

/// Differentiable classifier as seen by attacks and evaluation. Implementations
/// must be safe for concurrent const calls.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual const ClassifierIdentity& identity() const = 0;
  virtual int num_classes() const = 0;
  virtual InputShape input_shape() const = 0;

  /// Softmax probabilities, one row per image.
  virtual std::vector<std::vector<float>> predict(std::span<const ImageTensor> batch) const = 0;

  /// d CrossEntropy(img, label) / d img, channel-last like img.values().
  virtual std::vector<float> input_gradient(const ImageTensor& img, int label) const = 0;

  /// Cross-entropy of a single image.
  virtual double loss(const ImageTensor& img, int label) const = 0;

  int predict_label(const ImageTensor& img) const;
  std::vector<int> predict_labels(std::span<const ImageTensor> batch) const;
};

enum class Architecture { kSmallConvA, kSmallConvB };

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);

/// Convolutional desk-scale classifier, parameterized on arithmetic precision
/// so gradients can be cross-checked in double.
template <typename T>
class ConvClassifier final : public Classifier {
 public:
  ConvClassifier(Architecture arch, InputShape shape, int num_classes, ClassifierIdentity identity);

  const ClassifierIdentity& identity() const override { return identity_; }
  int num_classes() const override { return num_classes_; }
  InputShape input_shape() const override { return shape_; }
  Architecture architecture() const { return arch_; }

  std::vector<std::vector<float>> predict(std::span<const ImageTensor> batch) const override;
  std::vector<float> input_gradient(const ImageTensor& img, int label) const override;
  double loss(const ImageTensor& img, int label) const override;

  /// Logits for an NCHW batch.
  nn::Tensor<T> logits(const nn::Tensor<T>& batch) const { return net_.forward(batch); }

  /// He-normal initialization from `seed`.
  void initialize(std::uint64_t seed);
  /// Zero every weight and bias.
  void zero_parameters();

  nn::Sequential<T>& network() { return net_; }
  const nn::Sequential<T>& network() const { return net_; }
  std::size_t parameter_count() const { return net_.parameter_count(); }
  std::string layout() const;

  /// Same weights in another precision.
  template <typename U>
  ConvClassifier<U> cast() const {
    ConvClassifier<U> out(arch_, shape_, num_classes_, identity_);
    auto src = net_.parameters();
    auto dst = out.network().parameters();
    for (std::size_t k = 0; k < src.size(); ++k) {
      for (std::size_t i = 0; i < src[k]->size(); ++i) (*dst[k])[i] = static_cast<U>((*src[k])[i]);
    }
    return out;
  }

 private:
  void check_shape(const ImageTensor& img) const;

  Architecture arch_;
  InputShape shape_;
  int num_classes_;
  ClassifierIdentity identity_;
  nn::Sequential<T> net_;
};

extern template class ConvClassifier<float>;
extern template class ConvClassifier<double>;

struct TrainOptions {
  Architecture arch = Architecture::kSmallConvA;
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 1e-3;
  /// Learning rate is multiplied by this factor after every epoch.
  double lr_decay = 0.85;
  bool augment_flip = true;
  /// Random translation of up to this many pixels (zero padded); 0 disables.
  int augment_shift = 2;
  std::uint64_t seed = 1;
  std::string name = "classifier";
  std::string dataset_tag = "desk";
};

struct TrainReport {
  int epochs = 0;
  double final_test_accuracy = 0.0;
  double final_train_loss = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

struct TrainedClassifier {
  std::unique_ptr<ConvClassifier<float>> model;
  TrainReport report;
};

/// Deterministic given options.seed. Throws TrainingError when there are
/// fewer than two classes or no training images.
TrainedClassifier train_classifier(std::span<const LabeledImage> train,
                                   std::span<const LabeledImage> test, int num_classes,
                                   const TrainOptions& options);

/// Fraction of images whose argmax prediction equals the label.
double accuracy(const Classifier& model, std::span<const LabeledImage> set);

/// Versioned binary checkpoint: magic, JSON metadata, raw float32 weights.
void save_checkpoint(const ConvClassifier<float>& model, const TrainReport& report,
                     const std::filesystem::path& path);

struct LoadedClassifier {
  std::unique_ptr<ConvClassifier<float>> model;
  TrainReport report;
};

LoadedClassifier load_checkpoint(const std::filesystem::path& path);

}  // namespace faddefend
