#pragma once

#include <string>
#include <vector>

#include "foveal/tensor.hpp"

namespace foveal {

// Images keep their own sizes; each is C x H x W with values in [0, 1].
struct LabeledImageSet {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  std::size_t class_count() const { return class_names.size(); }

  void validate() const {
    if (images.size() != labels.size())
      throw Error("dataset has " + std::to_string(images.size()) + " images but " +
                  std::to_string(labels.size()) + " labels");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= class_names.size())
        throw Error("label " + std::to_string(y) + " outside [0," + std::to_string(class_names.size()) + ")");
    for (const auto& img : images)
      if (img.rank() != 3) throw Error("dataset image must be C x H x W, got " + shape_str(img.shape()));
  }

  void push(Tensor image, int label) {
    images.push_back(std::move(image));
    labels.push_back(label);
  }
};

inline std::vector<std::string> numbered_classes(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back(std::to_string(i));
  return names;
}

}  // namespace foveal
