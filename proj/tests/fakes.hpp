// Hand-built models with known predictions.
#pragma once

#include <memory>

#include "stabcp/models.hpp"

namespace fakes {

using stabcp::Index;
using stabcp::Matrix;
using stabcp::Vector;

class ConstantModel : public stabcp::FittedModel {
 public:
  ConstantModel(Index dim, double value) : dim_(dim), value_(value) {}
  Index dim() const override { return dim_; }
  double predict(const Eigen::Ref<const Vector>&) const override { return value_; }

 private:
  Index dim_;
  double value_;
};

/// Predicts `value` regardless of the data; perfectly stable (tau = 0).
class ConstantRegressor : public stabcp::Regressor {
 public:
  explicit ConstantRegressor(double value = 0.0) : value_(value) {}
  std::string name() const override { return "constant"; }
  std::shared_ptr<const stabcp::FittedModel> fit(const Matrix& x,
                                                 const Vector&) const override {
    return std::make_shared<ConstantModel>(x.cols(), value_);
  }
  stabcp::RegularityConstants regularity(const stabcp::TabularDataset&,
                                         stabcp::Range) const override {
    return {};
  }

 private:
  double value_;
};

/// Predicts the mean of the training targets (z enters with weight 1/(n+1)).
class MeanRegressor : public stabcp::Regressor {
 public:
  std::string name() const override { return "mean"; }
  std::shared_ptr<const stabcp::FittedModel> fit(const Matrix& x,
                                                 const Vector& y) const override {
    return std::make_shared<ConstantModel>(x.cols(), y.mean());
  }
  stabcp::RegularityConstants regularity(const stabcp::TabularDataset&,
                                         stabcp::Range) const override {
    return {};
  }
};

}  // namespace fakes
