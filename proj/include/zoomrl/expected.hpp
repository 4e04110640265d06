#pragma once

#include <stdexcept>
#include <utility>
#include <variant>

namespace zoomrl {

// Minimal expected-like result. Parse and validation failures are data
// (they feed the format reward), not exceptions.
template <typename T, typename E>
class Expected {
 public:
  Expected(T value) : data_(std::in_place_index<0>, std::move(value)) {}
  Expected(E error) : data_(std::in_place_index<1>, std::move(error)) {}

  bool has_value() const { return data_.index() == 0; }
  explicit operator bool() const { return has_value(); }

  const T& value() const {
    if (!has_value()) throw std::logic_error("Expected: no value");
    return std::get<0>(data_);
  }
  T& value() {
    if (!has_value()) throw std::logic_error("Expected: no value");
    return std::get<0>(data_);
  }
  const E& error() const {
    if (has_value()) throw std::logic_error("Expected: no error");
    return std::get<1>(data_);
  }

 private:
  std::variant<T, E> data_;
};

}  // namespace zoomrl
