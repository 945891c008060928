#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace driftlab::nn {

using Shape = std::vector<std::size_t>;

// Cache-line aligned storage. Vectorized kernels peel differently depending on
// the start address, so a fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t n) noexcept { ::operator delete(p, n * sizeof(T), kAlign); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

[[nodiscard]] std::size_t shape_size(const Shape& shape);
[[nodiscard]] std::string shape_string(const Shape& shape);

/// Dense row-major float64 array with an optional gradient buffer of the same
/// shape. Value semantics: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t dim(std::size_t axis) const;
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    // rank-2 helpers
    [[nodiscard]] std::size_t rows() const;
    [[nodiscard]] std::size_t cols() const;
    [[nodiscard]] double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    [[nodiscard]] std::span<double> row(std::size_t r);
    [[nodiscard]] std::span<const double> row(std::size_t r) const;

    [[nodiscard]] double& operator[](std::size_t i) { return data_[i]; }
    [[nodiscard]] double operator[](std::size_t i) const { return data_[i]; }
    [[nodiscard]] double item() const;

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::vector<double> values() const { return {data_.begin(), data_.end()}; }

    // Gradient slot. Allocated (zero-filled) on first request.
    [[nodiscard]] bool has_grad() const noexcept { return grad_.size() == data_.size() && !data_.empty(); }
    std::span<double> ensure_grad();
    [[nodiscard]] std::span<const double> grad() const;
    void zero_grad();
    void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

    /// Gather rows of a rank-2 tensor.
    [[nodiscard]] Tensor select_rows(std::span<const std::size_t> indices) const;

    /// Exact equality of shape and values (grad ignored).
    [[nodiscard]] bool same_values(const Tensor& other) const;

private:
    Shape shape_;
    Buffer data_;
    Buffer grad_;
};

}  // namespace driftlab::nn
