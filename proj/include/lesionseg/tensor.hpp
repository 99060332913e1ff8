#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "lesionseg/error.hpp"

namespace lesionseg {

// Dense row-major f32 array, rank 1..4. Feature maps are rank 4 (n, c, h, w);
// biases and batch-norm vectors are rank 1. Missing trailing dims read as 1.
struct Tensor {
    int rank = 0;
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<float> data;

    Tensor() = default;

    Tensor(int n, int c, int h, int w, float fill = 0.0f)
        : rank(4), shape{n, c, h, w},
          data(static_cast<std::size_t>(n) * c * h * w, fill) {}

    static Tensor vec(int len, float fill = 0.0f) {
        Tensor t;
        t.rank = 1;
        t.shape = {len, 1, 1, 1};
        t.data.assign(static_cast<std::size_t>(len), fill);
        return t;
    }

    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }

    std::size_t size() const { return data.size(); }

    float& at(int in, int ic, int iy, int ix) {
        return data[((static_cast<std::size_t>(in) * shape[1] + ic) * shape[2] + iy) * shape[3] + ix];
    }
    const float& at(int in, int ic, int iy, int ix) const {
        return data[((static_cast<std::size_t>(in) * shape[1] + ic) * shape[2] + iy) * shape[3] + ix];
    }

    bool same_shape(const Tensor& o) const { return rank == o.rank && shape == o.shape; }

    void fill(float v) { data.assign(data.size(), v); }

    std::string shape_str() const {
        std::string s = "(";
        for (int i = 0; i < rank; ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

// Ordered name -> Tensor table. Iteration follows insertion order so that
// serialization, SGD updates and parameter enumeration are all deterministic.
class TensorTable {
public:
    void add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw Error("duplicate tensor name: " + name);
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(t));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("no tensor named: " + name);
        return items_[it->second].second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("no tensor named: " + name);
        return items_[it->second].second;
    }

    std::size_t size() const { return items_.size(); }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace lesionseg
