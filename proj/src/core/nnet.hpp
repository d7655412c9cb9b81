#pragma once

// Small dense-MLP engine: batched forward passes with forward-mode input
// tangents, reverse-mode parameter gradients (including gradients of the
// tangents themselves), Adam, and positional encoding.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace repsample {

enum class Activation { SiLU, ReLU };
enum class OutputActivation { None, Exp, SoftplusLast };
enum class InitKind { Standard, Identity };

struct MlpSpec {
    std::vector<std::size_t> layer_sizes; // input first, output last
    Activation hidden = Activation::SiLU;
    OutputActivation output = OutputActivation::None;
    InitKind init = InitKind::Standard;

    // Throws InvalidArgument unless there is at least one hidden layer and all sizes are >= 1.
    void validate() const;

    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t param_count() const;
    // Layout per layer: weights (out x in, row-major) then biases; layers in order.
    std::size_t weight_offset(std::size_t layer) const;
    std::size_t bias_offset(std::size_t layer) const;

    bool operator==(const MlpSpec &) const = default;
};

struct MlpParams {
    MlpSpec spec;
    std::vector<double> values;
};

// Feature-major block: rows are features, columns are samples; each row is
// contiguous so per-feature loops run over the batch.
class Block {
  public:
    Block() = default;
    Block(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    void resize(std::size_t rows, std::size_t cols) {
        rows_ = rows;
        cols_ = cols;
        if (data_.size() < rows * cols) data_.resize(rows * cols);
    }
    Block(const Block &o) : rows_(o.rows_), cols_(o.cols_), data_(o.data_.begin(), o.data_.begin() + o.rows_ * o.cols_) {}
    Block(Block &&) noexcept = default;
    Block &operator=(Block &&) noexcept = default;
    // Reuses storage so a later grow does not re-zero memory.
    Block &operator=(const Block &o) {
        if (this != &o) {
            resize(o.rows_, o.cols_);
            std::copy(o.data_.begin(), o.data_.begin() + o.rows_ * o.cols_, data_.begin());
        }
        return *this;
    }
    void set_zero(std::size_t rows, std::size_t cols) {
        resize(rows, cols);
        std::fill(data_.begin(), data_.begin() + rows * cols, 0.0);
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double *row(std::size_t r) { return data_.data() + r * cols_; }
    const double *row(std::size_t r) const { return data_.data() + r * cols_; }
    double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

// Evaluation record for a batch of inputs (one column per sample). Keeps every
// intermediate needed by backward(). Reusable across calls of the same shape.
class MlpTape {
  public:
    // inputs: input_dim x batch. wrt: input indices to propagate tangents for.
    void forward(const MlpParams &params, const Block &inputs, std::span<const std::size_t> wrt = {});

    const Block &output() const { return post_.back(); }
    // d output / d input[wrt[k]], output_dim x batch.
    const Block &output_tangent(std::size_t k) const { return post_tan_[k].back(); }
    std::size_t num_tangents() const { return wrt_.size(); }

    // Accumulates (+=) into grad the parameter gradient of
    //   sum_b <out_adj_b, y_b> + sum_k <tangent_adj[k]_b, dy_b/dx_k>.
    // tangent_adj may be empty (no tangent contribution).
    void backward(const MlpParams &params, const Block &out_adj, std::span<const Block> tangent_adj,
                  std::span<double> grad);

  private:
    Block input_;
    std::vector<std::size_t> wrt_;
    std::vector<Block> pre_, post_;
    std::vector<Block> deriv1_, deriv2_; // activation derivatives at pre_
    std::vector<std::vector<Block>> pre_tan_, post_tan_; // [k][layer]
    // backward scratch
    Block adj_, next_adj_;
    std::vector<Block> tan_adj_, next_tan_adj_;
};

std::vector<double> forward(const MlpParams &params, std::span<const double> input);

struct ForwardJacobian {
    std::vector<double> output;
    std::vector<double> jacobian; // output_dim x wrt.size(), row-major
};

ForwardJacobian forward_with_input_jacobian(const MlpParams &params, std::span<const double> input,
                                            std::span<const std::size_t> wrt);

// Parameter gradient of <upstream, forward(params, input)>.
std::vector<double> backward(const MlpParams &params, std::span<const double> input,
                             std::span<const double> upstream);

// concat(v, [sin(2^k pi v_j), cos(2^k pi v_j)] for k < num_freqs, j < |v|).
std::vector<double> positional_encode(std::span<const double> v, int num_freqs);
inline std::size_t encoded_size(std::size_t dim, int num_freqs) {
    return dim * (1 + 2 * static_cast<std::size_t>(num_freqs));
}

MlpParams init_params(const MlpSpec &spec, std::uint64_t seed);

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t t = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::optional<double> max_grad_norm;

    AdamState() = default;
    AdamState(std::size_t n, double lr, std::optional<double> clip = std::nullopt)
        : m(n, 0.0), v(n, 0.0), learning_rate(lr), max_grad_norm(clip) {}
};

// One Adam update with bias correction. Gradients are rescaled to global L2
// norm max_grad_norm first when clipping is configured. Returns the applied
// scale factor (1 when not clipped). Throws TrainingDiverged on non-finite
// gradients (step index = state.t).
double adam_step(AdamState &state, std::span<double> params, std::span<const double> grads);

double global_norm(std::span<const double> v);

} // namespace repsample
