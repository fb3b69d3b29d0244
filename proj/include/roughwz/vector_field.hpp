#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace roughwz {

class AffineModel;

/// Coefficients (sigma, b) = ([V_1..V_d], V_0) of dy = sigma(y) dw + b(y) dt.
///
/// Fields are indexed 0..d-1 for the columns of sigma and d for the drift,
/// so the drift behaves like an extra driver coordinate with unit slope.
/// Implementations must be safe to call concurrently.
class VectorFieldModel {
public:
    virtual ~VectorFieldModel() = default;

    virtual std::size_t state_dim() const = 0;
    virtual std::size_t driver_dim() const = 0;
    /// Highest derivative order the evaluators support.
    virtual int derivative_order() const = 0;

    /// Order-l derivative tensors of all d+1 fields at y. Block f holds
    /// e^{l+1} entries laid out as [i][a_1]...[a_l] = d^l V_f^i / dy_{a_1}..dy_{a_l}.
    virtual void derivatives(std::span<const double> y, int order, std::span<double> out) const = 0;

    virtual std::string name() const = 0;
    virtual nlohmann::json describe() const = 0;
    /// Non-null for the constant-sigma / affine-drift family.
    virtual const AffineModel* as_affine() const { return nullptr; }

    std::size_t field_count() const { return driver_dim() + 1; }
    std::size_t tensor_size(int order) const;
    /// Convenience: d+1 blocks of order-l tensors in a fresh vector.
    std::vector<double> derivatives(std::span<const double> y, int order) const;
};

/// sigma(y) = S (e x d, constant), b(y) = A y + c.
class AffineModel final : public VectorFieldModel {
public:
    AffineModel(Eigen::MatrixXd sigma, Eigen::MatrixXd drift_matrix, Eigen::VectorXd drift_offset,
                std::string name = "affine");

    std::size_t state_dim() const override { return static_cast<std::size_t>(sigma_.rows()); }
    std::size_t driver_dim() const override { return static_cast<std::size_t>(sigma_.cols()); }
    int derivative_order() const override { return 16; }
    void derivatives(std::span<const double> y, int order, std::span<double> out) const override;
    std::string name() const override { return name_; }
    nlohmann::json describe() const override;
    const AffineModel* as_affine() const override { return this; }

    const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
    const Eigen::MatrixXd& drift_matrix() const noexcept { return drift_matrix_; }
    const Eigen::VectorXd& drift_offset() const noexcept { return drift_offset_; }

private:
    Eigen::MatrixXd sigma_;
    Eigen::MatrixXd drift_matrix_;
    Eigen::VectorXd drift_offset_;
    std::string name_;
};

/// One smooth bounded term offset + amplitude * sin(<k, y> + phase).
struct TrigTerm {
    double offset = 0.0;
    double amplitude = 0.0;
    std::vector<double> frequency;
    double phase = 0.0;
};

/// Every component of every field is a single TrigTerm; bounded with all
/// derivatives bounded (C_b^infinity).
class TrigModel final : public VectorFieldModel {
public:
    /// terms[f][i]: field f (0..d-1 sigma columns, d drift), component i.
    TrigModel(std::size_t state_dim, std::size_t driver_dim, std::vector<std::vector<TrigTerm>> terms,
              std::string name = "trig");

    std::size_t state_dim() const override { return e_; }
    std::size_t driver_dim() const override { return d_; }
    int derivative_order() const override { return 16; }
    void derivatives(std::span<const double> y, int order, std::span<double> out) const override;
    std::string name() const override { return name_; }
    nlohmann::json describe() const override;

    /// sup over y of |d^l V| summed over fields, for l = 0..order.
    std::vector<double> derivative_bounds(int order) const;

private:
    std::size_t e_, d_;
    std::vector<std::vector<TrigTerm>> terms_;
    std::string name_;
};

/// Presets by name: identity, ou, affine, cosine, bounded, trig.
std::shared_ptr<const VectorFieldModel> make_model(const std::string& preset, const nlohmann::json& params = {});
std::shared_ptr<const VectorFieldModel> make_model(const nlohmann::json& spec);
inline std::shared_ptr<const VectorFieldModel> make_model(const char* preset, const nlohmann::json& params = {}) {
    return make_model(std::string(preset), params);
}

}  // namespace roughwz
