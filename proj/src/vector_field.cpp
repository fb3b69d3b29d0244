#include "roughwz/vector_field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "roughwz/errors.hpp"
#include "roughwz/rng.hpp"

namespace roughwz {

std::size_t VectorFieldModel::tensor_size(int order) const {
    std::size_t n = state_dim();
    for (int l = 0; l < order; ++l) n *= state_dim();
    return n;
}

std::vector<double> VectorFieldModel::derivatives(std::span<const double> y, int order) const {
    std::vector<double> out(field_count() * tensor_size(order));
    derivatives(y, order, out);
    return out;
}

AffineModel::AffineModel(Eigen::MatrixXd sigma, Eigen::MatrixXd drift_matrix, Eigen::VectorXd drift_offset,
                         std::string name)
    : sigma_(std::move(sigma)), drift_matrix_(std::move(drift_matrix)), drift_offset_(std::move(drift_offset)),
      name_(std::move(name)) {
    const auto e = sigma_.rows();
    if (e == 0 || sigma_.cols() == 0) throw ConfigError("affine model needs a non-empty sigma");
    if (drift_matrix_.rows() != e || drift_matrix_.cols() != e) throw ConfigError("drift matrix must be e x e");
    if (drift_offset_.size() != e) throw ConfigError("drift offset must have length e");
}

void AffineModel::derivatives(std::span<const double> y, int order, std::span<double> out) const {
    const std::size_t e = state_dim(), d = driver_dim();
    const std::size_t block = tensor_size(order);
    if (out.size() != (d + 1) * block) throw ConfigError("derivative buffer has the wrong size");
    std::fill(out.begin(), out.end(), 0.0);
    if (order == 0) {
        for (std::size_t f = 0; f < d; ++f)
            for (std::size_t i = 0; i < e; ++i)
                out[f * block + i] = sigma_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
        for (std::size_t i = 0; i < e; ++i) {
            double v = drift_offset_[static_cast<Eigen::Index>(i)];
            for (std::size_t a = 0; a < e; ++a)
                v += drift_matrix_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) * y[a];
            out[d * block + i] = v;
        }
    } else if (order == 1) {
        for (std::size_t i = 0; i < e; ++i)
            for (std::size_t a = 0; a < e; ++a)
                out[d * block + i * e + a] = drift_matrix_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a));
    }
}

nlohmann::json AffineModel::describe() const {
    auto rows = [](const Eigen::MatrixXd& m) {
        nlohmann::json j = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            j.push_back(row);
        }
        return j;
    };
    nlohmann::json offset = nlohmann::json::array();
    for (Eigen::Index i = 0; i < drift_offset_.size(); ++i) offset.push_back(drift_offset_[i]);
    return {{"preset", name_},
            {"family", "affine"},
            {"sigma", rows(sigma_)},
            {"drift_matrix", rows(drift_matrix_)},
            {"drift_offset", offset}};
}

TrigModel::TrigModel(std::size_t state_dim, std::size_t driver_dim, std::vector<std::vector<TrigTerm>> terms,
                     std::string name)
    : e_(state_dim), d_(driver_dim), terms_(std::move(terms)), name_(std::move(name)) {
    if (e_ == 0 || d_ == 0) throw ConfigError("trig model needs positive dimensions");
    if (terms_.size() != d_ + 1) throw ConfigError("trig model needs d + 1 fields (sigma columns, then drift)");
    for (const auto& field : terms_) {
        if (field.size() != e_) throw ConfigError("each trig field needs e components");
        for (const auto& t : field)
            if (t.frequency.size() != e_) throw ConfigError("trig frequency vectors must have length e");
    }
}

void TrigModel::derivatives(std::span<const double> y, int order, std::span<double> out) const {
    const std::size_t block = tensor_size(order);
    if (out.size() != (d_ + 1) * block) throw ConfigError("derivative buffer has the wrong size");
    const std::size_t per_component = block / e_;
    std::vector<std::size_t> digits(static_cast<std::size_t>(order));
    for (std::size_t f = 0; f <= d_; ++f) {
        for (std::size_t i = 0; i < e_; ++i) {
            const TrigTerm& term = terms_[f][i];
            double arg = term.phase;
            for (std::size_t a = 0; a < e_; ++a) arg += term.frequency[a] * y[a];
            // d^l sin(theta) = sin(theta + l pi / 2)
            const double scale = term.amplitude * std::sin(arg + order * std::numbers::pi / 2.0);
            double* dst = out.data() + f * block + i * per_component;
            if (order == 0) {
                dst[0] = term.offset + scale;
                continue;
            }
            for (std::size_t flat = 0; flat < per_component; ++flat) {
                std::size_t rem = flat;
                double prod = scale;
                for (int m = order - 1; m >= 0; --m) {
                    prod *= term.frequency[rem % e_];
                    rem /= e_;
                }
                dst[flat] = prod;
            }
        }
    }
}

std::vector<double> TrigModel::derivative_bounds(int order) const {
    std::vector<double> bounds(static_cast<std::size_t>(order) + 1, 0.0);
    for (int l = 0; l <= order; ++l) {
        for (const auto& field : terms_)
            for (const auto& t : field) {
                double knorm = 0.0;
                for (double k : t.frequency) knorm += k * k;
                const double v = std::abs(t.amplitude) * std::pow(std::sqrt(knorm), l) + (l == 0 ? std::abs(t.offset) : 0.0);
                bounds[static_cast<std::size_t>(l)] += v;
            }
    }
    return bounds;
}

nlohmann::json TrigModel::describe() const {
    nlohmann::json fields = nlohmann::json::array();
    for (const auto& field : terms_) {
        nlohmann::json comps = nlohmann::json::array();
        for (const auto& t : field)
            comps.push_back({{"offset", t.offset}, {"amp", t.amplitude}, {"k", t.frequency}, {"phase", t.phase}});
        fields.push_back(comps);
    }
    return {{"preset", name_}, {"family", "trig"}, {"state_dim", e_}, {"driver_dim", d_}, {"fields", fields}};
}

namespace {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("expected a non-empty matrix (array of rows)");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols)
            throw ConfigError("ragged matrix in model parameters");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

TrigTerm term(double offset, double amp, std::vector<double> k, double phase) {
    return TrigTerm{offset, amp, std::move(k), phase};
}

// Elliptic, non-commuting 2x2 preset used by the rate studies.
std::vector<std::vector<TrigTerm>> bounded_2x2() {
    constexpr double half_pi = std::numbers::pi / 2.0;
    return {
        {term(1.0, 0.3, {0.0, 1.0}, 0.0), term(0.0, 0.4, {1.0, 0.0}, half_pi)},
        {term(0.0, 0.3, {1.0, 1.0}, 0.0), term(1.0, 0.25, {0.0, 1.0}, half_pi)},
        {term(0.0, 0.2, {1.0, 0.0}, 0.0), term(0.0, -0.1, {0.0, 1.0}, 0.0)},
    };
}

std::vector<std::vector<TrigTerm>> random_bounded(std::size_t e, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(stream_seed(seed, 0));
    std::uniform_real_distribution<double> amp(0.1, 0.4), freq(-1.0, 1.0), phase(0.0, 2.0 * std::numbers::pi);
    std::vector<std::vector<TrigTerm>> terms(d + 1, std::vector<TrigTerm>(e));
    for (std::size_t f = 0; f <= d; ++f)
        for (std::size_t i = 0; i < e; ++i) {
            std::vector<double> k(e);
            for (auto& v : k) v = freq(rng);
            const double offset = (f < d && f == i) ? 1.0 : 0.0;
            const double a = f == d ? 0.5 * amp(rng) : amp(rng);
            terms[f][i] = term(offset, a, std::move(k), phase(rng));
        }
    return terms;
}

}  // namespace

std::shared_ptr<const VectorFieldModel> make_model(const std::string& preset, const nlohmann::json& params) {
    const nlohmann::json p = params.is_null() ? nlohmann::json::object() : params;
    if (preset == "identity") {
        const auto e = p.value("dim", 1);
        if (e < 1) throw ConfigError("identity model needs dim >= 1");
        return std::make_shared<AffineModel>(Eigen::MatrixXd::Identity(e, e), Eigen::MatrixXd::Zero(e, e),
                                             Eigen::VectorXd::Zero(e), "identity");
    }
    if (preset == "ou") {
        const auto e = p.value("dim", 1);
        const double theta = p.value("theta", 1.0), sigma = p.value("sigma", 1.0);
        if (e < 1) throw ConfigError("ou model needs dim >= 1");
        return std::make_shared<AffineModel>(sigma * Eigen::MatrixXd::Identity(e, e),
                                             -theta * Eigen::MatrixXd::Identity(e, e), Eigen::VectorXd::Zero(e), "ou");
    }
    if (preset == "affine") {
        if (!p.contains("sigma")) throw ConfigError("affine model needs 'sigma'");
        Eigen::MatrixXd sigma = matrix_from_json(p.at("sigma"));
        const auto e = sigma.rows();
        Eigen::MatrixXd a = p.contains("A") ? matrix_from_json(p.at("A")) : Eigen::MatrixXd::Zero(e, e);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(e);
        if (p.contains("c")) {
            const auto v = p.at("c").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(v.size()) != e) throw ConfigError("affine 'c' must have length e");
            for (Eigen::Index i = 0; i < e; ++i) c[i] = v[static_cast<std::size_t>(i)];
        }
        return std::make_shared<AffineModel>(std::move(sigma), std::move(a), std::move(c), "affine");
    }
    if (preset == "cosine") {
        // sigma(y) = cos(y) on R^1, optional drift amplitude * sin(y)
        const double drift = p.value("drift", 0.0);
        std::vector<std::vector<TrigTerm>> terms = {{term(0.0, 1.0, {1.0}, std::numbers::pi / 2.0)},
                                                    {term(0.0, drift, {1.0}, 0.0)}};
        return std::make_shared<TrigModel>(1, 1, std::move(terms), "cosine");
    }
    if (preset == "bounded") {
        const auto e = p.value("state_dim", 2);
        const auto d = p.value("driver_dim", 2);
        if (e < 1 || d < 1) throw ConfigError("bounded model needs positive dimensions");
        if (e == 2 && d == 2 && !p.contains("coeff_seed"))
            return std::make_shared<TrigModel>(2, 2, bounded_2x2(), "bounded");
        const auto seed = p.value("coeff_seed", std::uint64_t{7});
        return std::make_shared<TrigModel>(static_cast<std::size_t>(e), static_cast<std::size_t>(d),
                                           random_bounded(static_cast<std::size_t>(e), static_cast<std::size_t>(d), seed),
                                           "bounded");
    }
    if (preset == "trig") {
        const auto e = p.at("state_dim").get<std::size_t>();
        const auto d = p.at("driver_dim").get<std::size_t>();
        std::vector<std::vector<TrigTerm>> terms;
        for (const auto& field : p.at("fields")) {
            std::vector<TrigTerm> comps;
            for (const auto& c : field)
                comps.push_back(term(c.value("offset", 0.0), c.value("amp", 0.0), c.at("k").get<std::vector<double>>(),
                                     c.value("phase", 0.0)));
            terms.push_back(std::move(comps));
        }
        return std::make_shared<TrigModel>(e, d, std::move(terms), "trig");
    }
    throw ConfigError("unknown model preset '" + preset + "'");
}

std::shared_ptr<const VectorFieldModel> make_model(const nlohmann::json& spec) {
    if (spec.is_string()) return make_model(spec.get<std::string>());
    if (!spec.is_object() || !spec.contains("preset")) throw ConfigError("model spec needs a 'preset' name");
    return make_model(spec.at("preset").get<std::string>(), spec.value("params", nlohmann::json::object()));
}

}  // namespace roughwz
