#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hypo/model.hpp"
#include "hypo/models/fitzhugh_nagumo.hpp"
#include "hypo/models/jansen_rit.hpp"
#include "hypo/models/linear_sdhs.hpp"
#include "hypo/models/ou.hpp"
#include "hypo/models/scalar_test_models.hpp"
#include "hypo/models/sir_log.hpp"

namespace hypo {

/// Overrides of default parameter values. Named parameters become frozen for estimation;
/// the key "N" sets the SIR population size.
using FixedParams = std::map<std::string, double>;

/// Names accepted by builtin_model (aliases "fn" and "jr" are also accepted).
inline std::vector<std::string> builtin_model_names() {
    return {"ou",          "linear_sdhs",         "fitzhugh_nagumo",      "jansen_rit",
            "sir_log",     "fitzhugh_nagumo_sdhs", "quadratic_diffusion", "constant_coefficients"};
}

inline std::string canonical_model_name(const std::string& name) {
    if (name == "fn") return "fitzhugh_nagumo";
    if (name == "jr") return "jansen_rit";
    return name;
}

namespace detail {

template <class M>
std::shared_ptr<const Model> make_adapter(M impl, const FixedParams& fixed) {
    std::vector<ParamInfo> params = impl.parameters();
    for (const auto& [key, value] : fixed) {
        if (key == "N") {
            if constexpr (requires { impl.population; }) {
                impl.population = value;
                continue;
            }
        }
        bool found = false;
        for (auto& p : params)
            if (p.name == key) {
                p.default_value = value;
                p.free = false;
                found = true;
            }
        if (!found) throw InvalidArgument("model '" + impl.name() + "' has no parameter '" + key + "'");
    }
    return std::make_shared<ModelAdapter<M>>(std::move(impl), std::move(params));
}

}  // namespace detail

/// Constructs a builtin model with exact derivatives.
inline std::shared_ptr<const Model> builtin_model(const std::string& name,
                                                  const FixedParams& fixed = {}) {
    const std::string n = canonical_model_name(name);
    if (n == "ou") return detail::make_adapter(models::OrnsteinUhlenbeck{}, fixed);
    if (n == "linear_sdhs") return detail::make_adapter(models::LinearSdhs{}, fixed);
    if (n == "fitzhugh_nagumo") return detail::make_adapter(models::FitzHughNagumo{}, fixed);
    if (n == "fitzhugh_nagumo_sdhs") return detail::make_adapter(models::FitzHughNagumoSdhs{}, fixed);
    if (n == "jansen_rit") return detail::make_adapter(models::JansenRit{}, fixed);
    if (n == "sir_log") return detail::make_adapter(models::SirLog{}, fixed);
    if (n == "quadratic_diffusion") return detail::make_adapter(models::QuadraticDiffusion{}, fixed);
    if (n == "constant_coefficients")
        return detail::make_adapter(models::ConstantCoefficients{}, fixed);
    throw InvalidArgument("unknown model '" + name + "'");
}

/// Calls fn(impl) with the static model behind a builtin runtime model. Returns false if none.
template <class Fn>
bool visit_static_model(const Model& model, Fn&& fn) {
    auto try_one = [&]<class M>(M*) {
        if (auto* p = dynamic_cast<const ModelAdapter<M>*>(&model)) {
            fn(p->impl());
            return true;
        }
        return false;
    };
    return try_one(static_cast<models::OrnsteinUhlenbeck*>(nullptr)) ||
           try_one(static_cast<models::LinearSdhs*>(nullptr)) ||
           try_one(static_cast<models::FitzHughNagumo*>(nullptr)) ||
           try_one(static_cast<models::FitzHughNagumoSdhs*>(nullptr)) ||
           try_one(static_cast<models::JansenRit*>(nullptr)) ||
           try_one(static_cast<models::SirLog*>(nullptr)) ||
           try_one(static_cast<models::QuadraticDiffusion*>(nullptr)) ||
           try_one(static_cast<models::ConstantCoefficients*>(nullptr));
}

}  // namespace hypo
