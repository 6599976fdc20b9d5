#include "cotlab/recipe.hpp"

#include "cotlab/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace cotlab {

Exponent::Exponent(double value) : value_(value), infinite_(false) {
    if (std::isinf(value) && value > 0) {
        value_ = 0.0;
        infinite_ = true;
        return;
    }
    if (!std::isfinite(value) || value < 0.0)
        throw ConfigError("recipe exponent must be >= 0 or inf, got " + std::to_string(value));
}

double Exponent::power(double u) const noexcept {
    if (infinite_) return u >= 1.0 ? 1.0 : 0.0;
    if (value_ == 0.0) return 1.0;
    return std::pow(u, value_);
}

std::string Exponent::to_string() const {
    if (infinite_) return "inf";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value_);
    return std::string(buf, end);
}

Exponent Exponent::parse(const std::string& text) {
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "inf" || lower == "infinity" || lower == "+inf") return infinity();
    double v = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw ConfigError("cannot parse recipe exponent '" + text + "'");
    return Exponent(v);
}

double r_cot(const Recipe& recipe, std::uint64_t j, std::uint64_t T) {
    if (j >= T)
        throw InputError("r_cot: sequence index " + std::to_string(j) + " must be < T = " +
                         std::to_string(T));
    const double u = static_cast<double>(j) / static_cast<double>(T);
    return std::clamp(recipe.a * recipe.alpha.power(u) + recipe.b, 0.0, 1.0);
}

namespace {

// Neumaier-compensated sum of r_cot over j in [0, T).
double schedule_sum(const Recipe& recipe, std::uint64_t T) {
    double sum = 0.0;
    double comp = 0.0;
    for (std::uint64_t j = 0; j < T; ++j) {
        const double v = r_cot(recipe, j, T);
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            comp += (sum - t) + v;
        else
            comp += (v - t) + sum;
        sum = t;
    }
    return sum + comp;
}

double euler_maclaurin(const Exponent& alpha, double K, double T) {
    if (alpha.is_infinite()) return 0.0;
    const double a = alpha.value();
    const double tm1 = T - 1.0;
    return K / std::pow(T, a) *
           ((std::pow(tm1, a + 1.0) - 1.0) / (a + 1.0) + (std::pow(tm1, a) + 1.0) / 2.0);
}

}  // namespace

CotExampleCount expected_cot_examples(const Recipe& recipe, std::uint64_t K, std::uint64_t T) {
    if (!recipe.is_pure_power())
        throw InputError("expected_cot_examples requires a = 1 and b = 0");
    if (T < 2) throw InputError("expected_cot_examples requires T >= 2");
    const double k = static_cast<double>(K);
    CotExampleCount out;
    if (recipe.alpha.is_infinite()) return out;
    if (recipe.alpha.value() == 0.0)
        out.exact = k * static_cast<double>(T);
    else
        out.exact = k * schedule_sum(recipe, T);
    out.approx = euler_maclaurin(recipe.alpha, k, static_cast<double>(T));
    return out;
}

BudgetReport expected_tokens(const Recipe& recipe, std::uint64_t N, std::uint64_t C,
                             std::uint64_t K, std::uint64_t T) {
    if (N == 0 || C == 0 || K == 0 || T == 0)
        throw InputError("expected_tokens: N, C, K and T must be >= 1");
    BudgetReport report;
    report.params = {N, C, K, T, recipe};
    const double kt = static_cast<double>(K) * static_cast<double>(T);
    if (recipe.is_pure_power() && T >= 2) {
        const auto counts = expected_cot_examples(recipe, K, T);
        report.expected_cot_examples_exact = counts.exact;
        report.expected_cot_examples_approx = counts.approx;
    } else {
        report.expected_cot_examples_exact = static_cast<double>(K) * schedule_sum(recipe, T);
    }
    report.expected_standard_examples = kt - report.expected_cot_examples_exact;
    report.expected_tokens =
        static_cast<double>(T) +
        report.expected_cot_examples_exact * static_cast<double>(N + C + 7) +
        report.expected_standard_examples * static_cast<double>(N + 6);
    return report;
}

nlohmann::ordered_json recipe_to_json(const Recipe& r) {
    nlohmann::ordered_json j;
    if (r.alpha.is_infinite())
        j["alpha"] = "inf";
    else
        j["alpha"] = r.alpha.value();
    j["a"] = r.a;
    j["b"] = r.b;
    return j;
}

Recipe recipe_from_json(const nlohmann::json& j) {
    Recipe r;
    if (j.contains("alpha")) {
        const auto& a = j.at("alpha");
        if (a.is_string())
            r.alpha = Exponent::parse(a.get<std::string>());
        else if (a.is_number())
            r.alpha = Exponent(a.get<double>());
        else
            throw ConfigError("recipe.alpha must be a number or \"inf\"");
    }
    if (j.contains("a")) r.a = j.at("a").get<double>();
    if (j.contains("b")) r.b = j.at("b").get<double>();
    return r;
}

nlohmann::ordered_json budget_to_json(const BudgetReport& report) {
    nlohmann::ordered_json j;
    j["params"] = {{"n", report.params.n},
                   {"c", report.params.c},
                   {"k", report.params.k},
                   {"t", report.params.t},
                   {"recipe", recipe_to_json(report.params.recipe)}};
    j["expected_cot_examples_exact"] = report.expected_cot_examples_exact;
    if (report.expected_cot_examples_approx)
        j["expected_cot_examples_approx"] = *report.expected_cot_examples_approx;
    else
        j["expected_cot_examples_approx"] = nullptr;
    j["expected_standard_examples"] = report.expected_standard_examples;
    j["expected_tokens"] = report.expected_tokens;
    return j;
}

}  // namespace cotlab
